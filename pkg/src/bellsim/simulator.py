"""Trial-by-trial experiment engine.

Determinism contract: the random numbers of trial ``i`` are the Philox
blocks ``3i, 3i+1, 3i+2`` under a key derived from the seed alone.  Any
split of the trial range over workers or partial runs therefore sees the
same per-trial draws, and counts merge to the same table.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numba
import numpy as np

from .core import (
    PAIR_LABELS,
    ConsistencyError,
    EstimateWithError,
    JointProbabilitySet,
    SettingsQuad,
    UndefinedConditionalError,
    ZeroDenominatorError,
)
from .models import (
    N_UNIFORMS,
    SLOT_SIDE1,
    SLOT_SIDE2,
    ModelSpec,
    draw_detections,
    draw_outcomes,
)

SETTING_POLICIES = ("fixedPerBlock", "randomPerTrial")

# trials generated per vectorized batch; part of no result, only of memory use
CHUNK_TRIALS = 1 << 16

_PHILOX_WORDS_PER_BLOCK = 4
_BLOCKS_PER_TRIAL = N_UNIFORMS // _PHILOX_WORDS_PER_BLOCK


class ConfigError(ValueError):
    pass


class UnsortedInputError(ValueError):
    pass


class EmptyRowError(ValueError):
    pass


def philox_key(seed: int) -> np.ndarray:
    if not 0 <= int(seed) < 2 ** 64:
        raise ConfigError(f"seed {seed!r} is not a 64-bit unsigned integer")
    return np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)


def trial_uniforms(seed: int, start: int, stop: int) -> np.ndarray:
    """Uniforms in [0, 1) for trials [start, stop), shape (stop - start, 12)."""
    n = stop - start
    if n <= 0:
        return np.empty((0, N_UNIFORMS))
    bitgen = np.random.Philox(key=philox_key(seed), counter=start * _BLOCKS_PER_TRIAL)
    raw = bitgen.random_raw(n * N_UNIFORMS)
    # top 53 bits -> double in [0, 1)
    return ((raw >> np.uint64(11)).astype(np.float64) * 2.0 ** -53).reshape(n, N_UNIFORMS)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    quad: SettingsQuad
    trials_per_pair: int
    setting_policy: str = "fixedPerBlock"
    coincidence_window: float = 1e-9
    seed: int = 0
    workers: int = 1
    # emission spacing between consecutive pairs, seconds
    pair_interval: float = 1e-6

    def __post_init__(self):
        if int(self.trials_per_pair) != self.trials_per_pair or self.trials_per_pair < 1:
            raise ConfigError("trials_per_pair must be a positive integer")
        if self.setting_policy not in SETTING_POLICIES:
            raise ConfigError(f"setting_policy must be one of {SETTING_POLICIES}")
        if not self.coincidence_window > 0.0:
            raise ConfigError("coincidence_window must be > 0")
        if not self.pair_interval > 0.0:
            raise ConfigError("pair_interval must be > 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        philox_key(self.seed)

    @property
    def total_trials(self) -> int:
        return 4 * self.trials_per_pair


@dataclass(frozen=True)
class CountsRow:
    n_pairs: int = 0
    singles1: int = 0
    singles2: int = 0
    coincidences: int = 0

    def __post_init__(self):
        if min(self.n_pairs, self.singles1, self.singles2, self.coincidences) < 0:
            raise ValueError("counts must be >= 0")
        if not (self.coincidences <= min(self.singles1, self.singles2)
                and max(self.singles1, self.singles2) <= self.n_pairs):
            raise ValueError(f"inconsistent counts row {self}")

    def __add__(self, other: CountsRow) -> CountsRow:
        return CountsRow(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))


@dataclass(frozen=True)
class CountsTable:
    """Counts for the setting pairs (a,b), (a,b'), (a',b), (a',b')."""

    quad: SettingsQuad
    rows: tuple[CountsRow, CountsRow, CountsRow, CountsRow] = field(
        default_factory=lambda: (CountsRow(),) * 4)

    def __post_init__(self):
        if len(self.rows) != 4:
            raise ValueError("a counts table has exactly four rows")
        object.__setattr__(self, "rows", tuple(self.rows))

    @classmethod
    def empty(cls, quad: SettingsQuad) -> CountsTable:
        return cls(quad)

    @property
    def total_pairs(self) -> int:
        return sum(r.n_pairs for r in self.rows)

    def row(self, label1: str, label2: str) -> CountsRow:
        return self.rows[PAIR_LABELS.index((label1, label2))]

    def as_dict(self) -> dict:
        return {
            f"{l1},{l2}": {f.name: getattr(r, f.name) for f in fields(r)}
            for (l1, l2), r in zip(PAIR_LABELS, self.rows)
        }


def merge_counts(parts: Sequence[CountsTable]) -> CountsTable:
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to merge")
    quad = parts[0].quad
    if any(p.quad != quad for p in parts):
        raise ConsistencyError("cannot merge counts taken with different settings")
    rows = list(parts[0].rows)
    for p in parts[1:]:
        rows = [x + y for x, y in zip(rows, p.rows)]
    return CountsTable(quad, tuple(rows))


@numba.njit(cache=True)
def _greedy_pairing(t1, t2, window, delay):
    half = 0.5 * window
    j = 0
    n2 = t2.shape[0]
    matched = 0
    for i in range(t1.shape[0]):
        lo = t1[i] + delay - half
        # channel-2 events below lo can never match this or a later t1
        while j < n2 and t2[j] < lo:
            j += 1
        if j < n2 and t2[j] <= t1[i] + delay + half:
            matched += 1
            j += 1
    return matched


def pair_coincidences(events1, events2, window: float, delay: float = 0.0) -> int:
    """Greedy earliest-first one-to-one matching of two sorted time-tag lists.

    A channel-1 event at t1 takes the earliest unused channel-2 event with
    |t2 - t1 - delay| <= window / 2.
    """
    t1 = np.ascontiguousarray(events1, dtype=np.float64)
    t2 = np.ascontiguousarray(events2, dtype=np.float64)
    if np.any(np.diff(t1) < 0) or np.any(np.diff(t2) < 0):
        raise UnsortedInputError("time-tag lists must be sorted by timestamp")
    if not window > 0.0:
        raise ValueError("window must be > 0")
    return int(_greedy_pairing(t1, t2, float(window), float(delay)))


@dataclass
class TrialBatch:
    """Per-trial arrays for trials [start, start + len)."""

    index: np.ndarray
    row: np.ndarray
    side1: np.ndarray
    side2: np.ndarray
    lam: Optional[np.ndarray]
    pass1: np.ndarray
    pass2: np.ndarray
    det1: np.ndarray
    det2: np.ndarray
    t1: np.ndarray
    t2: np.ndarray

    def __len__(self):
        return len(self.index)


def generate_trials(config: ExperimentConfig, start: int, stop: int) -> TrialBatch:
    stop = min(stop, config.total_trials)
    index = np.arange(start, stop, dtype=np.int64)
    u = trial_uniforms(config.seed, start, stop)
    if config.setting_policy == "fixedPerBlock":
        row = (index // config.trials_per_pair).astype(np.int8)
    else:
        row = (2 * (u[:, SLOT_SIDE1] >= 0.5) + (u[:, SLOT_SIDE2] >= 0.5)).astype(np.int8)
    q = config.quad
    s1_choices = np.array([q.a.value, q.a_prime.value])
    s2_choices = np.array([q.b.value, q.b_prime.value])
    side1 = s1_choices[row // 2]
    side2 = s2_choices[row % 2]
    lam, pass1, pass2 = draw_outcomes(config.model.kind, side1, side2, u)
    t0 = index * config.pair_interval
    det1, det2, t1, t2 = draw_detections(config.model, pass1, pass2, u, t0)
    t1 = np.broadcast_to(t1, index.shape)
    t2 = np.broadcast_to(t2, index.shape)
    return TrialBatch(index, row, side1, side2, lam, pass1, pass2, det1, det2, t1, t2)


def _detections_by_row(config: ExperimentConfig, start: int, stop: int):
    batch = generate_trials(config, start, stop)
    out = []
    for r in range(4):
        m = batch.row == r
        out.append((
            int(m.sum()),
            batch.t1[m & batch.det1],
            batch.t2[m & batch.det2],
        ))
    return out


def _count(config: ExperimentConfig, start: int, stop: int, workers: int) -> CountsTable:
    bounds = [(s, min(s + CHUNK_TRIALS, stop)) for s in range(start, stop, CHUNK_TRIALS)]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _detections_by_row(config, *b), bounds))
    else:
        parts = [_detections_by_row(config, *b) for b in bounds]

    rows = []
    for r in range(4):
        n = sum(p[r][0] for p in parts)
        t1 = np.concatenate([p[r][1] for p in parts]) if parts else np.empty(0)
        t2 = np.concatenate([p[r][2] for p in parts]) if parts else np.empty(0)
        t1.sort(kind="stable")
        t2.sort(kind="stable")
        c = pair_coincidences(t1, t2, config.coincidence_window, config.model.pair_delay)
        rows.append(CountsRow(n, len(t1), len(t2), c))
    return CountsTable(config.quad, tuple(rows))


def run_trial_range(config: ExperimentConfig, start: int, stop: int) -> CountsTable:
    """Counts for the trial sub-range [start, stop) of ``config``'s run.

    Sub-range tables merge to the full run's table whenever no coincidence
    straddles a split point, which holds exactly for zero jitter and a
    window below the pair interval.
    """
    if not 0 <= start <= stop <= config.total_trials:
        raise ConfigError(f"trial range [{start}, {stop}) outside [0, {config.total_trials})")
    return _count(config, start, stop, config.workers)


def run_experiment(config: ExperimentConfig) -> CountsTable:
    """Run every trial of ``config``; identical for any worker count."""
    return _count(config, 0, config.total_trials, config.workers)


def with_seed(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(config, seed=seed)


def _binomial(k: int, n: int) -> EstimateWithError:
    p = k / n
    return EstimateWithError(p, math.sqrt(p * (1.0 - p) / n), "binomial")


@dataclass(frozen=True)
class JointEstimate:
    """EstimateWithError counterparts of the JointProbabilitySet fields."""

    p_ab: EstimateWithError
    p_ab_prime: EstimateWithError
    p_aprime_b: EstimateWithError
    p_aprime_bprime: EstimateWithError
    p1_at_aprime: EstimateWithError
    p2_at_b: EstimateWithError

    def values(self) -> JointProbabilitySet:
        return JointProbabilitySet(*(getattr(self, f.name).value for f in fields(self)))


def estimate_probabilities(counts: CountsTable) -> JointEstimate:
    """Probabilities per emitted pair, with binomial standard errors.

    Both singles come from the (a',b) row, so the (a',b) joint can never
    exceed either of them.
    """
    for (l1, l2), r in zip(PAIR_LABELS, counts.rows):
        if r.n_pairs <= 0:
            raise EmptyRowError(f"no emitted pairs in row ({l1},{l2})")
    ab, abp, apb, apbp = counts.rows
    return JointEstimate(
        _binomial(ab.coincidences, ab.n_pairs),
        _binomial(abp.coincidences, abp.n_pairs),
        _binomial(apb.coincidences, apb.n_pairs),
        _binomial(apbp.coincidences, apbp.n_pairs),
        _binomial(apb.singles1, apb.n_pairs),
        _binomial(apb.singles2, apb.n_pairs),
    )


def estimate_ch(counts: CountsTable) -> EstimateWithError:
    """CH ratio from counts with a delta-method standard error.

    The three (a',b) quantities are correlated through the row's
    multinomial; coincidences are treated as a subset of both singles.
    """
    est = estimate_probabilities(counts)
    ab, abp, apb, apbp = counts.rows
    num = est.p_ab.value - est.p_ab_prime.value + est.p_aprime_b.value + est.p_aprime_bprime.value
    f1, f2, fc = est.p1_at_aprime.value, est.p2_at_b.value, est.p_aprime_b.value
    den = f1 + f2
    if den == 0.0:
        raise ZeroDenominatorError("no singles recorded in the (a',b) row")
    var_num = sum(e.stderr ** 2 for e in (est.p_ab, est.p_ab_prime, est.p_aprime_b, est.p_aprime_bprime))
    n = apb.n_pairs
    var_den = (f1 * (1 - f1) + f2 * (1 - f2) + 2.0 * (fc - f1 * f2)) / n
    cov = (fc * (1 - f1) + fc * (1 - f2)) / n
    var = var_num / den ** 2 - 2.0 * num * cov / den ** 3 + num ** 2 * var_den / den ** 4
    return EstimateWithError(num / den, math.sqrt(max(var, 0.0)), "binomial")


def estimate_conditional(row: CountsRow, resamples: int = 1000, seed: int = 0) -> EstimateWithError:
    """p(2 | 1) = coincidences / singles1 with a trial-level bootstrap error.

    Resampling the row's trials with replacement is a multinomial draw over
    the categories (coincidence, side-1-only detection, no side-1 detection).
    """
    if row.singles1 <= 0:
        raise UndefinedConditionalError("no side-1 detections to condition on")
    value = row.coincidences / row.singles1
    n = max(row.n_pairs, row.singles1)
    cats = np.array([row.coincidences, row.singles1 - row.coincidences, n - row.singles1], dtype=float)
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(n, cats / n, size=resamples)
    s1 = draws[:, 0] + draws[:, 1]
    ok = s1 > 0
    ratios = draws[ok, 0] / s1[ok]
    stderr = float(ratios.std(ddof=1)) if len(ratios) > 1 else 0.0
    return EstimateWithError(value, stderr, "bootstrap")
