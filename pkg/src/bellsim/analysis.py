"""Angle sweeps, extremum and boundary location, efficiency threshold, and
the comparison of the violation region with the region where the
conditional pass probability exceeds the single-count probability.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import (
    EstimateWithError,
    SettingsQuad,
    criterion_exceeds_singles,
    relative_angle_array,
)
from .models import ModelSpec, model_joint, model_single
from .simulator import (
    ExperimentConfig,
    estimate_ch,
    estimate_conditional,
    run_experiment,
)

QUARTER_PI = 0.25 * math.pi

# CH must exceed 1 by more than rounding noise to count as a violation
VIOLATION_MARGIN = 1e-12

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class NoViolationError(ValueError):
    pass


@dataclass(frozen=True)
class Arrangement:
    """Absolute analyzer angles as multiples of the sweep parameter.

    ``quad(theta)`` is (a, a', b, b') = coefficients * theta.  The default
    (0, 2, 1, 3) gives the relative pattern (theta, 3theta, theta, theta)
    for the pairs (a,b), (a,b'), (a',b), (a',b').
    """

    a: float = 0.0
    a_prime: float = 2.0
    b: float = 1.0
    b_prime: float = 3.0
    name: str = "standard"

    def quad(self, theta: float) -> SettingsQuad:
        return SettingsQuad(self.a * theta, self.a_prime * theta, self.b * theta, self.b_prime * theta)

    def pair_angles(self, theta):
        """Folded relative angles of the four pairs; each output has theta's shape."""
        t = np.asarray(theta, dtype=float)
        a, ap, b, bp = (np.mod(c * t, np.pi) for c in (self.a, self.a_prime, self.b, self.b_prime))
        return (
            relative_angle_array(a, b),
            relative_angle_array(a, bp),
            relative_angle_array(ap, b),
            relative_angle_array(ap, bp),
        )


STANDARD = Arrangement()
DEGENERATE = Arrangement(0.0, 0.0, 0.0, 0.0, name="degenerate")
ARRANGEMENTS = {"standard": STANDARD}


def _efficiency(model: ModelSpec, efficiency: Optional[float]) -> float:
    return model.efficiency if efficiency is None else efficiency


def ch_analytic(model: ModelSpec, arrangement: Arrangement, theta, efficiency: Optional[float] = None):
    """Closed-form CH ratio with symmetric detector efficiency.

    Joints scale with eta^2 and singles with eta, so CH(eta) = eta * CH(1).
    """
    eta = _efficiency(model, efficiency)
    ab, abp, apb, apbp = (model_joint(model, x) for x in arrangement.pair_angles(theta))
    num = eta ** 2 * (np.asarray(ab) - abp + apb + apbp)
    den = 2.0 * eta * model_single(model)
    if den == 0.0:
        return math.nan if np.ndim(theta) == 0 else np.full(np.shape(theta), math.nan)
    ch = num / den
    return float(ch) if np.ndim(ch) == 0 else ch


def chsh_analytic(model: ModelSpec, arrangement: Arrangement, theta):
    """Ideal CHSH sum from the four-outcome distributions (E = 4 p++ - 1)."""
    ab, abp, apb, apbp = (4.0 * np.asarray(model_joint(model, x)) - 1.0
                          for x in arrangement.pair_angles(theta))
    s = ab - abp + apb + apbp
    return float(s) if np.ndim(s) == 0 else s


def ch_chsh_for_angles(model: ModelSpec, a, a_prime, b, b_prime):
    """Ideal CH and CHSH for arrays of absolute analyzer angles."""
    joints = [np.asarray(model_joint(model, relative_angle_array(x, y)))
              for x, y in ((a, b), (a, b_prime), (a_prime, b), (a_prime, b_prime))]
    num = joints[0] - joints[1] + joints[2] + joints[3]
    ch = num / (2.0 * model_single(model))
    chsh = 4.0 * num - 2.0
    return ch, chsh


def conditional_analytic(model: ModelSpec, arrangement: Arrangement, theta, efficiency=None):
    """p(b,2 | a,1) for the (a,b) pair, detection-level."""
    eta = _efficiency(model, efficiency)
    ab = arrangement.pair_angles(theta)[0]
    p = eta * np.asarray(model_joint(model, ab)) / model_single(model)
    return float(p) if np.ndim(p) == 0 else p


def is_violation(ch: float) -> bool:
    return ch > 1.0 + VIOLATION_MARGIN


@dataclass(frozen=True)
class SweepRow:
    theta: float
    ch_analytic: float
    ch_mc: Optional[EstimateWithError]
    p_cond: float
    criterion: bool
    violation: bool
    p_cond_mc: Optional[EstimateWithError] = None


def _row_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1, np.uint64)[0])


def sweep_ch(model: ModelSpec, arrangement: Arrangement = STANDARD, grid: Sequence[float] = (),
             mc_trials: Optional[int] = None, seed: int = 0, workers: int = 1,
             **experiment_kw) -> list[SweepRow]:
    """CH over ``grid``, optionally with a Monte Carlo run per point.

    Monte Carlo point ``k`` uses a seed derived from (seed, k).  Extra
    keyword arguments go to :class:`ExperimentConfig`.
    """
    rows = []
    p_single = model.efficiency * model_single(model)
    for k, theta in enumerate(grid):
        theta = float(theta)
        ch = ch_analytic(model, arrangement, theta)
        p_cond = conditional_analytic(model, arrangement, theta)
        ch_mc = p_cond_mc = None
        if mc_trials:
            cfg = ExperimentConfig(model, arrangement.quad(theta), mc_trials,
                                   seed=_row_seed(seed, k), workers=workers, **experiment_kw)
            counts = run_experiment(cfg)
            ch_mc = estimate_ch(counts)
            ab = counts.rows[0]
            if ab.singles1:
                p_cond_mc = estimate_conditional(ab, seed=_row_seed(seed, k))
        rows.append(SweepRow(
            theta=theta,
            ch_analytic=ch,
            ch_mc=ch_mc,
            p_cond=p_cond,
            criterion=criterion_exceeds_singles(p_cond, p_single),
            violation=is_violation(ch),
            p_cond_mc=p_cond_mc,
        ))
    return rows


def _golden_max(f, lo: float, hi: float, tol: float) -> float:
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd = f(d)
    return 0.5 * (lo + hi)


def max_violation(model: ModelSpec, arrangement: Arrangement = STANDARD,
                  efficiency: Optional[float] = None, lo: float = 0.0, hi: float = QUARTER_PI,
                  tol: float = 1e-9, prescan: int = 1001) -> tuple[float, float]:
    """(thetaMax, chMax) of the analytic CH on [lo, hi].

    A grid pre-scan picks the best cell, then golden-section refines it.
    """
    grid = np.linspace(lo, hi, prescan)
    values = ch_analytic(model, arrangement, grid, efficiency)
    k = int(np.argmax(values))
    left, right = float(grid[max(k - 1, 0)]), float(grid[min(k + 1, prescan - 1)])
    f = lambda t: ch_analytic(model, arrangement, t, efficiency)
    theta = _golden_max(f, left, right, tol)
    best = f(theta)
    # flat or edge maxima: never report worse than the scan itself
    if values[k] > best:
        theta, best = float(grid[k]), float(values[k])
    return float(theta), float(best)


def find_violation_boundary(model: ModelSpec, arrangement: Arrangement = STANDARD,
                            hi: float = QUARTER_PI, tol: float = 1e-6) -> float:
    """Upper edge of the violation region, bracketed from the maximizer outward."""
    theta_max, ch_max = max_violation(model, arrangement)
    if not is_violation(ch_max):
        raise NoViolationError(f"{model.kind.value}: CH never exceeds 1 (max {ch_max!r})")
    g = lambda t: ch_analytic(model, arrangement, t) - 1.0
    # CH must fall monotonically from the maximizer for bisection to be meaningful
    scan = g(np.linspace(theta_max, hi, 2001))
    if np.any(np.diff(scan) > 1e-12):
        raise ValueError("CH is not monotone between the maximizer and the upper bracket")
    if g(hi) > 0.0:
        raise NoViolationError("violation region extends past the upper bracket")
    lo = theta_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CriterionRegion:
    grid: tuple[float, ...]
    criterion: tuple[bool, ...]
    violation: tuple[bool, ...]

    @property
    def contained(self) -> bool:
        """Every violating grid point also satisfies the criterion."""
        return all(c for c, v in zip(self.criterion, self.violation) if v)

    @property
    def last_criterion_theta(self) -> Optional[float]:
        pts = [t for t, c in zip(self.grid, self.criterion) if c]
        return max(pts) if pts else None

    @property
    def last_violation_theta(self) -> Optional[float]:
        pts = [t for t, v in zip(self.grid, self.violation) if v]
        return max(pts) if pts else None


def criterion_region(model: ModelSpec, grid: Sequence[float],
                     arrangement: Arrangement = STANDARD) -> CriterionRegion:
    grid = tuple(float(t) for t in grid)
    arr = np.array(grid)
    p_cond = np.atleast_1d(conditional_analytic(model, arrangement, arr))
    p_single = model.efficiency * model_single(model)
    ch = np.atleast_1d(ch_analytic(model, arrangement, arr))
    return CriterionRegion(
        grid,
        tuple(criterion_exceeds_singles(float(p), p_single) for p in p_cond),
        tuple(is_violation(float(c)) for c in ch),
    )


def efficiency_threshold(model: ModelSpec, arrangement: Arrangement = STANDARD,
                         tol: float = 1e-4, scan_steps: int = 101) -> Optional[float]:
    """Smallest symmetric efficiency at which the analytic CH exceeds 1.

    Returns None when the model never violates, even at unit efficiency.
    """
    def violates(eta: float) -> bool:
        return is_violation(max_violation(model, arrangement, efficiency=eta, prescan=201)[1])

    etas = np.linspace(0.0, 1.0, scan_steps)
    first = next((k for k, eta in enumerate(etas) if violates(float(eta))), None)
    if first is None:
        return None
    if first == 0:
        return 0.0
    lo, hi = float(etas[first - 1]), float(etas[first])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if violates(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def confirm_efficiency(model: ModelSpec, eta: float, trials_per_pair: int, seed: int = 0,
                       arrangement: Arrangement = STANDARD, theta: Optional[float] = None,
                       workers: int = 1) -> EstimateWithError:
    """Monte Carlo CH at efficiency ``eta`` and the ideal maximizer angle."""
    if theta is None:
        theta = max_violation(model, arrangement)[0]
    cfg = ExperimentConfig(replace(model, efficiency=eta), arrangement.quad(theta),
                           trials_per_pair, seed=seed, workers=workers)
    return estimate_ch(run_experiment(cfg))

