"""Angles, probability containers and the CH / CHSH functionals.

Everything here is a pure function of its arguments.  Angles are radians;
a polarizer axis is a line, so orientations are only defined modulo pi.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, fields

import numpy as np

HALF_PI = 0.5 * math.pi

# absolute tolerance for asserted analytic equalities
PROB_ATOL = 1e-9


class BellError(ValueError):
    """Base class for invalid inputs to the Bell toolkit."""


class DomainError(BellError):
    pass


class ZeroDenominatorError(BellError):
    pass


class UndefinedConditionalError(BellError):
    pass


class ConsistencyError(BellError):
    pass


class PreconditionError(BellError):
    pass


def canonical_angle(value: float) -> float:
    """Fold ``value`` into [0, pi)."""
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"angle must be finite, got {value!r}")
    folded = math.fmod(value, math.pi)
    if folded < 0.0:
        folded += math.pi
    # fmod of a value just below a multiple of pi can round up to pi
    if folded >= math.pi:
        folded = 0.0
    return folded


@dataclass(frozen=True)
class Angle:
    """Polarizer orientation in radians, stored in [0, pi)."""

    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", canonical_angle(self.value))

    @classmethod
    def of(cls, x: Angle | float) -> Angle:
        return x if isinstance(x, Angle) else cls(x)

    @classmethod
    def from_degrees(cls, deg: float) -> Angle:
        return cls(math.radians(deg))

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class SettingsQuad:
    """The four analyzer orientations a, a', b, b'."""

    a: Angle
    a_prime: Angle
    b: Angle
    b_prime: Angle

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, Angle.of(getattr(self, f.name)))

    def pairs(self) -> tuple[tuple[Angle, Angle], ...]:
        """Setting pairs in row order (a,b), (a,b'), (a',b), (a',b')."""
        return (
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        )

    def relative_angles(self) -> tuple[float, float, float, float]:
        return tuple(relative_angle(x, y) for x, y in self.pairs())


PAIR_LABELS = (("a", "b"), ("a", "b'"), ("a'", "b"), ("a'", "b'"))


def _check_probability(name: str, p: float) -> None:
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"{name} = {p!r} is not a probability")


@dataclass(frozen=True)
class JointProbabilitySet:
    """The six probabilities entering the CH ratio."""

    p_ab: float
    p_ab_prime: float
    p_aprime_b: float
    p_aprime_bprime: float
    p1_at_aprime: float
    p2_at_b: float

    def __post_init__(self):
        for f in fields(self):
            _check_probability(f.name, getattr(self, f.name))
        if self.p_aprime_b > self.p1_at_aprime or self.p_aprime_b > self.p2_at_b:
            raise ConsistencyError(
                "joint probability p(a',b) exceeds one of its marginals"
            )

    def scaled(self, k: float) -> JointProbabilitySet:
        return JointProbabilitySet(*(k * getattr(self, f.name) for f in fields(self)))


@dataclass(frozen=True)
class OutcomeJointSet:
    """Joint probabilities of (+,+), (+,-), (-,+), (-,-) for one setting pair."""

    p_pp: float
    p_pm: float
    p_mp: float
    p_mm: float

    def __post_init__(self):
        for f in fields(self):
            _check_probability(f.name, getattr(self, f.name))

    @property
    def total(self) -> float:
        return self.p_pp + self.p_pm + self.p_mp + self.p_mm

    @property
    def marginal1(self) -> float:
        """Probability of + on side 1."""
        return self.p_pp + self.p_pm

    @property
    def marginal2(self) -> float:
        return self.p_pp + self.p_mp


ESTIMATE_METHODS = ("analytic", "binomial", "bootstrap")


@dataclass(frozen=True)
class EstimateWithError:
    value: float
    stderr: float = 0.0
    method: str = "analytic"

    def __post_init__(self):
        if self.method not in ESTIMATE_METHODS:
            raise ValueError(f"unknown estimate method {self.method!r}")
        if not self.stderr >= 0.0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr!r}")
        if self.method == "analytic" and self.stderr != 0.0:
            raise ValueError("analytic estimates carry no standard error")

    def sigmas_from(self, reference: float) -> float:
        """Signed distance to ``reference`` in units of stderr."""
        diff = self.value - reference
        if self.stderr == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / self.stderr


def relative_angle(x: Angle | float, y: Angle | float) -> float:
    """Angle between two polarizer axes, in [0, pi/2]."""
    d = abs(Angle.of(x).value - Angle.of(y).value)
    d = math.fmod(d, math.pi)
    return min(d, math.pi - d)


def relative_angle_array(x, y) -> np.ndarray:
    """Vectorized :func:`relative_angle` for raw radian arrays."""
    d = np.mod(np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)), np.pi)
    return np.minimum(d, np.pi - d)


def ch_value(j: JointProbabilitySet) -> float:
    """CH ratio; local models give a value <= 1."""
    denom = j.p1_at_aprime + j.p2_at_b
    if denom == 0.0:
        raise ZeroDenominatorError("p1(a') + p2(b) is zero")
    num = j.p_ab - j.p_ab_prime + j.p_aprime_b + j.p_aprime_bprime
    return num / denom


def chsh_value(e_ab: float, e_ab_prime: float, e_aprime_b: float, e_aprime_bprime: float) -> float:
    """CHSH sum; local models give a value <= 2."""
    for name, e in zip(("E(a,b)", "E(a,b')", "E(a',b)", "E(a',b')"),
                       (e_ab, e_ab_prime, e_aprime_b, e_aprime_bprime)):
        if not abs(e) <= 1.0 + 1e-12:
            raise DomainError(f"{name} = {e!r} outside [-1, 1]")
    return e_ab - e_ab_prime + e_aprime_b + e_aprime_bprime


def correlation_from_joints(o: OutcomeJointSet) -> float:
    return o.p_pp + o.p_mm - o.p_pm - o.p_mp


def conditional_probability(p12: float, p1: float) -> float:
    """p(b,2 | a,1) = p12 / p1."""
    if p1 == 0.0:
        raise UndefinedConditionalError("conditioning probability is zero")
    if p12 > p1:
        raise ConsistencyError(f"joint {p12!r} exceeds marginal {p1!r}")
    return p12 / p1


def criterion_exceeds_singles(p_cond: float, p_single: float) -> bool:
    """True iff the conditional strictly exceeds the single-count probability."""
    return p_cond > p_single


@dataclass(frozen=True)
class ConsistencyResult:
    chsh: float
    ch_from_pp: float
    consistent: bool


def ch_chsh_consistency(quads) -> ConsistencyResult:
    """Check S = 4 * (CH numerator) - 2 for four symmetric half-marginal outcome sets.

    ``quads`` holds the OutcomeJointSets for (a,b), (a,b'), (a',b), (a',b').
    With p++ = p--, p+- = p-+ and both marginals 1/2, E = 4 p++ - 1, so the
    CHSH and CH bounds are violated together or not at all.
    """
    quads = tuple(quads)
    if len(quads) != 4:
        raise PreconditionError("need exactly four outcome sets")
    for o in quads:
        if (abs(o.p_pp - o.p_mm) > PROB_ATOL or abs(o.p_pm - o.p_mp) > PROB_ATOL
                or abs(o.marginal1 - 0.5) > PROB_ATOL or abs(o.marginal2 - 0.5) > PROB_ATOL):
            raise PreconditionError(f"outcome set {o} is not symmetric with half marginals")

    s = chsh_value(*(correlation_from_joints(o) for o in quads))
    j = JointProbabilitySet(quads[0].p_pp, quads[1].p_pp, quads[2].p_pp, quads[3].p_pp, 0.5, 0.5)
    ch = ch_value(j)
    numerator = j.p_ab - j.p_ab_prime + j.p_aprime_b + j.p_aprime_bprime
    if abs(s - (4.0 * numerator - 2.0)) > PROB_ATOL:
        raise ConsistencyError(f"CHSH {s} != 4*{numerator} - 2")
    return ConsistencyResult(s, ch, (s <= 2.0) == (ch <= 1.0))


def deterministic_strategy_bounds() -> tuple[float, float]:
    """Maximum CHSH and CH over the 16 deterministic local assignments.

    CHSH uses +/-1 outcomes for a, a', b, b'.  CH maps + to "detected"
    (1) and - to "not detected" (0); assignments with p1(a') + p2(b) = 0
    have an empty CH ratio and are skipped.
    """
    best_chsh = -math.inf
    best_ch = -math.inf
    for A, Ap, B, Bp in itertools.product((1, -1), repeat=4):
        best_chsh = max(best_chsh, A * B - A * Bp + Ap * B + Ap * Bp)
        a, ap, b, bp = ((v + 1) // 2 for v in (A, Ap, B, Bp))
        if ap + b:
            best_ch = max(best_ch, (a * b - a * bp + ap * b + ap * bp) / (ap + b))
    return float(best_chsh), float(best_ch)
