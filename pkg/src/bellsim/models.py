"""Closed-form and samplable two-photon polarization models.

Three models share one interface:

* ``quantum``: the parallel-polarization entangled pair, joint pass
  probability cos^2(theta) / 2.
* ``lhv_sharp``: a shared hidden axis lambda, uniform on [0, pi); a photon
  passes iff lambda lies within pi/4 of its polarizer axis.
* ``lhv_malus``: the same lambda, but each photon passes independently with
  probability cos^2(lambda - setting).

Every single-channel pass probability is 1/2 for all three.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    HALF_PI,
    Angle,
    DomainError,
    OutcomeJointSet,
    relative_angle_array,
)

# tolerance for angles that fold to a hair outside [0, pi/2]
_ANGLE_SLACK = 1e-12


class ModelKind(str, enum.Enum):
    QUANTUM = "quantum"
    LHV_SHARP = "lhv_sharp"
    LHV_MALUS = "lhv_malus"

    @property
    def is_lhv(self) -> bool:
        return self is not ModelKind.QUANTUM


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind = ModelKind.QUANTUM
    efficiency: float = 1.0
    jitter_sigma: float = 0.0
    pair_delay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if not 0.0 <= self.efficiency <= 1.0:
            raise DomainError(f"detector efficiency {self.efficiency!r} outside [0, 1]")
        if not self.jitter_sigma >= 0.0:
            raise DomainError(f"timing jitter sigma {self.jitter_sigma!r} must be >= 0")
        if not math.isfinite(self.pair_delay):
            raise DomainError("pair delay must be finite")


PASS, ABSORB = "pass", "absorb"


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    side1_label: str
    side1_setting: Angle
    side2_label: str
    side2_setting: Angle
    lam: Optional[float]
    outcome1: str
    outcome2: str
    detected1: bool
    detected2: bool
    t1: float
    t2: float

    def __post_init__(self):
        if self.trial_index < 0:
            raise ValueError("trial index must be >= 0")
        if self.side1_label not in ("a", "a'") or self.side2_label not in ("b", "b'"):
            raise ValueError("bad setting labels")
        if (self.detected1 and self.outcome1 != PASS) or (self.detected2 and self.outcome2 != PASS):
            raise ValueError("an absorbed photon cannot be detected")
        if self.lam is not None and not 0.0 <= self.lam < math.pi:
            raise ValueError("lambda must lie in [0, pi)")


def _check_theta(theta):
    """Validate relative angles, clipping sub-ulp overshoot from folding."""
    arr = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < -_ANGLE_SLACK) or np.any(arr > HALF_PI + _ANGLE_SLACK):
        raise DomainError(f"relative angle outside [0, pi/2]: {theta!r}")
    return np.clip(arr, 0.0, HALF_PI)


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def quantum_joint(theta):
    """Joint pass probability cos^2(theta)/2, written as (1 + cos 2theta)/4.

    The double-angle form returns exactly 0.25 at pi/4, where cos(pi/4)**2
    would round above one half.
    """
    t = _check_theta(theta)
    return _scalar_or_array(0.25 * (1.0 + np.cos(2.0 * t)))


def quantum_singles() -> float:
    return 0.5


def lhv_sharp_joint(theta):
    """Overlap of two pi/2-wide acceptance arcs, offset by theta, over uniform lambda."""
    t = _check_theta(theta)
    return _scalar_or_array(0.5 - t / math.pi)


def lhv_malus_joint(theta):
    """<cos^2(l - a) cos^2(l - b)> over uniform lambda."""
    t = _check_theta(theta)
    return _scalar_or_array(0.25 + np.cos(2.0 * t) / 8.0)


_JOINTS = {
    ModelKind.QUANTUM: quantum_joint,
    ModelKind.LHV_SHARP: lhv_sharp_joint,
    ModelKind.LHV_MALUS: lhv_malus_joint,
}


def _kind(model) -> ModelKind:
    return model.kind if isinstance(model, ModelSpec) else ModelKind(model)


def model_joint(model, theta):
    """Ideal (unit efficiency) joint pass probability at relative angle theta."""
    return _JOINTS[_kind(model)](theta)


def model_single(model) -> float:
    """Ideal single-channel pass probability; 1/2 for every model here."""
    _kind(model)
    return 0.5


def detected_joint(model: ModelSpec, theta):
    """Coincidence probability after independent per-channel thinning."""
    return model.efficiency ** 2 * model_joint(model, theta)


def detected_single(model: ModelSpec) -> float:
    return model.efficiency * model_single(model)


def model_outcome_joints(model, theta: float) -> OutcomeJointSet:
    """Four-outcome distribution (pass = +, absorb = -) at unit efficiency.

    All three models are symmetric with half marginals, so the whole table
    follows from the joint pass probability.
    """
    pp = float(model_joint(model, theta))
    pm = 0.5 - pp
    return OutcomeJointSet(pp, pm, pm, pp)


def quantum_outcome_joints(theta: float) -> OutcomeJointSet:
    return model_outcome_joints(ModelKind.QUANTUM, theta)


def model_correlation(model, theta):
    """Ideal +/-1 correlation E(theta); detector efficiency is ignored."""
    t = _check_theta(theta)
    kind = _kind(model)
    if kind is ModelKind.QUANTUM:
        e = np.cos(2.0 * t)
    elif kind is ModelKind.LHV_SHARP:
        e = 1.0 - 4.0 * t / math.pi
    else:
        e = np.cos(2.0 * t) / 2.0
    return _scalar_or_array(e)


# Uniform slots consumed per trial.  The layout is fixed so every trial
# reads the same positions of its own substream.
N_UNIFORMS = 12
SLOT_SIDE1, SLOT_SIDE2, SLOT_LAMBDA = 0, 1, 2
SLOT_PASS1, SLOT_PASS2 = 3, 4
SLOT_DET1, SLOT_DET2 = 5, 6
SLOT_JIT1, SLOT_JIT2 = 7, 9  # two uniforms each, Box-Muller


def _box_muller(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    # 1 - u lies in (0, 1], so the log is finite
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)


def draw_outcomes(kind: ModelKind, side1: np.ndarray, side2: np.ndarray, u: np.ndarray):
    """Vectorized pass/absorb outcomes for trials with settings ``side1``, ``side2``.

    ``u`` has shape (n, N_UNIFORMS).  Returns (lam, pass1, pass2); ``lam`` is
    None for the quantum model.  For the LHV kinds each side's outcome reads
    only lambda, its own setting and its own uniform.
    """
    kind = ModelKind(kind)
    if kind is ModelKind.QUANTUM:
        theta = relative_angle_array(side1, side2)
        pass1 = u[:, SLOT_PASS1] < 0.5
        cos2 = 0.5 * (1.0 + np.cos(2.0 * theta))
        # sample side 2 conditioned on side 1: p(2|1) = cos^2, p(2|not 1) = sin^2
        p2 = np.where(pass1, cos2, 1.0 - cos2)
        pass2 = u[:, SLOT_PASS2] < p2
        return None, pass1, pass2

    lam = math.pi * u[:, SLOT_LAMBDA]
    if kind is ModelKind.LHV_SHARP:
        pass1 = relative_angle_array(lam, side1) < 0.25 * math.pi
        pass2 = relative_angle_array(lam, side2) < 0.25 * math.pi
    else:
        pass1 = u[:, SLOT_PASS1] < np.cos(lam - side1) ** 2
        pass2 = u[:, SLOT_PASS2] < np.cos(lam - side2) ** 2
    return lam, pass1, pass2


def draw_detections(model: ModelSpec, pass1, pass2, u: np.ndarray, t0):
    """Thin transmitted photons by efficiency and attach jittered timestamps."""
    det1 = pass1 & (u[:, SLOT_DET1] < model.efficiency)
    det2 = pass2 & (u[:, SLOT_DET2] < model.efficiency)
    t0 = np.asarray(t0, dtype=float)
    if model.jitter_sigma > 0.0:
        j1 = model.jitter_sigma * _box_muller(u[:, SLOT_JIT1], u[:, SLOT_JIT1 + 1])
        j2 = model.jitter_sigma * _box_muller(u[:, SLOT_JIT2], u[:, SLOT_JIT2 + 1])
    else:
        j1 = j2 = 0.0
    t1 = t0 + j1
    t2 = t0 + model.pair_delay + j2
    return det1, det2, t1, t2


def sample_trial(model: ModelSpec, side1, side2, rng: np.random.Generator, *,
                 trial_index: int = 0, labels: tuple[str, str] = ("a", "b"),
                 t0: float = 0.0) -> TrialRecord:
    """Sample one emitted pair; only ``rng`` is mutated."""
    s1, s2 = Angle.of(side1), Angle.of(side2)
    u = rng.random((1, N_UNIFORMS))
    lam, pass1, pass2 = draw_outcomes(model.kind, np.array([s1.value]), np.array([s2.value]), u)
    det1, det2, t1, t2 = draw_detections(model, pass1, pass2, u, t0)
    return TrialRecord(
        trial_index=trial_index,
        side1_label=labels[0],
        side1_setting=s1,
        side2_label=labels[1],
        side2_setting=s2,
        lam=None if lam is None else float(lam[0]),
        outcome1=PASS if pass1[0] else ABSORB,
        outcome2=PASS if pass2[0] else ABSORB,
        detected1=bool(det1[0]),
        detected2=bool(det2[0]),
        t1=float(np.broadcast_to(t1, (1,))[0]),
        t2=float(np.broadcast_to(t2, (1,))[0]),
    )

