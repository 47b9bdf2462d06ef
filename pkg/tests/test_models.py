import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellsim.core import DomainError, correlation_from_joints
from bellsim.models import (
    ABSORB,
    PASS,
    ModelKind,
    ModelSpec,
    TrialRecord,
    lhv_malus_joint,
    lhv_sharp_joint,
    model_correlation,
    model_joint,
    model_outcome_joints,
    quantum_joint,
    quantum_outcome_joints,
    quantum_singles,
    sample_trial,
)

from oracles import (
    lhv_malus_quadrature,
    lhv_sharp_quadrature,
    statevector_joint,
    statevector_outcomes,
)

PI = math.pi
THETAS = [0.0, PI / 8, PI / 4, 3 * PI / 8, PI / 2]


class TestQuantum:
    @pytest.mark.parametrize("theta,expected", [(0, 0.5), (PI / 4, 0.25), (PI / 8, 0.4267766)])
    def test_joint(self, theta, expected):
        assert quantum_joint(theta) == pytest.approx(expected, abs=1e-7)

    @pytest.mark.parametrize("theta", THETAS + [0.3, 1.2])
    def test_joint_matches_state_vector(self, theta):
        assert quantum_joint(theta) == pytest.approx(statevector_joint(0.7, 0.7 + theta), abs=1e-12)

    def test_pi_over_4_is_exact(self):
        assert quantum_joint(PI / 4) == 0.25

    @pytest.mark.parametrize("bad", [-0.1, PI / 2 + 0.01, math.nan])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            quantum_joint(bad)

    def test_singles(self):
        assert quantum_singles() == 0.5
        for theta in (0.3, 1.2):
            assert quantum_outcome_joints(theta).marginal1 == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("theta", THETAS)
    def test_outcomes_match_state_vector(self, theta):
        o = quantum_outcome_joints(theta)
        ref = statevector_outcomes(0.2, 0.2 + theta)
        assert (o.p_pp, o.p_pm, o.p_mp, o.p_mm) == pytest.approx(ref, abs=1e-12)
        assert o.total == pytest.approx(1.0, abs=1e-12)

    def test_outcome_examples(self):
        o = quantum_outcome_joints(0)
        assert (o.p_pp, o.p_pm, o.p_mp, o.p_mm) == (0.5, 0, 0, 0.5)
        o = quantum_outcome_joints(PI / 4)
        assert (o.p_pp, o.p_pm, o.p_mp, o.p_mm) == (0.25, 0.25, 0.25, 0.25)
        o = quantum_outcome_joints(PI / 8)
        assert (o.p_pp, o.p_pm) == pytest.approx((0.4267766, 0.0732233), abs=1e-7)

    def test_no_signaling_grid(self):
        for theta in np.linspace(0, PI / 2, 1000):
            o = quantum_outcome_joints(theta)
            assert o.p_pp + o.p_pm == 0.5
            assert o.p_pp + o.p_mp == 0.5


class TestLhv:
    @pytest.mark.parametrize("theta", THETAS)
    def test_sharp_quadrature(self, theta):
        assert lhv_sharp_joint(theta) == pytest.approx(lhv_sharp_quadrature(theta), abs=1e-9)

    @pytest.mark.parametrize("theta", THETAS)
    def test_malus_quadrature(self, theta):
        assert lhv_malus_joint(theta) == pytest.approx(lhv_malus_quadrature(theta), abs=1e-12)

    def test_examples(self):
        assert lhv_sharp_joint(0) == 0.5
        assert lhv_sharp_joint(PI / 2) == 0
        assert lhv_sharp_joint(PI / 8) == pytest.approx(0.375, abs=1e-15)
        assert lhv_malus_joint(0) == pytest.approx(0.375, abs=1e-15)
        assert lhv_malus_joint(PI / 4) == pytest.approx(0.25, abs=1e-15)
        assert lhv_malus_joint(PI / 2) == pytest.approx(0.125, abs=1e-15)

    def test_sharp_monte_carlo_oracle(self):
        # sample lambda directly and apply the two arc tests
        n = 10 ** 7
        lam = np.random.default_rng(11).uniform(0, PI, n)
        d1 = np.abs(lam) % PI
        d2 = np.abs(lam - PI / 8) % PI
        in1 = np.minimum(d1, PI - d1) < PI / 4
        in2 = np.minimum(d2, PI - d2) < PI / 4
        p = 0.375
        assert abs((in1 & in2).mean() - p) < 3 * math.sqrt(p * (1 - p) / n)

    @given(st.floats(0.0, PI / 2))
    def test_bounded_by_marginals(self, theta):
        for f in (lhv_sharp_joint, lhv_malus_joint):
            assert 0.0 <= f(theta) <= 0.5


class TestCorrelation:
    def test_examples(self):
        assert model_correlation(ModelKind.QUANTUM, 0) == 1
        assert model_correlation(ModelKind.QUANTUM, PI / 8) == pytest.approx(0.7071067, abs=1e-7)
        assert model_correlation(ModelKind.LHV_MALUS, PI / 8) == pytest.approx(0.3535533, abs=1e-7)
        assert model_correlation(ModelKind.LHV_SHARP, PI / 4) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_matches_joints(self, kind):
        for theta in np.linspace(0, PI / 2, 2001):
            e = correlation_from_joints(model_outcome_joints(kind, theta))
            assert model_correlation(kind, theta) == pytest.approx(e, abs=1e-12)

    def test_malus_monte_carlo_oracle(self):
        n = 10 ** 6
        rng = np.random.default_rng(5)
        lam = rng.uniform(0, PI, n)
        s1 = np.where(rng.random(n) < np.cos(lam) ** 2, 1, -1)
        s2 = np.where(rng.random(n) < np.cos(lam - PI / 8) ** 2, 1, -1)
        e = (s1 * s2).mean()
        assert abs(e - math.cos(PI / 4) / 2) < 5 / math.sqrt(n)


class TestModelSpec:
    def test_validation(self):
        with pytest.raises(DomainError):
            ModelSpec(efficiency=1.2)
        with pytest.raises(DomainError):
            ModelSpec(jitter_sigma=-1.0)
        assert ModelSpec("lhv_malus").kind is ModelKind.LHV_MALUS

    def test_trial_record_invariants(self):
        with pytest.raises(ValueError):
            TrialRecord(0, "a", 0, "b", 0, None, ABSORB, PASS, True, False, 0.0, 0.0)


def _sample(model, s1, s2, n, seed):
    rng = np.random.default_rng(seed)
    return [sample_trial(model, s1, s2, rng, trial_index=i) for i in range(n)]


class TestSampleTrial:
    def test_quantum_parallel_no_discord(self):
        trials = _sample(ModelSpec(), 0.3, 0.3, 10 ** 5, 1)
        assert all(t.outcome1 == t.outcome2 for t in trials)
        assert all(t.lam is None for t in trials)

    def test_lhv_records_lambda(self):
        for t in _sample(ModelSpec(ModelKind.LHV_MALUS), 0.0, 1.0, 1000, 2):
            assert t.lam is not None and 0 <= t.lam < PI

    def test_detection_implies_pass(self):
        for t in _sample(ModelSpec(efficiency=0.5), 0.0, 1.0, 5000, 3):
            assert not t.detected1 or t.outcome1 == PASS
            assert not t.detected2 or t.outcome2 == PASS

    def test_timestamps(self):
        model = ModelSpec(jitter_sigma=0.0, pair_delay=5e-9)
        t = sample_trial(model, 0, 0, np.random.default_rng(0), t0=1.0)
        assert t.t1 == 1.0 and t.t2 == 1.0 + 5e-9
        model = ModelSpec(jitter_sigma=1e-9)
        ts = _sample(model, 0, 0, 20000, 4)
        dt = np.array([x.t1 for x in ts])
        assert abs(dt.mean()) < 5e-9 / math.sqrt(len(ts)) * 1
        assert dt.std() == pytest.approx(1e-9, rel=0.03)

    def test_rng_is_only_state(self):
        a = _sample(ModelSpec(ModelKind.LHV_SHARP), 0.0, 0.5, 50, 9)
        b = _sample(ModelSpec(ModelKind.LHV_SHARP), 0.0, 0.5, 50, 9)
        assert a == b
