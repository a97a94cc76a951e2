import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from haltmix.chain_core import DiscreteChain, point_mass, separation_series, tv_series
from haltmix.models import RiffleProjection, bernoulli_laplace, biased_walk, ehrenfest, simple_walk
from haltmix.stopping import (
    ScheduleError,
    _ratio,
    build_schedule,
    halting_set_M,
    hitting_survival,
    law_of_XT,
    smallest_halting_state,
    spectral_halting_candidates,
    sst_schedule,
    tv_upper_via_hitting,
    verify_halting_state,
)

from conftest import random_bd, random_dense

HALF = DiscreteChain.from_kernel([[0.5, 0.5], [0.5, 0.5]])


class TestSchedule:
    def test_two_state_hand_values(self):
        s = build_schedule(HALF, [1.0, 0.0], 1)
        assert np.allclose(s.gamma, [[0.5, 0.0], [0.25, 0.25]])
        assert np.allclose(s.delta, [[1.0, 0.0], [0.25, 0.25]])
        assert np.allclose(s.psi, [[0.5, 1.0], [1.0, 1.0]])
        assert np.allclose(s.survival, [0.5, 0.0])

    def test_stationary_start(self):
        bd = ehrenfest(4)
        s = build_schedule(bd, bd.stationary, 10)
        assert np.allclose(s.gamma[0], bd.stationary)
        assert np.max(s.target) < 1e-15
        assert np.all(s.survival < 1e-15)

    def test_telescoping(self):
        bd = ehrenfest(5)
        s = build_schedule(bd, point_mass(6, 0), 200)
        assert abs(s.gamma.sum() - (1 - s.target[200])) < 1e-10

    def test_law_of_XT_two_state(self):
        assert np.allclose(law_of_XT(build_schedule(HALF, [1.0, 0.0], 1)), [0.75, 0.25])

    def test_law_of_XT_stationary(self):
        bd = ehrenfest(4)
        assert np.allclose(law_of_XT(build_schedule(bd, bd.stationary, 5)), bd.stationary, atol=1e-15)

    @pytest.mark.parametrize("bd", [ehrenfest(5), ehrenfest(9), simple_walk(8), biased_walk(10, 0.6).lazy()])
    def test_law_support_is_below_smallest_halting_state(self, bd):
        start = point_mass(bd.size, 0)
        law = law_of_XT(build_schedule(bd, start))
        x = smallest_halting_state(bd, start)
        assert set(np.flatnonzero(law > 1e-12)) == set(range(x + 1))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 25), st.booleans())
    def test_identity_random(self, seed, n, dense):
        rng = np.random.default_rng(seed)
        chain = random_dense(rng, n) if dense else random_bd(rng, n - 1)
        start = rng.dirichlet(np.full(n, 0.3))
        s = build_schedule(chain, start, 300)
        assert s.max_identity_error() < 1e-11
        assert np.all((s.psi >= 0) & (s.psi <= 1))

    def test_negative_horizon(self):
        with pytest.raises(Exception):
            build_schedule(HALF, [1.0, 0.0], -1)


class TestSST:
    def test_two_state(self):
        s = sst_schedule(HALF, [1.0, 0.0], 5)
        assert np.allclose(s.target, 2 * tv_series(HALF, [1.0, 0.0], 5))
        assert np.allclose(s.survival, s.target)

    def test_stationary_start(self):
        bd = ehrenfest(3)
        s = sst_schedule(bd, bd.stationary, 5)
        assert np.all(np.abs(s.survival) < 1e-14)

    def test_ehrenfest(self):
        bd = ehrenfest(5)
        start = point_mass(6, 0)
        s = sst_schedule(bd, start, 300)
        assert np.max(np.abs(s.survival - separation_series(bd, start, 300))) < 1e-10

    def test_margin_is_algebraically_nonnegative(self):
        # Delta_n - gamma_n = pi_n - (1 - s(n)) pi >= 0 by definition of s
        rng = np.random.default_rng(11)
        for _ in range(20):
            chain = random_dense(rng, 6)
            start = rng.dirichlet(np.full(6, 0.3))
            s = sst_schedule(chain, start, 80)
            pi = chain.stationary
            dists = [start]
            for _ in range(80):
                dists.append(dists[-1] @ chain.kernel)
            slack = np.array(dists) - (1 - s.target)[:, None] * pi
            assert np.allclose(s.delta - s.gamma, slack, atol=1e-13)

    def test_violation_is_surfaced_not_clamped(self):
        gamma = np.array([[0.3, 0.2]])
        delta = np.array([[0.25, 0.2]])
        with pytest.raises(ScheduleError, match="outside"):
            _ratio(gamma, delta, strict=True)
        with pytest.raises(ScheduleError):
            _ratio(np.array([[1e-6]]), np.array([[0.0]]), strict=True)


class TestHalting:
    def test_ehrenfest_five(self):
        states, verdicts = halting_set_M(ehrenfest(5), point_mass(6, 0))
        assert 3 in states and min(states) == 3
        assert verdicts[3].label == "CERTIFIED"

    def test_stationary_start_all(self):
        bd = ehrenfest(5)
        states, verdicts = halting_set_M(bd, bd.stationary)
        assert states == set(range(6))
        assert all(v.label == "CERTIFIED" for v in verdicts.values())

    def test_lazy_biased_walk_top(self):
        bd = biased_walk(20, 0.6).lazy()
        v = verify_halting_state(bd, point_mass(21, 0), 20)
        assert v.label == "CERTIFIED"

    def test_simple_walk(self):
        bd = simple_walk(10)
        start = point_mass(11, 0)
        assert verify_halting_state(bd, start, 6).label == "CERTIFIED"
        v5 = verify_halting_state(bd, start, 5)
        assert v5.status == "not" and v5.witness is not None
        row = start
        for _ in range(v5.witness):
            row = row @ bd.kernel
        assert row[5] > bd.stationary[5]

    def test_start_state_fails_at_zero(self):
        v = verify_halting_state(ehrenfest(4), point_mass(5, 2), 2)
        assert v.label == "NOT(0)"

    def test_periodic_chain_numeric_only(self):
        K = np.zeros((4, 4))
        for i in range(4):
            K[i, (i + 1) % 4] = 1.0
        v = verify_halting_state(K, [0.25] * 4, 1)
        assert v.status == "numeric"

    def test_set_argument(self):
        bd = ehrenfest(6)
        v = verify_halting_state(bd, point_mass(7, 0), {4, 5, 6})
        assert v.halting and v.state == frozenset({4, 5, 6})


class TestCandidates:
    @pytest.mark.parametrize("N", [3, 5, 8, 11])
    def test_ehrenfest(self, N):
        assert spectral_halting_candidates(ehrenfest(N), point_mass(N + 1, 0)) == {x for x in range(N + 1) if 2 * x >= N + 1}

    def test_bernoulli_laplace_bound(self):
        N, r = 12, 6
        bd = bernoulli_laplace(N, r)
        cand = spectral_halting_candidates(bd, point_mass(r + 1, 0))
        assert cand and all(x >= r * (N - r) / N for x in cand)

    def test_two_state(self):
        assert spectral_halting_candidates(HALF, [1.0, 0.0]) == {1}


class TestHittingDomination:
    def test_target_contains_start(self):
        s = hitting_survival(ehrenfest(4), point_mass(5, 0), [0], 10)
        assert np.all(s == 0)

    def test_ehrenfest(self):
        d, surv = tv_upper_via_hitting(ehrenfest(5), point_mass(6, 0), [3], 500, certified=True)
        assert np.all(d <= surv + 1e-12)

    def test_riffle(self):
        proj = RiffleProjection(6)
        d, surv = tv_upper_via_hitting(proj.chain, point_mass(6, 0), [proj.halting_state - 1], 60, certified=True)
        assert np.all(d <= surv + 1e-12)

    def test_non_halting_set_can_fail(self):
        with pytest.raises(Exception, match="exceeds"):
            tv_upper_via_hitting(simple_walk(10), point_mass(11, 0), [2], 200, certified=True)
