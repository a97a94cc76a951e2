from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from haltmix.chain_core import (
    ChainError,
    DiscreteChain,
    as_distribution,
    communicating_classes,
    evolve,
    is_monotone,
    is_symmetric_bd,
    period,
    point_mass,
    reversible_spectrum,
    separation,
    separation_series,
    stationary_of,
    tv_distance,
    tv_series,
)
from haltmix.models import bernoulli_laplace, biased_walk, ehrenfest

from conftest import random_bd, random_dense

HALF = np.array([[0.5, 0.5], [0.5, 0.5]])


def exact_power_row(kernel, start, n):
    K = [[Fraction(v) for v in row] for row in kernel]
    row = [Fraction(v) for v in start]
    for _ in range(n):
        row = [sum(row[i] * K[i][j] for i in range(len(row))) for j in range(len(row))]
    return row


class TestValidation:
    def test_rejects_bad_row_sum(self):
        with pytest.raises(ChainError, match="row 1"):
            DiscreteChain.from_kernel([[1.0, 0.0], [0.3, 0.6]])

    def test_rejects_negative_entry(self):
        with pytest.raises(ChainError, match="negative"):
            DiscreteChain.from_kernel([[1.2, -0.2], [0.5, 0.5]])

    def test_rejects_non_square(self):
        with pytest.raises(ChainError):
            DiscreteChain.from_kernel([[1.0, 0.0, 0.0]])

    def test_distribution_checks(self):
        with pytest.raises(ChainError):
            as_distribution([0.5, 0.6])
        with pytest.raises(ChainError):
            as_distribution([1.5, -0.5])
        with pytest.raises(ChainError, match="entries"):
            as_distribution([1.0], 2)

    def test_flags(self):
        c = DiscreteChain.from_kernel([[0.0, 1.0], [1.0, 0.0]])
        assert c.irreducible and not c.aperiodic and c.reversible
        assert period(c.kernel) == 2
        K = np.array([[1.0, 0.0], [0.5, 0.5]])
        assert len(communicating_classes(K)) == 2
        with pytest.raises(ChainError, match="reducible"):
            DiscreteChain.from_kernel(K)

    def test_reducible_stationary_rejected(self):
        with pytest.raises(ChainError):
            stationary_of(np.eye(2))


class TestEvolve:
    def test_one_step_uniform(self):
        out = evolve(HALF, [1.0, 0.0], 1)
        assert np.array_equal(out, [[1.0, 0.0], [0.5, 0.5]])

    def test_zero_steps(self):
        out = evolve(ehrenfest(3), point_mass(4, 0), 0)
        assert np.array_equal(out, [[1.0, 0.0, 0.0, 0.0]])

    def test_ehrenfest_against_exact_arithmetic(self):
        bd = ehrenfest(3)
        out = evolve(bd, point_mass(4, 0), 50)
        exact = exact_power_row(bd.kernel, point_mass(4, 0), 50)
        assert np.max(np.abs(out[50] - np.array([float(v) for v in exact]))) < 1e-10
        assert np.max(np.abs(out[50] - np.array([comb(3, x) / 8 for x in range(4)]))) < 1e-10

    def test_negative_horizon(self):
        with pytest.raises(ChainError):
            evolve(HALF, [1.0, 0.0], -1)


class TestDistances:
    def test_tv_basic(self):
        assert tv_distance([0.2, 0.8], [0.2, 0.8]) == 0.0
        assert tv_distance([1.0, 0.0], [0.5, 0.5]) == 0.5

    def test_tv_two_state_series(self):
        d = tv_series(HALF, [1.0, 0.0], 1)
        assert d[0] == 0.5 and d[1] == 0.0

    def test_separation_basic(self):
        assert separation([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert separation([1.0, 0.0], [0.5, 0.5]) == 1.0

    def test_separation_dominates_tv(self):
        bd = ehrenfest(3)
        s = separation_series(bd, point_mass(4, 0), 2)
        d = tv_series(bd, point_mass(4, 0), 2)
        assert s[2] >= d[2]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 12))
    def test_sep_ge_tv_random(self, seed, n):
        rng = np.random.default_rng(seed)
        chain = random_dense(rng, n)
        start = rng.dirichlet(np.ones(n))
        assert np.all(separation_series(chain, start, 20) >= tv_series(chain, start, 20) - 1e-14)


class TestStationary:
    def test_uniform(self):
        assert np.allclose(stationary_of(HALF), [0.5, 0.5])

    def test_ehrenfest_binomial(self):
        assert np.allclose(ehrenfest(3).stationary, [1 / 8, 3 / 8, 3 / 8, 1 / 8], atol=1e-15)

    def test_biased_walk(self):
        assert np.allclose(biased_walk(2, 2 / 3).stationary, [1 / 7, 2 / 7, 4 / 7], atol=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 30))
    def test_fixed_point(self, seed, n):
        chain = random_dense(np.random.default_rng(seed), n)
        pi = chain.stationary
        assert abs(pi.sum() - 1) < 1e-12
        assert np.max(np.abs(pi @ chain.kernel - pi)) < 1e-12


class TestStructure:
    def test_bd_monotone(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            bd = random_bd(rng, 12)  # p, q <= 0.45 so p_x + q_{x+1} < 1
            assert is_monotone(bd)[0]

    def test_bernoulli_laplace_not_monotone(self):
        ok, witness = is_monotone(bernoulli_laplace(4, 2))
        assert not ok and witness[0] == 0

    def test_identity_monotone(self):
        assert is_monotone(np.eye(3)) == (True, None)

    def test_symmetry(self):
        assert is_symmetric_bd(ehrenfest(3))
        assert not is_symmetric_bd(biased_walk(4, 0.6))
        assert is_symmetric_bd(np.eye(1))

    def test_reversible_spectrum_orthonormal(self):
        bd = ehrenfest(6)
        w, V = reversible_spectrum(bd)
        pi = bd.stationary
        assert np.allclose((V * pi) @ V.T, np.eye(7), atol=1e-12)
        assert np.allclose(w, 1 - 2 * np.arange(7) / 7, atol=1e-13)
        assert np.all(V[:, 0] >= 0)
