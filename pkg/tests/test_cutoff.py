import numpy as np
import pytest

from haltmix.bd_spectral import BirthDeathChain, bd_spectrum
from haltmix.chain_core import ChainError, DiscreteChain, point_mass, reversible_spectrum
from haltmix.cutoff import (
    CutoffReport,
    bound_curves,
    bounded_below,
    cutoff_bd,
    cutoff_general,
    cutoff_symmetric,
    increasing_beyond,
    quasistationary_tail_bound,
    restricted_top_eigenvalue,
    select_witness,
    symmetric_times,
    triangle_tail_inequality_check,
    tv_series,
    vanishing,
)
from haltmix.models import bernoulli_laplace, biased_walk, ehrenfest, simple_walk

from conftest import random_bd, random_dense, random_symmetric_bd


def harmonic(N: int, power: int = 1) -> float:
    return sum(1.0 / k**power for k in range(1, N + 1))


@pytest.fixture(scope="module")
def general_report() -> CutoffReport:
    fam = [(N, ehrenfest(N), {N // 2 + 1}, point_mass(N + 1, 0)) for N in (11, 21, 51, 101)]
    return cutoff_general(fam, "ehrenfest")


@pytest.fixture(scope="module")
def biased() -> CutoffReport:
    return cutoff_bd([(N, biased_walk(N, 0.7), N) for N in (25, 50, 100, 200)])


@pytest.fixture(scope="module")
def symmetric_report() -> CutoffReport:
    return cutoff_symmetric([(N, ehrenfest(N)) for N in (11, 21, 51, 101, 201)])


class TestRestrictedEigenvalue:
    def test_one_state_left(self):
        bd = random_bd(np.random.default_rng(0), 6)
        for x in range(7):
            A = [y for y in range(7) if y != x]
            assert restricted_top_eigenvalue(bd, A) == pytest.approx(bd.kernel[x, x], abs=1e-15)

    @pytest.mark.parametrize("N", [3, 10, 40])
    def test_simple_walk_cosine(self, N):
        lam = restricted_top_eigenvalue(simple_walk(N), [N])
        assert lam == pytest.approx(np.cos(np.pi / (2 * N + 1)), abs=1e-12)

    def test_ehrenfest_middle(self):
        bd = ehrenfest(5)
        pi_A = bd.stationary[3]
        assert pi_A == pytest.approx(10 / 32)
        lam = restricted_top_eigenvalue(bd, {3})
        lam1 = bd_spectrum(bd).eigenvalues[1]
        assert 1 - lam >= pi_A * (1 - lam1) - 1e-10

    def test_sturm_route_matches_dense(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            bd = random_bd(rng, int(rng.integers(3, 40)))
            x = int(rng.integers(1, bd.N + 1))
            fast = restricted_top_eigenvalue(bd, list(range(x, bd.size)))
            dense = restricted_top_eigenvalue(bd.chain, list(range(x, bd.size)))
            assert fast == pytest.approx(dense, abs=1e-12)

    def test_eigenvalue_inequality_random(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            bd = random_bd(rng, int(rng.integers(2, 30)))
            A = set(rng.choice(bd.size, size=int(rng.integers(1, bd.size)), replace=False).tolist())
            lam = restricted_top_eigenvalue(bd, A, check=False)
            lam1 = reversible_spectrum(bd.chain)[0][1]
            assert 1 - lam >= bd.stationary[sorted(A)].sum() * (1 - lam1) - 1e-10

    def test_whole_space(self):
        assert restricted_top_eigenvalue(ehrenfest(4), range(5)) == 0.0

    def test_non_reversible_reducible_rejected(self):
        K = np.array([[0.5, 0.5, 0.0, 0.0], [0.0, 0.5, 0.5, 0.0], [0.0, 0.0, 0.5, 0.5], [0.5, 0.0, 0.0, 0.5]])
        with pytest.raises(ChainError, match="reducible"):
            restricted_top_eigenvalue(DiscreteChain.from_kernel(K), [1, 3])

    def test_non_reversible_irreducible(self):
        chain = random_dense(np.random.default_rng(3), 8, density=0.6)
        lam = restricted_top_eigenvalue(chain, [0])
        sub = chain.kernel[1:, 1:]
        assert lam == pytest.approx(np.max(np.abs(np.linalg.eigvals(sub))), abs=1e-12)


class TestTailBounds:
    def test_time_zero(self):
        bd = ehrenfest(5)
        bound, exact = quasistationary_tail_bound(bd, {3}, 0)
        assert bound == pytest.approx(22 / 32) and exact == pytest.approx(22 / 32)

    def test_ehrenfest_ten(self):
        bound, exact = quasistationary_tail_bound(ehrenfest(5), {3}, 10)
        assert 0 < exact <= bound + 1e-12

    def test_whole_space(self):
        assert quasistationary_tail_bound(ehrenfest(3), range(4), 5) == (0.0, 0.0)

    def test_random_reversible(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            # random walk on a weighted complete graph
            W = rng.random((10, 10))
            chain = DiscreteChain.from_kernel((W + W.T) / (W + W.T).sum(axis=1, keepdims=True))
            A = rng.choice(10, size=3, replace=False).tolist()
            for n in (0, 1, 7, 30):
                bound, exact = quasistationary_tail_bound(chain, A, n)
                assert exact <= bound + 1e-12

    @pytest.mark.parametrize("n,m", [(0, 0), (0, 5), (5, 0), (4, 9), (20, 20)])
    def test_triangle(self, n, m):
        rng = np.random.default_rng(n * 31 + m)
        for _ in range(5):
            chain = random_dense(rng, 9, density=0.9)
            res = triangle_tail_inequality_check(chain, [4, 5], 0, n, m)
            assert res.ok

    def test_triangle_values(self):
        bd = ehrenfest(5)
        res = triangle_tail_inequality_check(bd, [3], 0, 0, 0)
        # P_0(T > 0) = 1, d(0) = 1 - 1/32, P_pi(T > 0) = 22/32
        assert res.lhs == 1.0
        assert res.tv == pytest.approx(31 / 32)
        assert res.tail == pytest.approx(22 / 32)


class TestTrendVerdicts:
    def test_increasing(self):
        assert increasing_beyond([1, 5, 12])
        assert not increasing_beyond([1, 5, 9])
        assert not increasing_beyond([1, 15, 12])
        assert increasing_beyond([3]) is None

    def test_bounded_below(self):
        assert bounded_below([0.5, 0.2, 0.3])
        assert not bounded_below([0.5, 0.05])

    def test_vanishing(self):
        assert vanishing([0.4, 0.3, 0.2])
        assert not vanishing([0.4, 0.3])
        assert not vanishing([0.4, 0.1, 0.2])


class TestBoundCurves:
    def test_grids(self):
        c = bound_curves(100.0, 10.0, 0.99)
        assert [r["gamma"] for r in c["upper"]] == list(range(1, 11))
        assert [r["epsilon"] for r in c["lower"]] == [0.1, 0.2, 0.3]
        assert c["upper"][0]["bound"] == 0.5 and c["upper"][0]["n"] == 110

    def test_lower_formula(self):
        c = bound_curves(1000.0, 10.0, 0.99)
        row = c["lower"][1]
        expected = 1 - (2 * 10 / (0.2 * 1000)) ** 2 - np.e * np.exp(-0.1 * 0.01 * 1000)
        assert row["n"] == 800 and row["bound"] == pytest.approx(expected)


class TestGeneral:
    def test_product_consistent(self, general_report):
        for r in general_report.rows:
            d = r.as_dict()
            assert abs(d["product"] - (1 - d["lambda_A"]) * d["mean"]) < 1e-12
            assert d["sigma"] >= 0 and 0 < d["lambda_A"] < 1

    def test_product_grows(self, general_report):
        prod = general_report.column("product")
        assert np.all(np.diff(prod) > 0)
        assert not general_report.flags["advisory"]

    def test_chebyshev_at_101(self, general_report):
        row = general_report.curves["101"]["upper"][2]
        assert row["gamma"] == 3 and row["d"] <= 0.1

    def test_upper_curve_valid(self, general_report):
        for c in general_report.curves.values():
            for row in c["upper"]:
                assert row["d"] <= row["bound"] + 1e-12
            for row in c["lower"]:
                assert row["d"] >= row["bound"] - 1e-12

    def test_constant_family(self):
        bd = ehrenfest(7)
        fam = [(bd, {4}, point_mass(8, 0))] * 3
        rep = cutoff_general(fam, curves=False)
        assert rep.flags["cutoff_condition"] is False
        assert np.ptp(rep.column("product")) == 0

    def test_uncertified_is_advisory(self):
        bd = ehrenfest(7)
        rep = cutoff_general([(bd, {1}, point_mass(8, 0)), (bd, {4}, point_mass(8, 0))], curves=False)
        assert rep.flags["advisory"]
        assert [r.verdict for r in rep.rows] == ["advisory", "certified"]

    def test_csv_columns(self, general_report):
        row = general_report.rows[0].as_dict()
        assert all(c in row for c in CutoffReport.CSV_COLUMNS)


class TestBD:
    def test_biased_cutoff(self, biased):
        assert biased.flags["cutoff_condition"] and biased.flags["witness_found"]
        assert biased.flags["window_condition"]
        for r in biased.rows:
            assert r.mean / (r.N / 0.4) == pytest.approx(1, abs=3 / r.N)
        sig = biased.column("sigma")
        Ns = biased.column("N")
        assert np.ptp(sig / np.sqrt(Ns)) < 0.1 * np.mean(sig / np.sqrt(Ns))

    def test_three_means_agree(self, biased):
        for r in biased.rows:
            for key in ("mean_spectral", "mean_direct"):
                assert r.extra[key] == pytest.approx(r.extra["mean_oracle"], rel=1e-8)

    def test_simple_walk_no_cutoff(self):
        rep = cutoff_bd([(N, simple_walk(N), N) for N in (25, 50, 100)])
        assert rep.flags["mean_diverges"]
        assert rep.flags["sigma_o_mean"] is False and rep.flags["cutoff_condition"] is False
        for r in rep.rows:
            assert r.mean == pytest.approx(r.N * (r.N + 1), rel=1e-9)

    def test_vanishing_drift(self):
        # p_N = 1/2 + eps_N with N eps_N = N^(1/2) -> infinity; mean ~ N/(2 eps_N)
        fam = [(N, biased_walk(N, 0.5 + N**-0.5), N) for N in (16, 64, 256, 1024)]
        rep = cutoff_bd(fam)
        assert rep.flags["cutoff_condition"]
        ratios = [r.mean / (r.N / (2 * r.N**-0.5)) for r in rep.rows]
        assert all(0.9 < q < 1 for q in ratios) and np.all(np.diff(ratios) > 0)

    def test_explicit_witness(self):
        N = 100
        y = N - int(np.ceil(np.sqrt(N)))
        rep = cutoff_bd([(N, biased_walk(N, 0.7), N, y)])
        r = rep.rows[0]
        assert r.extra["y"] == y and r.extra["passage_y_x"] == pytest.approx(np.ceil(np.sqrt(N)) / 0.4, rel=1e-6)
        assert "lower_gamma" in rep.curves["100"]

    def test_witness_rule(self):
        bd = biased_walk(50, 0.7)
        from haltmix.bd_spectral import hitting_moments_direct

        m = hitting_moments_direct(bd, 50)
        y = select_witness(bd, 50, m.mean, m.sigma)
        assert bd.stationary[: y + 1].sum() <= 50**-0.25
        assert m.mean - hitting_moments_direct(bd, y).mean <= m.sigma
        assert y + 1 == 50 or bd.stationary[: y + 2].sum() > 50**-0.25 or (
            m.mean - hitting_moments_direct(bd, y + 1).mean > m.sigma
        )

    def test_strict_missing_witness(self):
        with pytest.raises(ChainError, match="witness"):
            cutoff_bd([(20, simple_walk(20), 20)], strict=True)

    def test_witness_lower_curves_valid(self):
        N = 100
        rep = cutoff_bd([(N, biased_walk(N, 0.7), N, 90)], curves=True)
        c = rep.curves[str(N)]
        for row in c["lower_epsilon"] + c["lower_gamma"]:
            if row["bound"] is not None and "d" in row:
                assert row["d"] >= row["bound"] - 1e-12


class TestSymmetric:
    def test_condition_sums(self, symmetric_report):
        for r in symmetric_report.rows:
            N = r.N
            assert r.extra["condition_mean"] == pytest.approx(harmonic(N), abs=1e-10)
            expected = harmonic(N, 2) - 2 / (N + 1) * harmonic(N)
            assert r.extra["condition_sum"] == pytest.approx(expected, abs=1e-10)

    def test_times(self, symmetric_report):
        for r in symmetric_report.rows:
            N = r.N
            assert r.extra["t_N"] == pytest.approx((N + 1) / 4 * harmonic(N), rel=1e-12)
            assert r.extra["w_N"] / N < 1

    def test_flags(self, symmetric_report):
        # sum 1/k grows like log N and stays below the trend threshold on this family
        assert symmetric_report.flags["window_condition"]
        assert symmetric_report.flags["cutoff_condition"] is False
        assert np.all(np.diff(symmetric_report.column("condition_mean")) > 0)
        assert not symmetric_report.flags["advisory"]

    def test_condition_limit(self):
        _, _, _, c2 = symmetric_times(ehrenfest(2000))
        assert c2 == pytest.approx(np.pi**2 / 6, abs=1e-2)

    def test_mean_over_t_decreasing(self, symmetric_report):
        ratio = symmetric_report.column("mean_over_t")
        assert np.all(np.diff(ratio) < 0) and np.all(ratio > 1)

    def test_three_means(self, symmetric_report):
        for r in symmetric_report.rows:
            for key in ("mean_spectral", "mean_direct"):
                assert r.extra[key] == pytest.approx(r.extra["mean_oracle"], rel=1e-8)

    def test_bernoulli_laplace_trend(self):
        # chain on {0..n} with n balls of each colour; t_N / (n ln n / 4) decreases to 1
        rep = cutoff_symmetric([(n, bernoulli_laplace(2 * n, n)) for n in (10, 25, 50, 100)])
        ratio = np.array([r.extra["t_N"] / (r.N * np.log(r.N) / 4) for r in rep.rows])
        assert np.all(np.diff(ratio) < 0) and np.all(ratio > 1)
        assert not rep.flags["advisory"]

    def test_two_state_family(self):
        bd = BirthDeathChain.from_rates([0.5], [0.5])
        rep = cutoff_symmetric([(1, bd), (1, bd), (1, bd)])
        assert rep.flags["cutoff_condition"] is False and rep.flags["window_condition"] is False

    def test_rejects_asymmetric(self):
        with pytest.raises(ChainError, match="symmetric"):
            cutoff_symmetric([(10, biased_walk(10, 0.7))])

    def test_random_symmetric(self):
        rng = np.random.default_rng(5)
        fam = [(N, random_symmetric_bd(rng, N)) for N in (8, 16, 32)]
        rep = cutoff_symmetric(fam)
        for (N, bd), r in zip(fam, rep.rows):
            lam = bd_spectrum(bd).eigenvalues[1:]
            assert r.extra["t_N"] == pytest.approx(0.5 * np.sum(1 / (1 - lam)), rel=1e-12)
            assert r.extra["condition_mean"] >= 1 - 1e-12


def test_tv_series_matches_core():
    from haltmix.chain_core import tv_series as core_tv

    bd = ehrenfest(9)
    assert np.allclose(tv_series(bd, point_mass(10, 0), 50), core_tv(bd, point_mass(10, 0), 50), atol=1e-15)
