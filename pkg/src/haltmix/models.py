"""Example chains: walks, urn models, Metropolis chains, riffle shuffles and Ehrenfest processes."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import comb, factorial, ceil
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.stats import binom

from .bd_spectral import BirthDeathChain, Tridiagonal
from .chain_core import ChainError, DiscreteChain
from .stopping import HaltingVerdict

# ---------------------------------------------------------------------------
# birth-and-death examples


def biased_walk(N: int, p: float, q: float | None = None) -> BirthDeathChain:
    """Walk with ``p_x = p``, ``q_x = q``, ``r_0 = q`` and ``r_N = p``."""
    q = 1.0 - p if q is None else q
    if N < 1:
        raise ChainError("N must be >= 1")
    if not (0 < q <= p <= 1) or abs(p + q - 1.0) > 1e-14:
        raise ChainError(f"need 0 < q <= p and p + q = 1 (got p={p}, q={q})")
    r = np.zeros(N + 1)
    r[0] = q
    r[N] = p
    return BirthDeathChain(np.append(np.full(N, p), 0.0), np.insert(np.full(N, q), 0, 0.0), r)


def ehrenfest(N: int) -> BirthDeathChain:
    """``p_x = (N-x)/(N+1)``, ``r_x = 1/(N+1)``, ``q_x = x/(N+1)``."""
    if N < 1:
        raise ChainError("N must be >= 1")
    x = np.arange(N + 1, dtype=float)
    return BirthDeathChain((N - x) / (N + 1), x / (N + 1), np.full(N + 1, 1.0 / (N + 1)))


def bernoulli_laplace(N: int, r: int) -> BirthDeathChain:
    """Red balls in the right urn; ``r`` red and ``N - r`` black balls, chain on ``{0..r}``."""
    if not (0 < 2 * r <= N):
        raise ChainError(f"need 0 < 2r <= N (got N={N}, r={r})")
    x = np.arange(r + 1, dtype=float)
    den = r * (N - r)
    p = (r - x) * (N - r - x) / den
    q = x**2 / den
    hold = 1.0 - (p + q)
    hold[np.abs(hold) < 1e-15] = 0.0
    return BirthDeathChain(p, q, hold)


def bernoulli_laplace_eigenvalues(N: int, r: int) -> np.ndarray:
    i = np.arange(r + 1, dtype=float)
    return 1.0 - i * (N - i + 1) / (r * (N - r))


def metropolis_bd(target) -> BirthDeathChain:
    """Metropolis chain for ``target`` with the simple-walk proposal; off-edge proposals hold."""
    t = np.asarray(target, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ChainError("target must be a vector with at least two states")
    if np.any(t <= 0):
        raise ChainError(f"target must be positive; target({int(np.argmin(t))}) = {t.min()!r}")
    t = t / t.sum()
    up = 0.5 * np.minimum(1.0, t[1:] / t[:-1])
    down = 0.5 * np.minimum(1.0, t[:-1] / t[1:])
    return BirthDeathChain.from_rates(up, down)


def lazy(bd: BirthDeathChain, holding: float = 0.5) -> BirthDeathChain:
    return bd.lazy(holding)


def simple_walk(N: int) -> BirthDeathChain:
    return biased_walk(N, 0.5, 0.5)


# ---------------------------------------------------------------------------
# riffle shuffle, projected on the number of rising sequences


def eulerian(N: int) -> list[int]:
    """``A_{N,1..N}``: permutations of ``N`` cards with ``r`` rising sequences."""
    if N < 1:
        raise ChainError("N must be >= 1")
    row = [1]
    for n in range(2, N + 1):
        row = [
            k * (row[k - 1] if k - 1 < len(row) else 0) + (n - k + 1) * (row[k - 2] if k >= 2 else 0)
            for k in range(1, n + 1)
        ]
    return row


MAX_RIFFLE_BITS = 4096
MAX_RIFFLE_KERNEL_N = 9  # enumeration cross-check only


@dataclass(frozen=True)
class RiffleProjection:
    """Number of rising sequences after repeated riffle shuffles of ``N`` cards.

    States are ``r = 1..N`` and are stored at index ``r - 1``.
    """

    N: int
    eulerian: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "eulerian", tuple(eulerian(self.N)))

    @property
    def stationary(self) -> list[Fraction]:
        total = factorial(self.N)
        return [Fraction(a, total) for a in self.eulerian]

    @property
    def halting_state(self) -> int:
        """``ceil((N+1)/2)``."""
        return (self.N + 2) // 2

    @cached_property
    def kernel(self) -> np.ndarray:
        return riffle_kernel(self.N)

    @cached_property
    def chain(self) -> DiscreteChain:
        pi = np.array([float(v) for v in self.stationary])
        return DiscreteChain.from_kernel(self.kernel, stationary=pi)


def riffle_class_probability(N: int, n: int, r: int) -> Fraction:
    """``P(sigma_n = sigma)`` for a fixed permutation with ``r`` rising sequences."""
    if n * N > MAX_RIFFLE_BITS:
        raise ChainError(f"n*N = {n * N} exceeds the {MAX_RIFFLE_BITS}-bit cap")
    return Fraction(comb(N + 2**n - r, N), 2 ** (n * N))


def riffle_distribution(proj: RiffleProjection, n: int) -> list[Fraction]:
    """Exact law ``nu_n(r) = A_{N,r} C(N + 2^n - r, N) / 2^{nN}``."""
    if n < 0:
        raise ChainError("n must be >= 0")
    return [a * riffle_class_probability(proj.N, n, r) for r, a in enumerate(proj.eulerian, start=1)]


def riffle_tv(proj: RiffleProjection, n: int) -> Fraction:
    nu = proj.stationary
    return sum((abs(a - b) for a, b in zip(riffle_distribution(proj, n), nu)), Fraction(0)) / 2


def _elementary_symmetric(values: list[int]) -> list[int]:
    e = [1]
    for v in values:
        e = [a + v * b for a, b in zip(e + [0], [0] + e)]
    return e


def riffle_halting_check(proj: RiffleProjection, horizon: int = 64, r: int | None = None) -> HaltingVerdict:
    """Decide whether ``r`` (default ``ceil((N+1)/2)``) is a halting state, exactly.

    ``N! C(2^n + N - r, N) <= 2^{nN}`` reads ``P(M) <= 0`` for
    ``P(M) = prod_j (M + j - r) - M^N`` at ``M = 2^n``. The sign of the leading
    nonzero coefficient of ``P`` fixes the sign for large ``M``; a Cauchy bound
    gives the threshold beyond which it holds, and all smaller ``n`` are swept
    exactly.
    """
    N = proj.N
    r = proj.halting_state if r is None else r
    if not 1 <= r <= N:
        raise ChainError(f"r must be in 1..{N}")
    total = factorial(N)
    nu_r = Fraction(proj.eulerian[r - 1], total)

    def excess(n: int) -> Fraction:
        return proj.eulerian[r - 1] * riffle_class_probability(N, n, r) - nu_r

    coeffs = _elementary_symmetric([j - r for j in range(1, N + 1)])[1:]  # e_1..e_N
    lead = next((i for i, c in enumerate(coeffs) if c != 0), None)
    if lead is None:
        return HaltingVerdict(r, "certified", 0, 0.0, method="exact-polynomial")
    ek = coeffs[lead]
    bound = 1 + max((Fraction(abs(c), abs(ek)) for c in coeffs[lead + 1 :]), default=Fraction(0))
    n_max = 0
    while 2**n_max < bound:
        n_max += 1
    sweep = max(n_max, horizon) if ek < 0 else None
    margin = None
    n = 0
    while True:
        if n * N > MAX_RIFFLE_BITS:
            return HaltingVerdict(r, "numeric", n - 1, float(-margin), method="exact-sweep")
        e = excess(n)
        margin = e if margin is None else max(margin, e)
        if e > 0:
            return HaltingVerdict(r, "not", n, float(-margin), witness=n, method="exact-sweep")
        if sweep is not None and n >= sweep:
            return HaltingVerdict(r, "certified", n, float(-margin), method="exact-polynomial")
        n += 1


def _shuffle_law(proj: RiffleProjection, a: int) -> list[Fraction]:
    """Rising-sequence law after one ``a``-shuffle: ``A_{N,r} C(N + a - r, N) / a^N``."""
    N = proj.N
    return [Fraction(A * comb(N + a - r, N), a**N) for r, A in enumerate(proj.eulerian, start=1)]


def _solve_exact(M: list[list[Fraction]], B: list[list[Fraction]]) -> list[list[Fraction]]:
    """``X`` with ``M X = B`` by Gauss-Jordan elimination over the rationals."""
    n = len(M)
    rows = [list(m) + list(b) for m, b in zip(M, B)]
    for c in range(n):
        piv = next((i for i in range(c, n) if rows[i][c] != 0), None)
        if piv is None:
            raise ChainError("singular system in exact riffle kernel")
        rows[c], rows[piv] = rows[piv], rows[c]
        inv = 1 / rows[c][c]
        rows[c] = [v * inv for v in rows[c]]
        for i in range(n):
            if i != c and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [u - f * v for u, v in zip(rows[i], rows[c])]
    return [row[n:] for row in rows]


def riffle_kernel_exact(N: int) -> list[list[Fraction]]:
    """Exact transition matrix of the rising-sequence count under riffle shuffles.

    Started from any law that is uniform on rising-sequence classes, one riffle
    shuffle moves the class count by the class-averaged kernel ``K``. The law
    after an ``a``-shuffle is such a law, and a riffle after it is a
    ``2a``-shuffle, so ``mu_a K = mu_{2a}`` for every ``a``; ``a = 1..N`` pins
    ``K`` down.
    """
    if N < 1:
        raise ChainError("N must be >= 1")
    proj = RiffleProjection(N)
    M = [_shuffle_law(proj, a) for a in range(1, N + 1)]
    B = [_shuffle_law(proj, 2 * a) for a in range(1, N + 1)]
    K = _solve_exact(M, B)
    if any(sum(row) != 1 or min(row) < 0 for row in K):
        raise ChainError("exact riffle kernel is not stochastic")
    return K


def riffle_kernel(N: int) -> np.ndarray:
    return np.array([[float(v) for v in row] for row in riffle_kernel_exact(N)])


def _permutations(N: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(N))), dtype=np.int8)


def _rising(perms: np.ndarray) -> np.ndarray:
    return 1 + (perms[..., 1:] < perms[..., :-1]).sum(axis=-1)


def riffle_kernel_enumerated(N: int) -> np.ndarray:
    """Class-averaged kernel by enumerating ``S_N`` (a cross-check for small decks)."""
    if N > MAX_RIFFLE_KERNEL_N:
        raise ChainError(f"riffle kernel enumeration is limited to N <= {MAX_RIFFLE_KERNEL_N}")
    if N == 1:
        return np.ones((1, 1))
    perms = _permutations(N)
    f = _rising(perms)
    q = np.array([comb(N + 2 - r, N) for r in range(1, N + 1)], dtype=float) / 2**N
    K = np.zeros((N, N))
    for t in np.flatnonzero(f <= 2):
        comp = perms[:, perms[t]]
        np.add.at(K, (f - 1, _rising(comp) - 1), q[f[t] - 1])
    K /= np.bincount(f - 1, minlength=N)[:, None]
    return K


# ---------------------------------------------------------------------------
# continuous-time models


@dataclass(frozen=True)
class CtEhrenfest:
    """``N`` independent two-state sites flipping ``0 -> 1`` at rate ``lam`` and ``1 -> 0`` at rate ``mu``."""

    N: int
    lam: float
    mu: float

    def __post_init__(self):
        if self.N < 1:
            raise ChainError("N must be >= 1")
        if not (self.lam > 0 and self.mu > 0):
            raise ChainError("lam and mu must be positive")

    @property
    def theta(self) -> float:
        return self.lam + self.mu

    @property
    def stationary(self) -> np.ndarray:
        return binom.pmf(np.arange(self.N + 1), self.N, self.lam / self.theta)

    def rates(self) -> np.ndarray:
        i = np.arange(self.N + 1, dtype=float)
        Q = np.zeros((self.N + 1, self.N + 1))
        idx = np.arange(self.N)
        Q[idx, idx + 1] = self.lam * (self.N - i[:-1])
        Q[idx + 1, idx] = self.mu * i[1:]
        Q[np.arange(self.N + 1), np.arange(self.N + 1)] = -Q.sum(axis=1)
        return Q

    def reflected(self) -> "CtEhrenfest":
        return CtEhrenfest(self.N, self.mu, self.lam)

    def tridiagonal(self) -> Tridiagonal:
        i = np.arange(self.N + 1, dtype=float)
        return Tridiagonal(-(self.lam * (self.N - i) + self.mu * i), self.lam * (self.N - i[:-1]), self.mu * i[1:])


def _site_probabilities(m: CtEhrenfest, t: float) -> tuple[float, float]:
    e = np.exp(-m.theta * t)
    p11 = m.lam / m.theta + m.mu / m.theta * e
    p01 = m.lam / m.theta * (1.0 - e)
    return p11, p01


def ct_ehrenfest_marginal(m: CtEhrenfest, start: int, t: float) -> np.ndarray:
    """Law of ``X_t`` from ``start``: ``Bin(start, p_t(1,1)) * Bin(N - start, p_t(0,1))``."""
    if t < 0:
        raise ChainError("t must be >= 0")
    if not 0 <= start <= m.N:
        raise ChainError(f"start must be in 0..{m.N}")
    p11, p01 = _site_probabilities(m, t)
    a = binom.pmf(np.arange(start + 1), start, p11)
    b = binom.pmf(np.arange(m.N - start + 1), m.N - start, p01)
    return np.convolve(a, b)


def ct_ehrenfest_ratio(m: CtEhrenfest, x, t):
    """``pi_t(x) / pi(x)`` from 0: ``(1 + (lam/mu) u)^(N-x) (1 - u)^x`` with ``u = exp(-theta t)``."""
    u = np.exp(-m.theta * np.asarray(t, dtype=float))
    x = np.asarray(x)
    return (1.0 + m.lam / m.mu * u) ** (m.N - x) * (1.0 - u) ** x


def ct_ehrenfest_ratio_max(m: CtEhrenfest, x: int) -> tuple[float, float]:
    """Maximiser ``u*`` in ``[0, 1]`` and maximum of the log-concave ratio over ``t >= 0``."""
    a = m.lam / m.mu
    u = ((m.N - x) * a - x) / (a * m.N)
    u = min(max(u, 0.0), 1.0)
    value = (1.0 + a * u) ** (m.N - x) * (1.0 - u) ** x
    return u, value


def ct_ehrenfest_halting(m: CtEhrenfest) -> int:
    """Minimal halting state from 0: ``ceil(lam N / (lam + mu))``, computed exactly."""
    lam = Fraction(m.lam)
    mu = Fraction(m.mu)
    return ceil(lam * m.N / (lam + mu))


def ct_ehrenfest_is_halting(m: CtEhrenfest, x: int) -> bool:
    """The log-ratio is concave in ``u`` and vanishes at ``u = 0``, so the slope there decides."""
    lam = Fraction(m.lam)
    mu = Fraction(m.mu)
    return (m.N - x) * lam <= x * mu


@dataclass(frozen=True)
class HittingGap:
    """``U_N - V_N`` by three routes, plus ``U_N`` and ``V_N`` from killed-generator spectra."""

    x_star: int
    y_star: int
    u_integral: float
    time_integral: float
    U: float
    V: float

    @property
    def sturm(self) -> float:
        return self.U - self.V

    @property
    def value(self) -> float:
        return self.u_integral

    def max_disagreement(self) -> float:
        vals = (self.u_integral, self.time_integral, self.sturm)
        return max(vals) - min(vals)


def killed_generator_rates(m: CtEhrenfest, size: int) -> np.ndarray:
    """Eigenvalues of ``-Q`` restricted to ``{0..size-1}``, increasing."""
    if size < 1:
        return np.empty(0)
    if size == 1:
        return np.array([m.lam * m.N])
    return -m.tridiagonal().eigenvalues(size)[::-1]


def ct_ehrenfest_hitting_gap(m: CtEhrenfest, epsabs: float = 1e-11) -> HittingGap:
    """``U_N - V_N = E_0[T_x*] - E_N[T_x*]`` for ``x* = ceil(lam N / theta)``.

    Routes: the ``u``-integral of the ratio difference, time quadrature of the
    closed-form marginals, and the spectra of the two killed generators.
    """
    N = m.N
    xs = ct_ehrenfest_halting(m)
    ys = N - xs
    a = m.lam / m.mu
    b = m.mu / m.lam

    def integrand(u: float) -> float:
        if u == 0.0:
            return b * xs - ys - (a * ys - xs)
        top = (1 + b * u) ** xs * (1 - u) ** ys
        bot = (1 - u) ** xs * (1 + a * u) ** ys
        return (top - bot) / u

    val, err = integrate.quad(integrand, 0.0, 1.0, epsabs=epsabs, epsrel=1e-12, limit=400)
    if err > 1e-9:
        raise ArithmeticError(f"u-quadrature did not converge (error estimate {err:.2e})")
    u_route = val / m.theta

    pi_x = float(binom.pmf(xs, N, m.lam / m.theta))

    def diff(t: float) -> float:
        return ct_ehrenfest_marginal(m, N, t)[xs] - ct_ehrenfest_marginal(m, 0, t)[xs]

    t_end = 40.0 / m.theta + np.log(N + 1) / m.theta
    pts = np.log(np.maximum(N, 2)) / m.theta * np.array([0.25, 0.5, 1.0, 2.0])
    tval, terr = integrate.quad(diff, 0.0, t_end, epsabs=1e-14, epsrel=1e-12, limit=800, points=pts)
    if terr > 1e-9 * max(pi_x, 1e-300) and terr > 1e-12:
        raise ArithmeticError(f"time quadrature did not converge (error estimate {terr:.2e})")
    t_route = tval / pi_x

    U = float(np.sum(1.0 / killed_generator_rates(m, xs)))
    V = float(np.sum(1.0 / killed_generator_rates(m.reflected(), ys))) if ys > 0 else 0.0
    return HittingGap(xs, ys, u_route, t_route, U, V)


def ct_ehrenfest_interleaving(m: CtEhrenfest, tol: float = 1e-9) -> bool:
    """The ``i``-th smallest point of ``V_A`` and ``V_B`` lies in ``[i theta, (i+1) theta]``.

    Points may sit on a shared endpoint (always so when ``lam == mu``), so the
    intervals are matched to the sorted multiset rather than counted.
    """
    xs = ct_ehrenfest_halting(m)
    ys = m.N - xs
    pts = np.sort(np.concatenate([killed_generator_rates(m, xs), killed_generator_rates(m.reflected(), ys)]))
    if len(pts) != m.N:
        return False
    i = np.arange(m.N)
    slack = tol * m.theta * max(m.N, 1)
    return bool(np.all(pts >= i * m.theta - slack) and np.all(pts <= (i + 1) * m.theta + slack))


def ct_ehrenfest_tv(m: CtEhrenfest, t: float) -> float:
    """``d(t)`` from 0: TV between ``Bin(N, p_t(0,1))`` and ``Bin(N, lam/theta)``."""
    k = np.arange(m.N + 1)
    _, p01 = _site_probabilities(m, t)
    return 0.5 * float(np.abs(binom.pmf(k, m.N, p01) - m.stationary).sum())


@dataclass(frozen=True)
class TwoStateCT:
    """Two-state chain with rates ``lam`` (0 -> 1) and ``mu`` (1 -> 0), started with ``P(X_0 = 0) = p``."""

    lam: float
    mu: float
    p: float

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ChainError("rates must be positive")
        if not self.p > self.mu / self.theta:
            raise ChainError("need p > mu/theta")

    @property
    def theta(self) -> float:
        return self.lam + self.mu

    @property
    def q(self) -> float:
        return 1.0 - self.p

    def __call__(self, t):
        return (self.p * self.lam - self.mu * self.q) / self.theta * np.exp(-np.asarray(t, dtype=float) * self.theta)

    def marginal(self, t: float) -> np.ndarray:
        e = np.exp(-self.theta * t)
        x0 = self.mu / self.theta + (self.p - self.mu / self.theta) * e
        return np.array([x0, 1.0 - x0])

    @property
    def coupling_mass_at_zero(self) -> float:
        return self.q + self.mu / self.theta

    def rates(self) -> np.ndarray:
        return np.array([[-self.lam, self.lam], [self.mu, -self.mu]])

    @property
    def start(self) -> np.ndarray:
        return np.array([self.p, self.q])


def two_state_ct(lam: float, mu: float, p: float) -> Callable:
    return TwoStateCT(lam, mu, p)
