"""Continuous-time chains through uniformization.

``exp(tQ) = sum_n Pois(qt)(n) P^n`` with ``P = I + Q/q``. The optimal stopping
time in continuous time is computed on ``h``-skeletons ``exp(hQ)``, refining
``h`` until the survival value settles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.stats import poisson

from .chain_core import ChainError, DiscreteChain, as_distribution, is_symmetric_bd, stationary_of
from .stopping import HaltingVerdict, build_schedule, verify_halting_state

ROW_TOL = 1e-13
POISSON_TAIL = 1e-13


@dataclass(frozen=True)
class Generator:
    """Rate matrix: non-negative off-diagonals, zero row sums."""

    rates: np.ndarray

    def __post_init__(self):
        Q = np.array(self.rates, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ChainError(f"generator must be square, got shape {Q.shape}")
        off = Q - np.diag(np.diag(Q))
        if np.any(off < 0):
            i, j = np.unravel_index(np.argmin(off), Q.shape)
            raise ChainError(f"negative rate q({i},{j}) = {Q[i, j]!r}")
        rows = Q.sum(axis=1)
        scale = max(1.0, float(np.max(np.abs(np.diag(Q)))))
        bad = np.flatnonzero(np.abs(rows) > ROW_TOL * scale)
        if bad.size:
            raise ChainError(f"row {int(bad[0])} of generator sums to {rows[bad[0]]!r}")
        Q.setflags(write=False)
        object.__setattr__(self, "rates", Q)

    @property
    def size(self) -> int:
        return self.rates.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.rates)

    @property
    def stationary(self) -> np.ndarray:
        _, P = uniformize(self, "lazy")
        return stationary_of(P)


def as_generator(Q) -> Generator:
    if isinstance(Q, Generator):
        return Q
    rates = getattr(Q, "rates", None)
    if callable(rates):
        return Generator(rates())
    return Generator(Q)


def bd_generator(birth, death) -> Generator:
    """Tridiagonal generator with ``q(x, x+1) = birth[x]`` and ``q(x+1, x) = death[x]``."""
    birth = np.asarray(birth, dtype=float)
    death = np.asarray(death, dtype=float)
    n = len(birth) + 1
    Q = np.zeros((n, n))
    idx = np.arange(n - 1)
    Q[idx, idx + 1] = birth
    Q[idx + 1, idx] = death
    Q[np.arange(n), np.arange(n)] = -Q.sum(axis=1)
    return Generator(Q)


def uniformize(Q, mode: str = "lazy") -> tuple[float, np.ndarray]:
    """``(q, P = I + Q/q)`` with ``q = 2 max exit`` (lazy) or ``max exit`` (tight)."""
    G = as_generator(Q)
    top = float(np.max(G.exit_rates)) if G.size else 0.0
    if mode not in ("lazy", "tight"):
        raise ChainError(f"unknown uniformization mode {mode!r}")
    if top == 0.0:
        return 1.0, np.eye(G.size)
    q = 2.0 * top if mode == "lazy" else top
    P = np.eye(G.size) + G.rates / q
    P[P < 0] = 0.0
    P /= P.sum(axis=1, keepdims=True)
    return q, P


def _poisson_weights(mean: float) -> np.ndarray:
    if mean == 0.0:
        return np.ones(1)
    top = int(poisson.isf(0.5 * POISSON_TAIL, mean)) + 2
    return poisson.pmf(np.arange(top + 1), mean)


def _poisson_apply(P: np.ndarray, v: np.ndarray, mean: float) -> np.ndarray:
    w = _poisson_weights(mean)
    out = w[0] * v
    for k in range(1, len(w)):
        v = v @ P
        out = out + w[k] * v
    return out


def ct_marginal(Q, start, t: float, mode: str = "lazy") -> np.ndarray:
    """``pi_0 exp(tQ)`` by a Poisson-weighted sum of uniformized powers."""
    if t < 0:
        raise ChainError("t must be >= 0")
    G = as_generator(Q)
    start = np.asarray(start, dtype=float)
    if start.shape != (G.size,):
        raise ChainError(f"start has {start.size} entries, generator has {G.size} states")
    as_distribution(start)
    q, P = uniformize(G, mode)
    out = _poisson_apply(P, start, q * t)
    return out / out.sum()


def ct_tv_curve(Q, start, grid, mode: str = "lazy") -> np.ndarray:
    """``d(t) = ||pi_t - pi||_TV`` along an increasing time grid."""
    G = as_generator(Q)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0) or (grid.size and grid[0] < 0):
        raise ChainError("time grid must be non-negative and increasing")
    pi = G.stationary
    out = np.empty(grid.size)
    cur = np.asarray(start, dtype=float)
    last = 0.0
    for i, t in enumerate(grid):
        cur = ct_marginal(G, cur, t - last, mode)
        last = t
        out[i] = 0.5 * np.abs(cur - pi).sum()
    return out


def ct_hitting_survival(Q, start, A, t: float) -> float:
    """``P(T_A > t)`` through the generator killed on ``A``."""
    G = as_generator(Q)
    start = as_distribution(np.asarray(start, dtype=float), G.size)
    mask = np.zeros(G.size, dtype=bool)
    mask[np.atleast_1d(list(A) if isinstance(A, (set, frozenset)) else A)] = True
    C = ~mask
    if not C.any():
        return 0.0
    q, P = uniformize(G, "lazy")
    v = start[C]
    return float(_poisson_apply(P[np.ix_(C, C)], v, q * t).sum())


@dataclass(frozen=True)
class SkeletonResult:
    value: float
    h: float
    halvings: int
    delta: float


def skeleton_survival(
    Q, start, t: float, h: float | None = None, tol: float = 1e-8, max_halvings: int = 20
) -> SkeletonResult:
    """Survival ``P(T > t)`` of the optimal stopping time, from ``h``-skeleton schedules.

    The skeleton ``exp(hQ)`` gets the discrete optimal schedule; its survival at
    step ``floor(t/h)`` is recorded and ``h`` is halved until successive values
    differ by less than ``tol``. The default ``h = t/4`` keeps ``t`` on every grid.
    """
    G = as_generator(Q)
    start = as_distribution(np.asarray(start, dtype=float), G.size)
    pi = G.stationary
    if t == 0:
        return SkeletonResult(0.5 * float(np.abs(start - pi).sum()), 0.0, 0, 0.0)
    h = t / 4 if h is None else h
    if h <= 0:
        raise ChainError("h must be positive")
    prev = None
    delta = np.inf
    for k in range(max_halvings + 1):
        K = expm(h * G.rates)
        K[K < 0] = 0.0
        K /= K.sum(axis=1, keepdims=True)
        chain = DiscreteChain.from_kernel(K, stationary=pi)
        steps = int(np.floor(t / h + 1e-9))
        value = float(build_schedule(chain, start, steps).survival[steps])
        if prev is not None:
            delta = abs(value - prev)
            if delta < tol:
                return SkeletonResult(value, h, k, delta)
        prev = value
        h /= 2
    raise ArithmeticError(f"skeleton survival did not settle after {max_halvings} halvings (last delta {delta:.3e})")


def ct_symmetric_halting(Q, grid=None) -> HaltingVerdict:
    """Halting of ``ceil(N/2)`` (the state ``[(N+1)/2]``) for a symmetric generator started at 0.

    The lazy uniformized chain is checked in discrete time; ``pi_t`` is a
    Poisson mixture of its ``pi_n``, so a discrete certificate transfers. When a
    time grid is given, ``pi_t(x) <= pi(x)`` is also checked on it.
    """
    G = as_generator(Q)
    _, P = uniformize(G, "lazy")
    if not is_symmetric_bd(P, atol=1e-15):
        raise ChainError("generator is not symmetric under x -> N - x")
    N = G.size - 1
    x = (N + 1) // 2
    start = np.zeros(G.size)
    start[0] = 1.0
    verdict = verify_halting_state(DiscreteChain.from_kernel(P), start, x)
    if grid is not None and verdict.halting:
        pi = G.stationary
        cur = start
        last = 0.0
        for t in np.asarray(grid, dtype=float):
            cur = ct_marginal(G, cur, t - last)
            last = t
            if cur[x] > pi[x] + 1e-12:
                return HaltingVerdict(x, "not", verdict.horizon, float(pi[x] - cur[x]), witness=None, method="grid")
    return verdict
