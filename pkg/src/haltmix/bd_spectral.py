"""Birth-and-death chains and their orthogonal-polynomial spectral theory.

A birth-and-death chain on ``{0..N}`` is stored with full-length rate arrays:
``p[x] = k(x, x+1)`` (``p[N] = 0``), ``q[x] = k(x, x-1)`` (``q[0] = 0``) and
``r[x] = k(x, x)``.

Eigenvalues are found by Sturm bisection on the three-term polynomial
recurrence, then polished with one Newton step. Eigenvectors come from the
same recurrence evaluated at each eigenvalue, with inverse iteration on the
symmetrised matrix as a fallback when the recurrence loses accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg.lapack import dstein

from .chain_core import ChainError, DiscreteChain, as_chain, is_monotone, is_symmetric_bd

RATE_TOL = 1e-14
_BIG = 1e100
_SMALL = 1e-100
CLUSTER_GAP = 1e-3


class SpectralError(RuntimeError):
    """Eigensolver failure (unseparated roots, interlacing violation)."""


# ---------------------------------------------------------------------------
# tridiagonal machinery


@dataclass(frozen=True)
class Tridiagonal:
    """Tridiagonal matrix with strictly positive products ``up[i] * low[i]``.

    ``up[i] = M[i, i+1]`` and ``low[i] = M[i+1, i]``.
    """

    diag: np.ndarray
    up: np.ndarray
    low: np.ndarray

    def __post_init__(self):
        n = len(self.diag)
        if len(self.up) != n - 1 or len(self.low) != n - 1:
            raise ChainError("tridiagonal off-diagonals must have length n-1")
        if np.any(np.asarray(self.up) * np.asarray(self.low) <= 0):
            raise ChainError("off-diagonal products must be positive (irreducible)")

    @property
    def n(self) -> int:
        return len(self.diag)

    def dense(self) -> np.ndarray:
        M = np.diag(np.asarray(self.diag, dtype=float))
        idx = np.arange(self.n - 1)
        M[idx, idx + 1] = self.up
        M[idx + 1, idx] = self.low
        return M

    def principal(self, size: int) -> "Tridiagonal":
        return Tridiagonal(self.diag[:size], self.up[: size - 1], self.low[: size - 1])

    @cached_property
    def weights(self) -> np.ndarray:
        """Unnormalised symmetrising weights, ``w(0) = 1``."""
        logw = np.concatenate([[0.0], np.cumsum(np.log(self.up) - np.log(self.low))])
        return np.exp(logw - logw.max()) if logw.max() > 700 else np.exp(logw)

    def gershgorin(self) -> tuple[float, float]:
        e = np.sqrt(self.up * self.low)
        rad = np.zeros(self.n)
        rad[:-1] += e
        rad[1:] += e
        return float(np.min(self.diag - rad)), float(np.max(self.diag + rad))

    def _divisor(self, k: int) -> float:
        # phi_k is normalised by up[k-1]; the top order uses the plain determinant
        return self.up[k - 1] if k - 1 < self.n - 1 else 1.0

    def sturm_count(self, t, size: int | None = None):
        """Number of eigenvalues of the order-``size`` leading block strictly above ``t``.

        Counts sign changes in ``phi_0(t), ..., phi_size(t)``; a vanishing
        ``phi_k`` takes the sign of its predecessor.
        """
        size = self.n if size is None else size
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        prev = np.zeros_like(t)
        cur = np.ones_like(t)
        last = np.ones_like(t)
        count = np.zeros(t.shape, dtype=int)
        for k in range(1, size + 1):
            a = self.diag[k - 1]
            c = self.low[k - 2] if k >= 2 else 0.0
            nxt = ((t - a) * cur - c * prev) / self._divisor(k)
            prev, cur = cur, nxt
            s = np.sign(cur)
            count += (s != 0) & (s != last)
            last = np.where(s != 0, s, last)
            mag = np.maximum(np.abs(prev), np.abs(cur))
            rescale = (mag > _BIG) | ((mag < _SMALL) & (mag > 0))
            if np.any(rescale):
                f = np.where(rescale, mag, 1.0)
                prev = prev / f
                cur = cur / f
        return int(count[0]) if scalar else count

    def phi(self, t: float, upto: int) -> np.ndarray:
        """Unscaled values ``phi_0(t), ..., phi_upto(t)``."""
        out = np.empty(upto + 1)
        out[0] = 1.0
        for k in range(1, upto + 1):
            a = self.diag[k - 1]
            prev2 = out[k - 2] if k >= 2 else 0.0
            c = self.low[k - 2] if k >= 2 else 0.0
            out[k] = ((t - a) * out[k - 1] - c * prev2) / self._divisor(k)
        return out

    def _phi_and_derivative(self, t: np.ndarray, size: int):
        p0, p1 = np.zeros_like(t), np.ones_like(t)
        d0, d1 = np.zeros_like(t), np.zeros_like(t)
        for k in range(1, size + 1):
            a = self.diag[k - 1]
            c = self.low[k - 2] if k >= 2 else 0.0
            div = self._divisor(k)
            p2 = ((t - a) * p1 - c * p0) / div
            d2 = ((t - a) * d1 + p1 - c * d0) / div
            p0, p1, d0, d1 = p1, p2, d1, d2
            mag = np.maximum(np.maximum(np.abs(p0), np.abs(p1)), np.maximum(np.abs(d0), np.abs(d1)))
            rescale = mag > _BIG
            if np.any(rescale):
                f = np.where(rescale, mag, 1.0)
                p0, p1, d0, d1 = p0 / f, p1 / f, d0 / f, d1 / f
        return p1, d1

    def eigenvalues(self, size: int | None = None, width: float = 1e-13) -> np.ndarray:
        """Eigenvalues of the order-``size`` leading block, strictly decreasing."""
        size = self.n if size is None else size
        if size < 1:
            return np.empty(0)
        sub = self.principal(size) if size < self.n else self
        if size == 1:
            return np.array([float(sub.diag[0])])
        lo0, hi0 = sub.gershgorin()
        lo0 -= 1e-9 * max(1.0, abs(lo0))
        hi0 += 1e-9 * max(1.0, abs(hi0))
        k = np.arange(size)
        lo = np.full(size, lo0)
        hi = np.full(size, hi0)
        iters = int(np.ceil(np.log2((hi0 - lo0) / width))) + 2
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            above = sub.sturm_count(mid) >= k + 1
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        lam = 0.5 * (lo + hi)
        f, df = sub._phi_and_derivative(lam, size)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(df != 0, f / df, 0.0)
        ok = np.isfinite(step) & (np.abs(step) <= 2 * width + (hi - lo))
        lam = np.where(ok, lam - step, lam)
        if np.any(np.diff(lam) >= 0):
            bad = int(np.flatnonzero(np.diff(lam) >= 0)[0])
            raise SpectralError(
                f"could not separate eigenvalues {bad} and {bad + 1}: {lam[bad]!r}, {lam[bad + 1]!r}"
            )
        return lam

    def eigenvectors(self, eigenvalues: np.ndarray, residual_tol: float = 1e-13) -> np.ndarray:
        """Rows ``V_k``, orthonormal in ``L2(weights)`` with ``V_k(0) > 0``.

        Accuracy is judged on the symmetrised vectors ``u = V * sqrt(w)``:
        a row whose residual ``|S u - lam u|_inf`` exceeds ``residual_tol``, or
        whose eigenvalue lies within ``CLUSTER_GAP`` of a neighbour, is
        recomputed by inverse iteration.
        """
        size = len(eigenvalues)
        sub = self.principal(size) if size < self.n else self
        w = sub.weights
        if not np.all(w > 0):
            raise SpectralError(f"stationary weights underflow at state {int(np.argmin(w))}; L2(pi) vectors not representable")
        s = np.sqrt(w)
        lam = np.asarray(eigenvalues, dtype=float)
        Phi = np.empty((size, size))  # Phi[x, k] = phi_x(lam_k)
        Phi[0] = 1.0
        for x in range(1, size):
            c = sub.low[x - 2] if x >= 2 else 0.0
            prev2 = Phi[x - 2] if x >= 2 else 0.0
            Phi[x] = ((lam - sub.diag[x - 1]) * Phi[x - 1] - c * prev2) / sub.up[x - 1]
            big = np.abs(Phi[x]) > 1e150
            if np.any(big):
                Phi[: x + 1, big] /= np.abs(Phi[x, big])
        U = Phi.T * s
        with np.errstate(invalid="ignore", over="ignore"):
            U /= np.linalg.norm(U, axis=1)[:, None]
        d, e = np.asarray(sub.diag, dtype=float), np.sqrt(sub.up * sub.low)
        SU = U * d
        SU[:, :-1] += U[:, 1:] * e
        SU[:, 1:] += U[:, :-1] * e
        resid = np.max(np.abs(SU - lam[:, None] * U), axis=1)
        # a small residual does not make close eigenvectors orthogonal, so
        # clustered eigenvalues always go through inverse iteration together
        near = np.abs(np.diff(lam)) < CLUSTER_GAP
        bad = ~(resid < residual_tol)
        bad[:-1] |= near
        bad[1:] |= near
        if bad.any():
            U[bad] = _inverse_iteration(d, e, lam)[bad]
        V = U / s
        V *= np.sign(V[:, :1])
        return V / np.sqrt((V**2 * w).sum(axis=1))[:, None]


def _inverse_iteration(d: np.ndarray, e: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Rows: unit eigenvectors of the symmetric tridiagonal ``(d, e)`` at ``lam``.

    LAPACK ``dstein``: inverse iteration with reorthogonalisation inside clusters.
    """
    n = len(d)
    order = np.argsort(lam)
    z, info = dstein(d, e, lam[order], np.ones(n, dtype=np.int32), np.array([n] + [0] * (n - 1), dtype=np.int32))
    if info != 0:
        raise SpectralError(f"inverse iteration did not converge (info={info})")
    out = np.empty((len(lam), n))
    out[order] = z[:, : len(lam)].T
    return out


# ---------------------------------------------------------------------------
# birth-and-death chains


@dataclass(frozen=True)
class BirthDeathChain:
    """Tridiagonal kernel on ``{0..N}`` given by up, down and holding rates."""

    p: np.ndarray
    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        p, q, r = (np.asarray(a, dtype=float) for a in (self.p, self.q, self.r))
        n = len(r)
        if len(p) != n or len(q) != n:
            raise ChainError("p, q, r must all have length N+1 (use from_rates for short forms)")
        if p[-1] != 0 or q[0] != 0:
            raise ChainError("p[N] and q[0] must be zero")
        if np.any(p < 0) or np.any(q < 0) or np.any(r < 0):
            raise ChainError("rates must be non-negative")
        if np.any(p[:-1] <= 0) or np.any(q[1:] <= 0):
            x = int(np.flatnonzero(np.concatenate([p[:-1] <= 0, [False]]) | np.concatenate([[False], q[1:] <= 0]))[0])
            raise ChainError(f"chain is reducible: zero rate at state {x}")
        tot = p + q + r
        bad = np.flatnonzero(np.abs(tot - 1.0) > RATE_TOL)
        if bad.size:
            raise ChainError(f"rates at state {int(bad[0])} sum to {tot[bad[0]]!r}")
        for name, a in (("p", p), ("q", q), ("r", r)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def from_rates(cls, p: Sequence[float], q: Sequence[float], r: Sequence[float] | None = None):
        """Build from ``p_0..p_{N-1}`` and ``q_1..q_N`` (full-length arrays also accepted).

        Missing holding rates default to ``1 - p - q``.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if r is not None:
            r = np.asarray(r, dtype=float)
            n = len(r)
        else:
            n = max(len(p), len(q)) + (0 if len(p) == len(q) and len(p) and (p[-1] == 0 and q[0] == 0) else 1)
        if len(p) == n - 1:
            p = np.append(p, 0.0)
        if len(q) == n - 1:
            q = np.insert(q, 0, 0.0)
        if r is None:
            r = 1.0 - (p + q)
            r[np.abs(r) < 1e-15] = 0.0
        return cls(p, q, r)

    @classmethod
    def from_kernel(cls, kernel) -> "BirthDeathChain":
        K = np.asarray(kernel, dtype=float)
        n = K.shape[0]
        if np.any(np.abs(np.triu(K, 2)) > 0) or np.any(np.abs(np.tril(K, -2)) > 0):
            raise ChainError("kernel is not tridiagonal")
        p = np.append(np.diag(K, 1), 0.0)
        q = np.insert(np.diag(K, -1), 0, 0.0)
        return cls(p, q, np.diag(K).copy())

    @property
    def N(self) -> int:
        return len(self.r) - 1

    @property
    def size(self) -> int:
        return len(self.r)

    @cached_property
    def tri(self) -> Tridiagonal:
        return Tridiagonal(self.r, self.p[:-1], self.q[1:])

    @cached_property
    def kernel(self) -> np.ndarray:
        K = np.diag(self.r.copy())
        idx = np.arange(self.N)
        K[idx, idx + 1] = self.p[:-1]
        K[idx + 1, idx] = self.q[1:]
        K.setflags(write=False)
        return K

    @cached_property
    def stationary(self) -> np.ndarray:
        return bd_stationary(self)

    @cached_property
    def chain(self) -> DiscreteChain:
        return DiscreteChain.from_kernel(self.kernel, stationary=self.stationary)

    def lazy(self, holding: float = 0.5) -> "BirthDeathChain":
        """``holding * I + (1 - holding) * K``."""
        a = 1.0 - holding
        return BirthDeathChain(a * self.p, a * self.q, holding + a * self.r)


def bd_stationary(bd: BirthDeathChain) -> np.ndarray:
    """Detailed-balance stationary law, ``pi(x) ~ prod_{j<x} p_j / q_{j+1}``."""
    if bd.N == 0:
        return np.ones(1)
    logw = np.concatenate([[0.0], np.cumsum(np.log(bd.p[:-1]) - np.log(bd.q[1:]))])
    w = np.exp(logw - logw.max())
    return w / w.sum()


def ortho_poly(bd: BirthDeathChain, t: float, upto: int) -> np.ndarray:
    """``phi_0(t), ..., phi_upto(t)``; ``phi_{N+1}`` is the full characteristic polynomial."""
    if upto > bd.N + 1:
        raise ChainError(f"upto must be <= N+1 = {bd.N + 1}")
    if bd.N == 0:
        return np.array([1.0, t - bd.r[0]])[: upto + 1]
    return bd.tri.phi(t, upto)


def sturm_count(bd: BirthDeathChain, t, size: int | None = None):
    """Eigenvalues of the order-``size`` principal submatrix strictly above ``t``."""
    size = bd.size if size is None else size
    if size > bd.size:
        raise ChainError(f"size must be <= N+1 = {bd.size}")
    if bd.N == 0:
        t = np.asarray(t, dtype=float)
        res = (bd.r[0] > t).astype(int)
        return int(res) if res.ndim == 0 else res
    return bd.tri.sturm_count(t, size)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (descending), ``L2(pi)``-normalised eigenvectors (rows) and weights."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray
    pi: np.ndarray

    def __len__(self):
        return len(self.eigenvalues)


def bd_spectrum(bd: BirthDeathChain, size: int | None = None) -> SpectralDecomposition:
    """Spectral decomposition of the order-``size`` leading block (the full chain by default).

    For ``size < N+1`` this is the chain killed on leaving ``{0..size-1}``;
    ``pi`` is then the stationary law restricted (not renormalised).
    """
    size = bd.size if size is None else size
    if not 1 <= size <= bd.size:
        raise ChainError(f"size must be in 1..{bd.size}")
    pi = bd.stationary[:size]
    if size == 1:
        lam = np.array([float(bd.r[0])])
        V = np.array([[1.0 / np.sqrt(pi[0])]])
    else:
        lam = bd.tri.eigenvalues(size)
        tri = bd.tri.principal(size) if size < bd.size else bd.tri
        # eigenvectors() normalises against weights w proportional to pi
        j = int(np.argmax(tri.weights))
        V = tri.eigenvectors(lam) * np.sqrt(tri.weights[j] / pi[j])
    weights = pi[0] * V[:, 0] ** 2
    return SpectralDecomposition(lam, V, weights, pi)


def spectral_power(dec: SpectralDecomposition, n: int, x: int, y: int, pi=None) -> float:
    """``P^n(x, y) = pi(y) * sum_k lam_k^n V_k(x) V_k(y)``."""
    pi = dec.pi if pi is None else np.asarray(pi)
    return float(pi[y] * np.sum(dec.eigenvalues**n * dec.vectors[:, x] * dec.vectors[:, y]))


# ---------------------------------------------------------------------------
# hitting-time moments


@dataclass(frozen=True)
class HittingMoments:
    mean: float
    variance: float
    method: str

    @property
    def sigma(self) -> float:
        return float(np.sqrt(max(self.variance, 0.0)))


def hitting_moments_spectral(bd: BirthDeathChain, target: int) -> HittingMoments:
    """Moments of ``T_x`` from 0 via the spectrum of the block on ``{0..x-1}``."""
    if not 1 <= target <= bd.N:
        raise ChainError(f"target must be in 1..{bd.N}")
    alpha = bd.tri.eigenvalues(target) if target > 1 else np.array([bd.r[0]])
    gap = 1.0 - alpha
    return HittingMoments(float(np.sum(1.0 / gap)), float(np.sum(alpha / gap**2)), "spectral")


def passage_moments(bd: BirthDeathChain) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of the one-step passage times ``tau_{x,x+1}``, ``x < N``.

    Uses the closed forms in terms of ``pi`` and the up-rates.
    """
    pi = bd.stationary
    p = bd.p[:-1]
    cum = np.cumsum(pi)[:-1]
    mean = cum / (p * pi[:-1])
    inner = cum**2 / (p * pi[:-1])
    prefix = np.concatenate([[0.0], np.cumsum(inner)[:-1]])
    var = 2.0 / (pi[:-1] * p) * prefix + mean**2 - mean
    return mean, var


def hitting_moments_direct(bd: BirthDeathChain, target: int) -> HittingMoments:
    if not 1 <= target <= bd.N:
        raise ChainError(f"target must be in 1..{bd.N}")
    mean, var = passage_moments(bd)
    return HittingMoments(float(mean[:target].sum()), float(var[:target].sum()), "direct")


def hitting_moments_absorbing(chain, target, start=None) -> HittingMoments:
    """First two moments of the hitting time of ``target`` from fundamental-matrix solves.

    ``target`` is a state or a collection of states; ``start`` defaults to ``delta_0``.
    """
    chain = as_chain(chain)
    n = chain.size
    A = np.zeros(n, dtype=bool)
    A[np.atleast_1d(target)] = True
    start = np.eye(n)[0] if start is None else np.asarray(start, dtype=float)
    C = ~A
    if not C.any() or start[C].sum() == 0:
        return HittingMoments(0.0, 0.0, "absorbing_oracle")
    Q = chain.kernel[np.ix_(C, C)]
    I = np.eye(Q.shape[0])
    try:
        m = np.linalg.solve(I - Q, np.ones(Q.shape[0]))
        s = np.linalg.solve(I - Q, 1.0 + 2.0 * Q @ m)
    except np.linalg.LinAlgError as exc:
        raise ChainError("target set is not reachable from every state of its complement") from exc
    if not (np.all(np.isfinite(m)) and np.all(m >= 0)):
        raise ChainError("target set is not reachable from every state of its complement")
    mean = float(start[C] @ m)
    second = float(start[C] @ s)
    return HittingMoments(mean, second - mean**2, "absorbing_oracle")


# ---------------------------------------------------------------------------
# symmetric chains


@dataclass(frozen=True)
class FoldedChain:
    chain: BirthDeathChain
    stationary: np.ndarray
    odd: bool  # True for {0..2N+1}, False for {0..2N}

    def fold(self, dist) -> np.ndarray:
        """Law of the distance-to-centre process given a law on the original states."""
        d = np.asarray(dist, dtype=float)
        m = self.chain.N
        if self.odd:
            return d[: m + 1] + d[::-1][: m + 1]
        out = d[: m + 1] + d[::-1][: m + 1]
        out[m] = d[m]
        return out


def fold_symmetric(bd: BirthDeathChain) -> FoldedChain:
    """Fold a symmetric chain onto ``{0..N}`` (``Q_1`` for 2N+2 states, ``Q_+`` for 2N+1)."""
    if not is_symmetric_bd(bd.kernel):
        raise ChainError("chain is not symmetric under x -> N - x")
    size = bd.size
    pi = bd.stationary
    if size % 2 == 0:
        m = size // 2 - 1
        p = bd.p[: m + 1].copy()
        q = bd.q[: m + 1].copy()
        r = bd.r[: m + 1].copy()
        r[m] = bd.r[m] + bd.p[m]
        p[m] = 0.0
        folded = BirthDeathChain(p, q, r)
        return FoldedChain(folded, 2.0 * pi[: m + 1], True)
    m = size // 2
    p = bd.p[: m + 1].copy()
    q = bd.q[: m + 1].copy()
    r = bd.r[: m + 1].copy()
    p[m] = 0.0
    q[m] = 2.0 * bd.p[m]
    r[m] = 1.0 - q[m] if m > 0 else 1.0
    if m > 0 and abs(r[m] - bd.r[m]) <= RATE_TOL:
        r[m] = bd.r[m]
    folded = BirthDeathChain(p, q, r)
    st = 2.0 * pi[: m + 1]
    st[m] = pi[m]
    return FoldedChain(folded, st, False)


@dataclass(frozen=True)
class InterlacingReport:
    eta: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    min_gap: float
    r_zero_checked: bool

    @property
    def ok(self) -> bool:
        return self.min_gap > 0


def _modified_last(tri: Tridiagonal, size: int, value: float) -> Tridiagonal:
    sub = tri.principal(size)
    d = np.array(sub.diag, dtype=float)
    d[-1] = value
    return Tridiagonal(d, sub.up, sub.low)


def interlacing_check(bd: BirthDeathChain, tol: float = 1e-11) -> InterlacingReport:
    """Check ``eta_k < alpha_k < gamma_k < beta_k < eta_{k-1}`` on a symmetric chain on ``{0..2N+1}``.

    ``eta``: block on ``{0..N-1}``; ``gamma``: block on ``{0..N}``; ``beta``/``alpha``:
    that block with last diagonal ``r_N + p_N`` / ``r_N - p_N``. Every gap must
    exceed ``tol``. For chains with ``r == 0`` the reflection ``alpha_k = -beta_{N-k}``
    and the alternating modulus order of the ``beta`` are checked too.
    """
    if bd.size % 2 or not is_symmetric_bd(bd.kernel):
        raise ChainError("interlacing_check needs a symmetric chain on {0..2N+1}")
    m = bd.size // 2 - 1
    if m == 0:
        beta = np.array([bd.r[0] + bd.p[0]])
        alpha = np.array([bd.r[0] - bd.p[0]])
        gamma = np.array([bd.r[0]])
        eta = np.empty(0)
    else:
        tri = bd.tri
        eta = tri.eigenvalues(m)
        gamma = tri.eigenvalues(m + 1)
        beta = _modified_last(tri, m + 1, bd.r[m] + bd.p[m]).eigenvalues()
        alpha = _modified_last(tri, m + 1, bd.r[m] - bd.p[m]).eigenvalues()
    gaps = []
    for k in range(m + 1):
        chain = [alpha[k], gamma[k], beta[k]]
        if k < m:
            chain.insert(0, eta[k])
        if k >= 1:
            chain.append(eta[k - 1])
        gaps.extend(np.diff(chain))
    min_gap = float(min(gaps)) if gaps else np.inf
    if min_gap <= tol:
        k = int(np.argmin(gaps))
        raise SpectralError(f"interlacing violated (gap {min_gap:.3e} at position {k})")
    r_zero = bool(np.all(bd.r == 0))
    if r_zero:
        if np.max(np.abs(alpha + beta[::-1])) > 1e-9:
            raise SpectralError("r == 0 chain: alpha_k != -beta_{N-k}")
        order = r_zero_modulus_order(beta)
        if np.any(np.diff(order) >= -tol):
            raise SpectralError("r == 0 chain: modulus ordering of beta violated")
    return InterlacingReport(eta, alpha, gamma, beta, min_gap, r_zero)


def r_zero_modulus_order(beta: np.ndarray) -> np.ndarray:
    """Interleave ``beta_k`` and ``|beta_{N-k}|`` (decreasing when ``r == 0``).

    Returns ``beta_0, |beta_N|, beta_1, |beta_{N-1}|, ...`` truncated to the
    non-negative half of the spectrum.
    """
    pos = [b for b in beta if b > 0]
    neg = [abs(b) for b in beta[::-1] if b < 0]
    out = []
    for i in range(max(len(pos), len(neg))):
        if i < len(pos):
            out.append(pos[i])
        if i < len(neg):
            out.append(neg[i])
    return np.array(out)


def gap_vs_last(dec: SpectralDecomposition, bd: BirthDeathChain | None = None) -> bool:
    """``|lam_N| <= lam_1`` (holds for every monotone chain)."""
    if bd is not None and not is_monotone(bd.kernel)[0]:
        raise ChainError("gap_vs_last expects a monotone chain")
    lam = dec.eigenvalues
    if len(lam) < 2:
        return True
    return bool(abs(lam[-1]) <= lam[1] + 1e-12)


def ratio_monotone_series(bd: BirthDeathChain, horizon: int) -> np.ndarray:
    """``n -> P^n(0, N) / pi(N)`` for a symmetric chain on ``{0..2N}`` with positive spectrum.

    The series must be non-decreasing and bounded by 1; violations raise.
    """
    if bd.size % 2 == 0 or not is_symmetric_bd(bd.kernel):
        raise ChainError("ratio_monotone_series needs a symmetric chain on {0..2N}")
    lam = bd_spectrum(bd).eigenvalues
    if lam[-1] <= 0:
        raise ChainError(f"spectrum is not positive (smallest eigenvalue {lam[-1]!r})")
    m = bd.N // 2
    pi = bd.stationary
    d = np.zeros(bd.size)
    d[0] = 1.0
    out = np.empty(horizon + 1)
    K = bd.kernel
    for n in range(horizon + 1):
        out[n] = d[m] / pi[m]
        d = d @ K
    if np.any(np.diff(out) < -1e-12):
        n = int(np.flatnonzero(np.diff(out) < -1e-12)[0])
        raise SpectralError(f"ratio series decreases at step {n}")
    if np.any(out > 1 + 1e-12):
        raise SpectralError(f"ratio series exceeds 1 at step {int(np.argmax(out > 1 + 1e-12))}")
    return out
