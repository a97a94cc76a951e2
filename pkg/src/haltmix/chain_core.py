"""Finite Markov chains: kernels, distributions, distances and structural checks.

States are the integers ``0..n-1``. Distributions are plain 1-d float arrays;
:func:`as_distribution` validates them. Kernels are row-stochastic and act on
distributions from the right (``pi_next = pi @ K``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

SUM_TOL = 1e-12
FIXED_POINT_TOL = 1e-10


class ChainError(ValueError):
    """Raised for malformed kernels, distributions or incompatible shapes."""


def as_distribution(weights: Sequence[float] | np.ndarray, n: int | None = None) -> np.ndarray:
    """Validate a probability vector and return it as a float array."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise ChainError(f"distribution must be 1-d, got shape {w.shape}")
    if n is not None and w.size != n:
        raise ChainError(f"distribution has {w.size} entries, chain has {n} states")
    if np.any(w < 0):
        raise ChainError(f"negative probability at state {int(np.argmin(w))}")
    if abs(w.sum() - 1.0) > SUM_TOL:
        raise ChainError(f"distribution sums to {w.sum()!r}, not 1")
    return w


def point_mass(n: int, x: int) -> np.ndarray:
    d = np.zeros(n)
    d[x] = 1.0
    return d


def _check_kernel(kernel: np.ndarray) -> np.ndarray:
    K = np.asarray(kernel, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ChainError(f"kernel must be square, got shape {K.shape}")
    if np.any(K < 0):
        i, j = np.unravel_index(np.argmin(K), K.shape)
        raise ChainError(f"negative transition probability k({i},{j}) = {K[i, j]!r}")
    rows = K.sum(axis=1)
    bad = np.flatnonzero(np.abs(rows - 1.0) > SUM_TOL)
    if bad.size:
        raise ChainError(f"row {int(bad[0])} of kernel sums to {rows[bad[0]]!r}")
    return K


def communicating_classes(kernel: np.ndarray) -> list[list[int]]:
    """Strongly connected components of the transition graph."""
    K = np.asarray(kernel)
    ncomp, labels = connected_components(csr_matrix(K > 0), directed=True, connection="strong")
    return [np.flatnonzero(labels == c).tolist() for c in range(ncomp)]


def period(kernel: np.ndarray) -> int:
    """Period of an irreducible kernel (gcd of cycle lengths through state 0)."""
    K = np.asarray(kernel)
    n = K.shape[0]
    level = np.full(n, -1)
    level[0] = 0
    frontier = [0]
    g = 0
    while frontier:
        nxt = []
        for x in frontier:
            for y in np.flatnonzero(K[x] > 0):
                if level[y] < 0:
                    level[y] = level[x] + 1
                    nxt.append(int(y))
                else:
                    g = gcd(g, int(level[x] + 1 - level[y]))
        frontier = nxt
    return g if g > 0 else 1


def stationary_of(kernel: np.ndarray) -> np.ndarray:
    """Unique stationary distribution of an irreducible kernel.

    Solves ``(K^T - I) pi = 0`` with the last equation replaced by the
    normalisation ``sum(pi) = 1``.

    Raises
    ------
    ChainError
        If the kernel is reducible; the message lists the communicating classes.
    """
    K = _check_kernel(kernel)
    classes = communicating_classes(K)
    if len(classes) > 1:
        raise ChainError(f"kernel is reducible, communicating classes: {classes}")
    n = K.shape[0]
    A = K.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    # one step of refinement keeps the residual near machine precision for n ~ 10^3
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    r = pi @ K - pi
    if np.max(np.abs(r)) > 1e-11:
        pi = pi @ K
        pi /= pi.sum()
    return pi


@dataclass(frozen=True)
class DiscreteChain:
    """Row-stochastic kernel with its stationary distribution and structure flags."""

    kernel: np.ndarray
    stationary: np.ndarray = field(repr=False)
    irreducible: bool
    aperiodic: bool
    reversible: bool

    @classmethod
    def from_kernel(cls, kernel, stationary=None) -> "DiscreteChain":
        K = _check_kernel(kernel).copy()
        K.setflags(write=False)
        irreducible = len(communicating_classes(K)) == 1
        if stationary is None:
            if not irreducible:
                raise ChainError(
                    f"kernel is reducible, communicating classes: {communicating_classes(K)}"
                )
            pi = stationary_of(K)
        else:
            pi = as_distribution(stationary, K.shape[0])
            if np.max(np.abs(pi @ K - pi)) > FIXED_POINT_TOL:
                raise ChainError("supplied stationary distribution is not invariant")
        pi = np.array(pi, dtype=float)
        pi.setflags(write=False)
        flux = pi[:, None] * K
        reversible = bool(np.max(np.abs(flux - flux.T)) <= FIXED_POINT_TOL)
        aperiodic = irreducible and period(K) == 1
        return cls(K, pi, irreducible, aperiodic, reversible)

    @property
    def size(self) -> int:
        return self.kernel.shape[0]

    def __len__(self) -> int:
        return self.size


def as_chain(obj) -> DiscreteChain:
    """Coerce a kernel, a :class:`DiscreteChain` or a birth-and-death chain."""
    if isinstance(obj, DiscreteChain):
        return obj
    chain = getattr(obj, "chain", None)
    if isinstance(chain, DiscreteChain):
        return chain
    return DiscreteChain.from_kernel(obj)


def evolve(chain, start, horizon: int) -> np.ndarray:
    """Distributions ``pi_0, ..., pi_horizon`` as rows of a ``(horizon+1, n)`` array."""
    chain = as_chain(chain)
    start = np.asarray(start, dtype=float)
    if start.shape != (chain.size,):
        raise ChainError(f"start has {start.size} entries, chain has {chain.size} states")
    as_distribution(start)
    if horizon < 0:
        raise ChainError(f"horizon must be >= 0, got {horizon}")
    K = chain.kernel
    out = np.empty((horizon + 1, chain.size))
    out[0] = start
    for n in range(horizon):
        out[n + 1] = out[n] @ K
    return out


def tv_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ChainError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return 0.5 * float(np.abs(a - b).sum())


def separation(a, pi) -> float:
    """``max_y 1 - a(y)/pi(y)``; not clamped at zero."""
    a = np.asarray(a, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if a.shape != pi.shape:
        raise ChainError(f"dimension mismatch: {a.shape} vs {pi.shape}")
    if np.any(pi <= 0):
        raise ChainError(f"separation needs pi > 0; pi({int(np.argmin(pi))}) = {pi.min()!r}")
    return float(np.max(1.0 - a / pi))


def tv_series(chain, start, horizon: int) -> np.ndarray:
    chain = as_chain(chain)
    dists = evolve(chain, start, horizon)
    return 0.5 * np.abs(dists - chain.stationary).sum(axis=1)


def separation_series(chain, start, horizon: int) -> np.ndarray:
    chain = as_chain(chain)
    dists = evolve(chain, start, horizon)
    return np.max(1.0 - dists / chain.stationary, axis=1)


def is_monotone(chain, tol: float = 1e-12) -> tuple[bool, tuple[int, int] | None]:
    """Stochastic monotonicity for the total order ``0 < 1 < ... < n-1``.

    Returns ``(True, None)`` or ``(False, (x, y))`` where the cumulative
    mass of row ``x`` on ``{0..y}`` is smaller than that of row ``x+1``.
    """
    K = as_chain(chain).kernel if not isinstance(chain, np.ndarray) else chain
    C = np.cumsum(K, axis=1)
    diff = C[:-1] - C[1:]
    bad = np.argwhere(diff < -tol)
    if bad.size:
        x, y = bad[0]
        return False, (int(x), int(y))
    return True, None


def is_symmetric_bd(chain, atol: float = 0.0) -> bool:
    """``k(N-x, N-y) == k(x, y)`` for all states (exact by default)."""
    K = as_chain(chain).kernel if not isinstance(chain, np.ndarray) else chain
    if atol == 0.0:
        return bool(np.array_equal(K, K[::-1, ::-1]))
    return bool(np.allclose(K, K[::-1, ::-1], rtol=0.0, atol=atol))


def reversible_spectrum(chain) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and L2(pi)-orthonormal eigenvectors (rows).

    Dense route through the symmetrised kernel ``D^1/2 K D^-1/2``.
    """
    chain = as_chain(chain)
    if not chain.reversible:
        raise ChainError("spectral decomposition requires a reversible chain")
    s = np.sqrt(chain.stationary)
    S = s[:, None] * chain.kernel / s[None, :]
    S = 0.5 * (S + S.T)
    w, U = np.linalg.eigh(S)
    order = np.argsort(w)[::-1]
    w = w[order]
    V = (U[:, order] / s[:, None]).T
    # V_k(0) >= 0 fixes the sign convention
    signs = np.where(V[:, 0] < 0, -1.0, 1.0)
    return w, V * signs[:, None]
