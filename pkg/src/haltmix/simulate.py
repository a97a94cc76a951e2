"""Seeded Monte Carlo for trajectories, the optimal stopping time and hitting times.

Randomness comes from Philox, a counter-based generator. Replicates are cut
into fixed blocks of ``BLOCK`` and block ``b`` draws from the stream keyed by
``(seed, b)``, so output does not depend on how blocks are scheduled. Within a
block, every step consumes one uniform per replicate for the move and (for the
stopping time) one for the stopping test, whether or not the replicate is
still running.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .bd_spectral import hitting_moments_absorbing
from .chain_core import ChainError, DiscreteChain, _check_kernel, as_chain, as_distribution
from .stopping import StoppingSchedule

BLOCK = 4096
FALLBACK_MAX_STEPS = 1_000_000
CI_MULTIPLIER = 4.0


@dataclass(frozen=True)
class SimConfig:
    seed: int
    replicates: int = 1
    max_steps: int | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.max_steps is not None and self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")

    def blocks(self):
        """Yield ``(first replicate, count, generator)`` per block."""
        for b, lo in enumerate(range(0, self.replicates, BLOCK)):
            bitgen = np.random.Philox(np.random.SeedSequence([self.seed & 0xFFFFFFFF, self.seed >> 32, b]))
            yield lo, min(BLOCK, self.replicates - lo), np.random.Generator(bitgen)


def _draw(cum: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF step: smallest ``y`` with ``u < cum[row, y]``."""
    nxt = (u[:, None] >= cum[rows]).sum(axis=1)
    return np.minimum(nxt, cum.shape[1] - 1)


def _kernel(chain) -> np.ndarray:
    """Transition matrix of a chain object or a raw (possibly reducible) kernel."""
    if isinstance(chain, DiscreteChain):
        return chain.kernel
    inner = getattr(chain, "chain", None)
    if isinstance(inner, DiscreteChain):
        return inner.kernel
    return _check_kernel(chain)


def _cumulative(kernel: np.ndarray) -> np.ndarray:
    cum = np.cumsum(kernel, axis=-1)
    cum[..., -1] = 1.0
    return cum


def sample_trajectory(chain, start, config: SimConfig, steps: int | None = None) -> np.ndarray:
    """Paths ``X_0..X_steps``, one row per replicate. ``start`` is a state or a distribution."""
    K = _kernel(chain)
    steps = config.max_steps if steps is None else steps
    if steps is None:
        raise ChainError("number of steps required")
    init = _cumulative(_start_dist(K.shape[0], start))
    cum = _cumulative(K)
    out = np.empty((config.replicates, steps + 1), dtype=np.int64)
    for lo, count, rng in config.blocks():
        x = _draw(init[None, :], np.zeros(count, dtype=np.int64), rng.random(count))
        out[lo : lo + count, 0] = x
        for n in range(1, steps + 1):
            x = _draw(cum, x, rng.random(count))
            out[lo : lo + count, n] = x
    return out


def _start_dist(size: int, start) -> np.ndarray:
    if np.ndim(start) == 0:
        d = np.zeros(size)
        d[int(start)] = 1.0
        return d
    return as_distribution(np.asarray(start, dtype=float), size)


@dataclass(frozen=True)
class Samples:
    """Sample dump. Censored replicates carry ``T = -1`` and ``X_T = -1``."""

    T: np.ndarray
    X: np.ndarray | None
    max_steps: int
    exact_mean: float | None = None

    @property
    def censored(self) -> int:
        return int(np.sum(self.T < 0))

    @property
    def replicates(self) -> int:
        return int(self.T.size)

    def survival(self, horizon: int) -> np.ndarray:
        """Empirical ``P(T > n)`` for ``n = 0..horizon``; censored replicates count as surviving."""
        t = np.where(self.T < 0, np.iinfo(np.int64).max, self.T)
        counts = np.bincount(np.minimum(t, horizon + 1), minlength=horizon + 2)
        return 1.0 - np.cumsum(counts[: horizon + 1]) / self.T.size

    def summary(self, multiplier: float = CI_MULTIPLIER) -> dict:
        done = self.T[self.T >= 0].astype(float)
        n = done.size
        mean = float(np.sum(done) / n) if n else float("nan")
        var = float(np.sum((done - mean) ** 2) / (n - 1)) if n > 1 else float("nan")
        half = multiplier * np.sqrt(var / n) if n > 1 else float("nan")
        out = {
            "replicates": self.replicates,
            "censored": self.censored,
            "max_steps": self.max_steps,
            "mean": mean,
            "variance": var,
            "ci_multiplier": multiplier,
            "ci_low": float(mean - half),
            "ci_high": float(mean + half),
        }
        if self.exact_mean is not None:
            out["exact_mean"] = self.exact_mean
        return out

    def rows(self):
        if self.X is None:
            return [(i, int(t)) for i, t in enumerate(self.T)]
        return [(i, int(t), int(x)) for i, (t, x) in enumerate(zip(self.T, self.X))]


def _resolve_max_steps(config: SimConfig, mean: float | None) -> int:
    if config.max_steps is not None:
        return config.max_steps
    if mean is not None and np.isfinite(mean):
        return max(1, ceil(20 * mean))
    return FALLBACK_MAX_STEPS


def sample_stopping_time(schedule: StoppingSchedule, chain, start, config: SimConfig) -> Samples:
    """Draws of ``(T, X_T)`` for ``T = inf{n : U_n <= psi_n(X_n)}``.

    The default step budget is twenty times ``E[T] = sum_n P(T > n)``, capped
    at the schedule horizon. A longer explicit budget is rejected.
    """
    chain = as_chain(chain)
    mean = float(np.sum(schedule.survival))
    max_steps = _resolve_max_steps(config, mean)
    if config.max_steps is None:
        max_steps = min(max_steps, schedule.horizon)
    if max_steps > schedule.horizon:
        raise ChainError(f"schedule horizon {schedule.horizon} does not cover max_steps {max_steps}")
    init = _cumulative(_start_dist(chain.size, start))
    cum = _cumulative(chain.kernel)
    psi = schedule.psi
    T = np.full(config.replicates, -1, dtype=np.int64)
    X = np.full(config.replicates, -1, dtype=np.int64)
    for lo, count, rng in config.blocks():
        x = _draw(init[None, :], np.zeros(count, dtype=np.int64), rng.random(count))
        alive = np.ones(count, dtype=bool)
        t_blk = T[lo : lo + count]
        x_blk = X[lo : lo + count]
        for n in range(max_steps + 1):
            u = rng.random(count)
            stop = alive & (u <= psi[n, x])
            t_blk[stop] = n
            x_blk[stop] = x[stop]
            alive &= ~stop
            if not alive.any() or n == max_steps:
                break
            x = _draw(cum, x, rng.random(count))
    return Samples(T, X, max_steps, mean)


def sample_hitting(chain, A, start, config: SimConfig) -> Samples:
    """Draws of ``T_A = inf{n >= 0 : X_n in A}``; the default budget is twenty times the exact mean."""
    K = _kernel(chain)
    mask = np.zeros(K.shape[0], dtype=bool)
    mask[np.atleast_1d(sorted(A) if isinstance(A, (set, frozenset)) else A)] = True
    dist = _start_dist(K.shape[0], start)
    try:
        mean = hitting_moments_absorbing(chain, np.flatnonzero(mask), dist).mean
    except ChainError:
        mean = None
    max_steps = _resolve_max_steps(config, mean)
    init = _cumulative(dist)
    cum = _cumulative(K)
    T = np.full(config.replicates, -1, dtype=np.int64)
    for lo, count, rng in config.blocks():
        x = _draw(init[None, :], np.zeros(count, dtype=np.int64), rng.random(count))
        alive = np.ones(count, dtype=bool)
        t_blk = T[lo : lo + count]
        for n in range(max_steps + 1):
            hit = alive & mask[x]
            t_blk[hit] = n
            alive &= ~hit
            if not alive.any() or n == max_steps:
                break
            x = _draw(cum, x, rng.random(count))
    return Samples(T, None, max_steps, mean)
