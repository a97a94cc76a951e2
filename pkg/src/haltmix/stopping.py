"""Optimal randomized stopping times and halting states.

:func:`build_schedule` returns the tables ``gamma``, ``Delta`` and ``psi`` that
define a randomized stopping time ``T = inf{n : U_n <= psi_n(X_n)}`` with
``P(T > n) = d(n)``. :func:`sst_schedule` does the same for separation
distance, giving a stochastically optimal strong stationary time.

A state ``x`` is a halting state for a start law when ``pi_n(x) <= pi(x)`` for
every ``n``; :func:`verify_halting_state` decides this with a spectral tail
argument when it can, and falls back to an explicit horizon otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .chain_core import (
    ChainError,
    DiscreteChain,
    as_chain,
    as_distribution,
    is_monotone,
    reversible_spectrum,
)

HALT_TOL = 1e-12
PSI_FLOOR = 1e-14
DEFAULT_TV_EPS = 1e-12
HORIZON_CAP = 100_000
NUMERIC_HORIZON = 10_000
TAIL_EPS = 1e-13


class ScheduleError(RuntimeError):
    """Construction failure: a ``psi`` value fell outside ``[0, 1]``."""


@dataclass(frozen=True)
class StoppingSchedule:
    """Per-step tables, rows indexed by ``n = 0..horizon``.

    ``survival`` is ``P(T > n)`` obtained by propagating the unstopped mass
    ``((1 - psi_n) Delta_n) K`` forward; ``target`` is the distance it should
    reproduce (``d(n)`` or ``s(n)``).
    """

    gamma: np.ndarray
    delta: np.ndarray
    psi: np.ndarray
    target: np.ndarray
    survival: np.ndarray
    kind: str = "tv"

    @property
    def horizon(self) -> int:
        return self.gamma.shape[0] - 1

    @property
    def tv(self) -> np.ndarray:
        return self.target

    def max_identity_error(self) -> float:
        return float(np.max(np.abs(self.survival - self.target)))


def _start(chain: DiscreteChain, start) -> np.ndarray:
    start = np.asarray(start, dtype=float)
    if start.shape != (chain.size,):
        raise ChainError(f"start has {start.size} entries, chain has {chain.size} states")
    return as_distribution(start)


def default_horizon(chain, start, eps: float = DEFAULT_TV_EPS, cap: int = HORIZON_CAP) -> int:
    """Smallest ``n`` with ``d(n) < eps``, capped at ``cap``."""
    chain = as_chain(chain)
    d = _start(chain, start)
    pi = chain.stationary
    for n in range(cap + 1):
        if 0.5 * np.abs(d - pi).sum() < eps:
            return n
        d = d @ chain.kernel
    return cap


def _forward_survival(K: np.ndarray, start: np.ndarray, psi: np.ndarray) -> np.ndarray:
    D = start.copy()
    out = np.empty(psi.shape[0])
    for n in range(psi.shape[0]):
        rest = (1.0 - psi[n]) * D
        out[n] = rest.sum()
        D = rest @ K
    return out


def build_schedule(chain, start, horizon: int | None = None) -> StoppingSchedule:
    """Optimal stopping schedule for total variation.

    ``gamma_0 = pi_0 ^ pi``, ``gamma_n = (pi_n ^ pi) - (pi_{n-1} ^ pi) K``;
    ``Delta_0 = pi_0``, ``Delta_n = pi_n - (pi_{n-1} ^ pi) K``;
    ``psi = gamma / Delta`` (``1`` where ``Delta < 1e-14``).
    """
    chain = as_chain(chain)
    pi = chain.stationary
    if np.any(pi <= 0):
        raise ChainError(f"stationary law must be positive; pi({int(np.argmin(pi))}) = {pi.min()!r}")
    start = _start(chain, start)
    if horizon is None:
        horizon = default_horizon(chain, start)
    if horizon < 0:
        raise ChainError(f"horizon must be >= 0, got {horizon}")
    K = chain.kernel
    H = horizon + 1
    n_states = chain.size
    dists = np.empty((H, n_states))
    dists[0] = start
    for n in range(horizon):
        dists[n + 1] = dists[n] @ K
    low = np.minimum(dists, pi)
    pushed = np.empty_like(dists)
    pushed[0] = 0.0
    if horizon:
        pushed[1:] = low[:-1] @ K
    gamma = low - pushed
    delta = dists - pushed
    delta[0] = start
    gamma[0] = low[0]
    psi = _ratio(gamma, delta, strict=False)
    target = 0.5 * np.abs(dists - pi).sum(axis=1)
    survival = _forward_survival(K, start, psi)
    return StoppingSchedule(gamma, delta, psi, target, survival, "tv")


def _ratio(gamma: np.ndarray, delta: np.ndarray, strict: bool) -> np.ndarray:
    psi = np.ones_like(gamma)
    live = delta >= PSI_FLOOR
    psi[live] = gamma[live] / delta[live]
    # escapes at rounding level are clipped; genuine ones are reported
    over = (psi > 1 + HALT_TOL) & (gamma - delta > 1e-13)
    under = (psi < -HALT_TOL) & (gamma < -1e-13)
    if strict:
        dead = ~live & (gamma > PSI_FLOOR + 1e-13)
        bad = over | under | dead
        if np.any(bad):
            n, x = (int(v) for v in np.argwhere(bad)[0])
            value = psi[n, x] if live[n, x] else np.inf
            raise ScheduleError(
                f"psi_{n}({x}) = {value!r} outside [0, 1] (gamma = {gamma[n, x]!r}, Delta = {delta[n, x]!r})"
            )
    elif np.any(over | under):
        n, x = (int(v) for v in np.argwhere(over | under)[0])
        raise ScheduleError(f"psi_{n}({x}) = {psi[n, x]!r} outside [0, 1]")
    return np.clip(psi, 0.0, 1.0)


def sst_schedule(chain, start, horizon: int | None = None) -> StoppingSchedule:
    """Optimal strong stationary time: ``gamma_n = (s(n-1) - s(n)) pi``.

    ``psi`` values escaping ``[0, 1]`` raise :class:`ScheduleError`; they are
    never clamped.
    """
    chain = as_chain(chain)
    pi = chain.stationary
    if np.any(pi <= 0):
        raise ChainError("stationary law must be positive")
    start = _start(chain, start)
    if horizon is None:
        horizon = default_horizon(chain, start)
    if horizon < 0:
        raise ChainError(f"horizon must be >= 0, got {horizon}")
    K = chain.kernel
    H = horizon + 1
    n_states = chain.size
    sep = np.empty(H)
    d = start.copy()
    for n in range(H):
        sep[n] = np.max(1.0 - d / pi)
        d = d @ K
    steps = np.concatenate([[1.0 - sep[0]], sep[:-1] - sep[1:]])
    gamma = steps[:, None] * pi[None, :]
    delta = np.empty((H, n_states))
    psi = np.empty((H, n_states))
    D = start.copy()
    for n in range(H):
        delta[n] = D
        psi[n] = _ratio(gamma[n : n + 1], D[None, :], strict=True)[0]
        D = (D - gamma[n]) @ K
    survival = _forward_survival(K, start, psi)
    return StoppingSchedule(gamma, delta, psi, sep, survival, "separation")


def law_of_XT(schedule: StoppingSchedule) -> np.ndarray:
    """``x -> P(X_T = x, T <= horizon)``."""
    return schedule.gamma.sum(axis=0)


# ---------------------------------------------------------------------------
# halting states


@dataclass(frozen=True)
class HaltingVerdict:
    """Outcome of a halting check for one state (or a set of states).

    ``status`` is ``"certified"``, ``"numeric"`` or ``"not"``. ``horizon`` is
    the number of steps examined exactly; ``witness`` is the first step with
    ``pi_n(x) > pi(x) + 1e-12`` when ``status == "not"``.
    """

    state: int | frozenset
    status: str
    horizon: int
    margin: float
    witness: int | None = None
    method: str = ""

    @property
    def label(self) -> str:
        if self.status == "certified":
            return "CERTIFIED"
        if self.status == "numeric":
            return f"NUMERIC({self.horizon})"
        return f"NOT({self.witness})"

    @property
    def halting(self) -> bool:
        return self.status != "not"


class _Evolution:
    """Lazily extended ``pi_n`` table shared across states."""

    def __init__(self, chain: DiscreteChain, start: np.ndarray):
        self.chain = chain
        self.rows = [start]
        self.tv = [0.5 * float(np.abs(start - chain.stationary).sum())]

    def extend(self, n: int) -> None:
        K = self.chain.kernel
        pi = self.chain.stationary
        while len(self.rows) <= n:
            nxt = self.rows[-1] @ K
            self.rows.append(nxt)
            self.tv.append(0.5 * float(np.abs(nxt - pi).sum()))

    def upto(self, n: int) -> np.ndarray:
        self.extend(n)
        return np.asarray(self.rows[: n + 1])

    def until_converged(self, eps: float, cap: int) -> int:
        n = 0
        while True:
            self.extend(n)
            if self.tv[n] < eps or n >= cap:
                return n
            n += 1


def _scan(ev: _Evolution, x, n: int):
    """First violating step in ``0..n`` and the minimal margin."""
    rows = ev.upto(n)
    pi = ev.chain.stationary
    idx = np.atleast_1d(x)
    gap = pi[idx].sum() - rows[:, idx].sum(axis=1)
    bad = np.flatnonzero(gap < -HALT_TOL)
    return (int(bad[0]) if bad.size else None), float(gap.min())


@dataclass(frozen=True)
class _Coefficients:
    """``c[k, x] = (pi_0 . V_k) V_k(x)`` for ``k >= 1`` with a rounding-error bound ``err``."""

    beta: np.ndarray
    c: np.ndarray
    err: np.ndarray


EIG_EPS = 1e-12


def _coefficients(chain: DiscreteChain, start: np.ndarray) -> _Coefficients:
    beta, V = reversible_spectrum(chain)
    inv = 1.0 / np.sqrt(chain.stationary)
    a = V @ start
    b = V
    # eigh perturbs the symmetrised vectors by about EIG_EPS in each entry
    da = EIG_EPS * float(start @ inv)
    db = EIG_EPS * inv
    c = a[:, None] * b
    err = np.abs(a)[:, None] * db[None, :] + da * np.abs(b) + da * db[None, :]
    return _Coefficients(beta[1:], c[1:], err[1:])


def _levels(beta: np.ndarray, tol: float = 1e-9) -> list[np.ndarray]:
    order = np.argsort(-np.abs(beta), kind="stable")
    mods = np.abs(beta[order])
    groups, cur = [], [order[0]] if len(order) else []
    for i in range(1, len(order)):
        if mods[i - 1] - mods[i] <= tol:
            cur.append(order[i])
        else:
            groups.append(np.array(cur))
            cur = [order[i]]
    if cur:
        groups.append(np.array(cur))
    return groups


def _dominance_horizon(beta: np.ndarray, c: np.ndarray, err: np.ndarray, cap: int) -> int | None:
    """Step ``n0`` beyond which the dominant surviving level fixes the sign of ``pi_n(x)/pi(x) - 1``.

    Returns ``None`` when the dominant signed coefficient is positive or the
    tail cannot be bounded within ``cap`` steps.
    """
    groups = _levels(beta)
    n0 = 0
    for parity in (0, 1):
        for i, g in enumerate(groups):
            sign = np.sign(beta[g]) ** parity
            s = float(np.sum(sign * c[g]))
            if abs(s) <= float(np.sum(err[g])):
                continue
            if s > 0:
                return None
            rho = float(np.max(np.abs(beta[g])))
            rest = groups[i + 1 :]
            if not rest:
                break
            rho_next = float(np.max(np.abs(beta[rest[0]])))
            members = np.concatenate(rest)
            mass = float(np.sum(np.abs(c[members]) + err[members]))
            if rho_next == 0.0 or mass <= 0.5 * abs(s):
                break
            # need (rho_next / rho)^n * mass < |s| / 2
            n = int(np.ceil(np.log(0.5 * abs(s) / mass) / np.log(rho_next / rho))) + 1
            if n > cap:
                return None
            n0 = max(n0, n)
            break
    return n0


def verify_halting_state(
    chain,
    start,
    x: int | Iterable[int],
    *,
    numeric_horizon: int = NUMERIC_HORIZON,
    cap: int = HORIZON_CAP,
    _ctx: dict | None = None,
) -> HaltingVerdict:
    """Decide whether ``pi_n(x) <= pi(x)`` for every ``n``.

    Reversible aperiodic chains are certified by spectral dominance: the first
    eigenvalue level with a nonzero signed coefficient (for each parity of
    ``n``) must be negative and dominate the rest beyond some ``n0``, and the
    steps ``n <= n0`` are checked exactly. If dominance cannot be shown, the
    chain is evolved until ``d(n) < 1e-13``, after which ``|pi_n(x) - pi(x)|``
    stays below the checking tolerance.

    Upper sets ``{x..N}`` of a stochastically monotone chain started at 0 are
    certified directly. Otherwise non-reversible and periodic chains only get
    ``numeric`` verdicts.
    A set ``x`` is checked through the summed mass.
    """
    chain = as_chain(chain)
    start = _start(chain, start)
    ctx = {} if _ctx is None else _ctx
    ev = ctx.setdefault("evolution", _Evolution(chain, start))
    label = int(x) if isinstance(x, (int, np.integer)) else frozenset(int(v) for v in x)
    idx = np.atleast_1d(np.asarray(list(label) if isinstance(label, frozenset) else label))

    bad, margin = _scan(ev, idx, 0)
    if bad is not None:
        return HaltingVerdict(label, "not", 0, margin, witness=0, method="exact")

    # monotone coupling from the bottom state: upper sets are never overshot
    upper = np.array_equal(np.sort(idx), np.arange(idx.min(), chain.size))
    if upper and start[0] == 1.0 and is_monotone(chain)[0]:
        return HaltingVerdict(label, "certified", 0, margin, method="monotone")

    if not chain.reversible or not chain.aperiodic:
        h = min(ev.until_converged(TAIL_EPS, numeric_horizon), numeric_horizon)
        bad, margin = _scan(ev, idx, h)
        if bad is not None:
            return HaltingVerdict(label, "not", h, margin, witness=bad, method="exact")
        return HaltingVerdict(label, "numeric", h, margin, method="horizon")

    if "coef" not in ctx:
        ctx["coef"] = _coefficients(chain, start)
    coef = ctx["coef"]
    c = coef.c[:, idx].sum(axis=1)
    n0 = _dominance_horizon(coef.beta, c, coef.err[:, idx].sum(axis=1), cap)
    if n0 is not None:
        h = max(n0, 2)
        bad, margin = _scan(ev, idx, h)
        if bad is not None:
            return HaltingVerdict(label, "not", h, margin, witness=bad, method="exact")
        return HaltingVerdict(label, "certified", h, margin, method="spectral")

    h = ev.until_converged(TAIL_EPS, cap)
    bad, margin = _scan(ev, idx, h)
    if bad is not None:
        return HaltingVerdict(label, "not", h, margin, witness=bad, method="exact")
    if ev.tv[h] < TAIL_EPS:
        return HaltingVerdict(label, "certified", h, margin, method="tv-tail")
    return HaltingVerdict(label, "numeric", h, margin, method="horizon")


def halting_set_M(chain, start) -> tuple[set[int], dict[int, HaltingVerdict]]:
    """All states whose verdict is not ``"not"``, with per-state verdicts.

    For periodic chains every surviving state is only ``numeric``.
    """
    chain = as_chain(chain)
    start = _start(chain, start)
    ctx: dict = {}
    verdicts = {x: verify_halting_state(chain, start, x, _ctx=ctx) for x in range(chain.size)}
    return {x for x, v in verdicts.items() if v.halting}, verdicts


def smallest_halting_state(chain, start) -> int | None:
    states, _ = halting_set_M(chain, start)
    return min(states) if states else None


def spectral_halting_candidates(chain, start) -> set[int]:
    """States passing both sign conditions on the eigenvalues of maximal modulus.

    With ``c_k(x) = (pi_0 . V_k) V_k(x)`` and ``rho = max_{k>=1} |beta_k|``,
    ``x`` is a candidate when ``sum c_k(x) <= 0`` and
    ``sum sign(beta_k) c_k(x) <= 0`` over ``{k : |beta_k| = rho}``.
    """
    chain = as_chain(chain)
    start = _start(chain, start)
    if not chain.reversible:
        raise ChainError("spectral candidates need a reversible chain")
    coef = _coefficients(chain, start)
    if coef.beta.size == 0:
        return {0}
    rho = float(np.max(np.abs(coef.beta)))
    top = np.abs(np.abs(coef.beta) - rho) <= 1e-9
    c = coef.c[top]
    s_even = c.sum(axis=0)
    s_odd = (np.sign(coef.beta[top])[:, None] * c).sum(axis=0)
    tol = coef.err[top].sum(axis=0)
    return {int(x) for x in np.flatnonzero((s_even <= tol) & (s_odd <= tol))}


def hitting_survival(chain, start, A, horizon: int) -> np.ndarray:
    """``n -> P(T_A > n)`` from powers of the kernel killed on ``A``."""
    chain = as_chain(chain)
    start = _start(chain, start)
    mask = np.zeros(chain.size, dtype=bool)
    mask[np.atleast_1d(list(A) if isinstance(A, (set, frozenset)) else A)] = True
    if not mask.any():
        raise ChainError("target set A must be non-empty")
    C = ~mask
    Q = chain.kernel[np.ix_(C, C)]
    v = start[C].copy()
    out = np.empty(horizon + 1)
    for n in range(horizon + 1):
        out[n] = v.sum()
        v = v @ Q
    return out


def tv_upper_via_hitting(chain, start, A, horizon: int, certified: bool = False):
    """Pair ``(d(n), P(T_A > n))``; with ``certified`` the domination is asserted."""
    chain = as_chain(chain)
    start = _start(chain, start)
    pi = chain.stationary
    d = np.empty(horizon + 1)
    row = start.copy()
    for n in range(horizon + 1):
        d[n] = 0.5 * np.abs(row - pi).sum()
        row = row @ chain.kernel
    surv = hitting_survival(chain, start, A, horizon)
    if certified:
        bad = np.flatnonzero(d > surv + HALT_TOL)
        if bad.size:
            n = int(bad[0])
            raise ChainError(f"d({n}) = {d[n]!r} exceeds P(T_A > {n}) = {surv[n]!r}")
    return d, surv
