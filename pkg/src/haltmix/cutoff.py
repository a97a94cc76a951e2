"""Cutoff diagnostics built on halting sets.

If ``A_N`` is a halting set, ``d(n) <= P(T_A > n)``, so the mean and spread of
``T_A`` locate the drop of ``d``. The matching lower bound uses the
quasi-stationary eigenvalue ``lambda_A`` of the kernel killed on ``A``. Over a
finite family, limits are reported as trend verdicts together with the raw
columns.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from math import ceil, e, floor

import numpy as np

from .bd_spectral import (
    BirthDeathChain,
    hitting_moments_absorbing,
    hitting_moments_direct,
    hitting_moments_spectral,
)
from .chain_core import ChainError, as_chain, communicating_classes, point_mass
from .stopping import verify_halting_state

TREND_THRESHOLD = 10.0
WINDOW_FLOOR = 0.1
EPSILONS = (0.1, 0.2, 0.3)
GAMMAS = tuple(range(1, 11))


def _mask(size: int, A) -> np.ndarray:
    m = np.zeros(size, dtype=bool)
    m[np.atleast_1d(sorted(A) if isinstance(A, (set, frozenset)) else A)] = True
    return m


def restricted_top_eigenvalue(chain, A, check: bool = True) -> float:
    """Largest eigenvalue ``lambda_A`` of the kernel restricted to the complement of ``A``.

    Birth-and-death chains with ``A = {x..N}`` use Sturm bisection; other
    reversible chains use a symmetric eigensolve of the similar matrix
    ``D^1/2 K_A D^-1/2``. For reversible chains ``1 - lambda_A >= pi(A)(1 - lambda_1)``
    is asserted. Only non-reversible chains need an irreducible restriction.
    """
    bd = chain if isinstance(chain, BirthDeathChain) else None
    chain = as_chain(chain)
    mask = _mask(chain.size, A)
    C = ~mask
    if not C.any():
        return 0.0
    sub = chain.kernel[np.ix_(C, C)]
    # a reversible restriction is symmetrisable, so its Perron root is the top eigenvalue block by block
    if not chain.reversible and len(communicating_classes(sub)) > 1:
        raise ChainError("restriction to the complement of A is reducible")
    idx = np.flatnonzero(C)
    if bd is not None and idx[0] == 0 and np.all(np.diff(idx) == 1):
        lam = float(bd.tri.eigenvalues(len(idx))[0]) if len(idx) > 1 else float(bd.r[0])
    elif chain.reversible:
        s = np.sqrt(chain.stationary[C])
        S = s[:, None] * sub / s[None, :]
        lam = float(np.linalg.eigvalsh(0.5 * (S + S.T))[-1])
    else:
        lam = float(np.max(np.linalg.eigvals(sub).real))
    if check and chain.reversible and chain.size > 1:
        from .chain_core import reversible_spectrum

        lam1 = float(reversible_spectrum(chain)[0][1])
        piA = float(chain.stationary[mask].sum())
        if 1.0 - lam < piA * (1.0 - lam1) - 1e-10:
            raise ArithmeticError(f"1 - lambda_A = {1 - lam!r} < pi(A)(1 - lambda_1) = {piA * (1 - lam1)!r}")
    return lam


def _tail_from(chain, dist, A, horizon: int) -> np.ndarray:
    C = ~_mask(chain.size, A)
    Q = chain.kernel[np.ix_(C, C)]
    v = np.asarray(dist, dtype=float)[C]
    out = np.empty(horizon + 1)
    for n in range(horizon + 1):
        out[n] = v.sum()
        v = v @ Q
    return out


def quasistationary_tail_bound(chain, A, n: int) -> tuple[float, float]:
    """``(pi(A^c) lambda_A^n, P_pi(T_A > n))``; the second never exceeds the first."""
    chain = as_chain(chain)
    C = ~_mask(chain.size, A)
    if not C.any():
        return 0.0, 0.0
    lam = restricted_top_eigenvalue(chain, A, check=False)
    bound = float(chain.stationary[C].sum()) * lam**n
    exact = float(_tail_from(chain, chain.stationary, A, n)[n])
    if exact > bound + 1e-12:
        raise ArithmeticError(f"P_pi(T_A > {n}) = {exact!r} exceeds pi(A^c) lambda_A^n = {bound!r}")
    return bound, exact


@dataclass(frozen=True)
class TriangleCheck:
    lhs: float
    tv: float
    tail: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.tv + self.tail + 1e-12


def triangle_tail_inequality_check(chain, A, x: int, n: int, m: int) -> TriangleCheck:
    """``P_x(T_A > n+m) <= ||delta_x P^n - pi||_TV + P_pi(T_A > m)``."""
    chain = as_chain(chain)
    start = point_mass(chain.size, x)
    lhs = float(_tail_from(chain, start, A, n + m)[n + m])
    row = start
    for _ in range(n):
        row = row @ chain.kernel
    tv = 0.5 * float(np.abs(row - chain.stationary).sum())
    tail = float(_tail_from(chain, chain.stationary, A, m)[m])
    res = TriangleCheck(lhs, tv, tail)
    if not res.ok:
        raise ArithmeticError(f"triangle inequality fails: {lhs!r} > {tv!r} + {tail!r}")
    return res


# ---------------------------------------------------------------------------
# reports


@dataclass
class CutoffRow:
    N: int
    mean: float
    sigma: float
    lambda_A: float
    certified: bool = True
    extra: dict = field(default_factory=dict)

    @property
    def product(self) -> float:
        return (1.0 - self.lambda_A) * self.mean

    @property
    def window_product(self) -> float:
        return (1.0 - self.lambda_A) * self.sigma

    @property
    def verdict(self) -> str:
        return "certified" if self.certified else "advisory"

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        d.update(product=self.product, window_product=self.window_product, verdict=self.verdict)
        d.update(self.extra)
        return d


@dataclass
class CutoffReport:
    family: str
    rows: list[CutoffRow]
    flags: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)

    CSV_COLUMNS = ("N", "mean", "sigma", "lambda_A", "product", "window_product", "verdict")

    def column(self, name: str) -> np.ndarray:
        return np.array([r.as_dict()[name] for r in self.rows])

    def as_dict(self) -> dict:
        return {
            "family": self.family,
            "rows": [r.as_dict() for r in self.rows],
            "flags": self.flags,
            "curves": self.curves,
        }


def increasing_beyond(values, threshold: float = TREND_THRESHOLD) -> bool | None:
    """Trend verdict for ``-> infinity``: non-decreasing and ending above ``threshold``."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return None
    return bool(np.all(np.diff(v) >= -1e-12 * np.abs(v[1:])) and v[-1] > threshold)


def bounded_below(values, floor_: float = WINDOW_FLOOR) -> bool | None:
    """Trend verdict for ``liminf > 0``: the minimum stays above ``floor_``."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return None
    return bool(v.min() > floor_)


def vanishing(values, factor: float = 2.0) -> bool | None:
    """Trend verdict for ``-> 0``: non-increasing and shrinking by at least ``factor``."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return None
    return bool(np.all(np.diff(v) <= 1e-12 * np.abs(v[:-1])) and v[-1] * factor <= v[0])


def tv_series(chain, start, horizon: int) -> np.ndarray:
    chain = as_chain(chain)
    out = np.empty(horizon + 1)
    row = np.asarray(start, dtype=float)
    for n in range(horizon + 1):
        out[n] = 0.5 * np.abs(row - chain.stationary).sum()
        row = row @ chain.kernel
    return out


def bound_curves(mean: float, sigma: float, lam: float, tv=None) -> dict:
    """Upper (Chebyshev) and lower bounds on ``d`` around ``mean``.

    ``d(ceil(mean + g sigma)) <= 1/(1 + g^2)`` and
    ``d(floor((1-eps) mean)) >= 1 - (2 sigma/(eps mean))^2 - e exp(-(eps/2)(1 - lam) mean)``.
    With ``tv`` (a long enough ``d`` series) the exact values are attached.
    """
    upper = []
    for g in GAMMAS:
        n = ceil(mean + g * sigma)
        row = {"gamma": g, "n": n, "bound": 1.0 / (1.0 + g * g)}
        if tv is not None and n < len(tv):
            row["d"] = float(tv[n])
        upper.append(row)
    lower = []
    for eps in EPSILONS:
        n = floor((1 - eps) * mean)
        b = 1.0 - (2.0 * sigma / (eps * mean)) ** 2 - e * np.exp(-(eps / 2) * (1.0 - lam) * mean)
        row = {"epsilon": eps, "n": n, "bound": float(b)}
        if tv is not None and 0 <= n < len(tv):
            row["d"] = float(tv[n])
        lower.append(row)
    return {"upper": upper, "lower": lower}


def cutoff_general(family, label: str = "general", curves: bool = True) -> CutoffReport:
    """Report over ``(N, chain, A, start)`` members (``N`` may be omitted: index is used)."""
    rows = []
    all_curves = {}
    for i, member in enumerate(family):
        if len(member) == 4:
            N, chain, A, start = member
        else:
            chain, A, start = member
            N = i
        base = as_chain(chain)
        mom = hitting_moments_absorbing(base, sorted(A) if isinstance(A, (set, frozenset)) else A, start)
        lam = restricted_top_eigenvalue(chain, A)
        verdict = verify_halting_state(base, start, A if np.ndim(A) == 0 else list(A))
        rows.append(CutoffRow(N, mom.mean, mom.sigma, lam, verdict.status == "certified"))
        if curves:
            horizon = ceil(mom.mean + GAMMAS[-1] * mom.sigma) + 1
            all_curves[str(N)] = bound_curves(mom.mean, mom.sigma, lam, tv_series(base, start, horizon))
    report = CutoffReport(label, rows, curves=all_curves)
    report.flags = {
        "cutoff_condition": increasing_beyond([r.product for r in rows]),
        "window_condition": bounded_below([r.window_product for r in rows]),
        "advisory": any(not r.certified for r in rows),
    }
    return report


def _upper_set(bd: BirthDeathChain, x: int) -> list[int]:
    return list(range(x, bd.size))


def select_witness(bd: BirthDeathChain, x_star: int, mean_x: float, sigma_x: float) -> int | None:
    """Largest ``y < x*`` with ``pi({0..y}) <= N^(-1/4)`` and ``E[T_x*] - E[T_y] <= sigma(T_x*)``."""
    N = bd.N
    cum = np.cumsum(bd.stationary)
    ok = np.flatnonzero(cum[:x_star] <= N ** -0.25)
    if ok.size == 0:
        return None
    y = int(ok[-1])
    if y == 0:
        return None if mean_x > sigma_x else 0
    gap = mean_x - hitting_moments_direct(bd, y).mean
    return y if gap <= sigma_x else None


def witness_lower_curves(mean: float, sigma: float, mean_y: float, pi_y: float, tv=None) -> dict:
    """Lower bounds on ``d`` from a witness ``y``.

    At ``n = floor((1-eps) mean)``:
    ``1 - sigma^2 / (mean^2 (eps - (1 - mean_y/mean))^2) - pi({0..y})``, valid when
    ``eps > 1 - mean_y/mean``. At ``n = floor(mean - g sigma)``:
    ``1 - 1/(g - passage/sigma)^2 - pi({0..y})``, valid when ``g > passage/sigma``.
    Invalid points carry ``bound = None``.
    """
    lag = 1.0 - mean_y / mean
    passage = mean - mean_y
    eps_rows = []
    for eps in EPSILONS:
        n = floor((1 - eps) * mean)
        b = 1.0 - sigma**2 / (mean**2 * (eps - lag) ** 2) - pi_y if eps > lag else None
        row = {"epsilon": eps, "n": n, "bound": b}
        if tv is not None and 0 <= n < len(tv):
            row["d"] = float(tv[n])
        eps_rows.append(row)
    gamma_rows = []
    for g in GAMMAS:
        n = floor(mean - g * sigma)
        b = 1.0 - 1.0 / (g - passage / sigma) ** 2 - pi_y if g > passage / sigma and n >= 0 else None
        row = {"gamma": g, "n": n, "bound": b}
        if tv is not None and 0 <= n < len(tv):
            row["d"] = float(tv[n])
        gamma_rows.append(row)
    return {"lower_epsilon": eps_rows, "lower_gamma": gamma_rows}


def cutoff_bd(family, label: str = "birth-death", strict: bool = False, curves: bool = False) -> CutoffReport:
    """Birth-and-death criterion over ``(N, bd, x_star[, y])`` members.

    Without ``y`` the witness is chosen by :func:`select_witness`; if none
    exists the row records ``y = None`` and the witness flag turns false
    (``strict`` raises instead).
    """
    rows = []
    all_curves = {}
    for member in family:
        N, bd, x_star = member[:3]
        y = member[3] if len(member) > 3 else None
        spec = hitting_moments_spectral(bd, x_star)
        direct = hitting_moments_direct(bd, x_star)
        oracle = hitting_moments_absorbing(bd, x_star)
        lam = restricted_top_eigenvalue(bd, _upper_set(bd, x_star))
        start = point_mass(bd.size, 0)
        certified = verify_halting_state(bd, start, x_star).status == "certified"
        if y is None:
            y = select_witness(bd, x_star, oracle.mean, oracle.sigma)
            if y is None and strict:
                raise ChainError(f"no valid witness state for N = {N}")
        extra = {
            "mean_spectral": spec.mean,
            "mean_direct": direct.mean,
            "mean_oracle": oracle.mean,
            "x_star": x_star,
            "y": y,
        }
        if y is not None and y >= 1:
            mean_y = hitting_moments_direct(bd, y).mean
            extra.update(
                mean_y=mean_y,
                passage_y_x=oracle.mean - mean_y,
                pi_below_y=float(np.sum(bd.stationary[: y + 1])),
            )
        rows.append(CutoffRow(N, oracle.mean, oracle.sigma, lam, certified, extra))
        tv = None
        if curves:
            horizon = ceil(oracle.mean + GAMMAS[-1] * oracle.sigma) + 1
            tv = tv_series(bd, start, horizon)
            all_curves[str(N)] = bound_curves(oracle.mean, oracle.sigma, lam, tv)
        if "mean_y" in extra:
            lower = witness_lower_curves(oracle.mean, oracle.sigma, extra["mean_y"], extra["pi_below_y"], tv)
            all_curves.setdefault(str(N), {}).update(lower)
    means = [r.mean for r in rows]
    ratios = [r.sigma / r.mean for r in rows]
    passage = [r.extra.get("passage_y_x") for r in rows]
    report = CutoffReport(label, rows, curves=all_curves)
    report.flags = {
        "mean_diverges": increasing_beyond(means),
        "sigma_o_mean": vanishing(ratios),
        "cutoff_condition": None if len(rows) < 2 else bool(increasing_beyond(means) and vanishing(ratios)),
        "witness_found": all(r.extra["y"] is not None for r in rows),
        "window_condition": None
        if len(rows) < 2 or any(p is None for p in passage)
        else bool(max(p / r.sigma for p, r in zip(passage, rows)) <= 1.0 + 1e-12),
        "advisory": any(not r.certified for r in rows),
    }
    return report


def symmetric_times(bd: BirthDeathChain) -> tuple[float, float, float, float]:
    """``t_N``, ``w_N`` and the two condition sums of a symmetric chain.

    ``t_N = (1/2) sum 1/(1 - lam_k)``, ``w_N = (1/2) sqrt(sum lam_k/(1 - lam_k)^2)``,
    ``c1 = (1 - lam_1) sum 1/(1 - lam_k)``, ``c2 = (1 - lam_1)^2 sum lam_k/(1 - lam_k)^2``.
    """
    lam = bd.tri.eigenvalues()[1:]
    gap = 1.0 - lam
    s1 = float(np.sum(1.0 / gap))
    s2 = float(np.sum(lam / gap**2))
    t = 0.5 * s1
    w = 0.5 * np.sqrt(max(s2, 0.0))
    return t, float(w), float(gap[0] * s1), float(gap[0] ** 2 * s2)


def cutoff_symmetric(family, label: str = "symmetric", curves: bool = False) -> CutoffReport:
    """Symmetric criterion over ``(N, bd)`` members, target ``x* = [N/2] + 1``."""
    rows = []
    all_curves = {}
    for N, bd in family:
        if not np.array_equal(bd.kernel, bd.kernel[::-1, ::-1]):
            raise ChainError(f"member N = {N} is not symmetric")
        x_star = bd.N // 2 + 1
        if x_star > bd.N:
            rows.append(CutoffRow(N, 0.0, 0.0, 0.0, False, {"x_star": x_star}))
            continue
        t, w, c1, c2 = symmetric_times(bd)
        spec = hitting_moments_spectral(bd, x_star)
        direct = hitting_moments_direct(bd, x_star)
        oracle = hitting_moments_absorbing(bd, x_star)
        lam = restricted_top_eigenvalue(bd, _upper_set(bd, x_star))
        start = point_mass(bd.size, 0)
        certified = verify_halting_state(bd, start, x_star).status == "certified"
        extra = {
            "x_star": x_star,
            "t_N": t,
            "w_N": w,
            "condition_mean": c1,
            "condition_window": 4.0 * w * w * (c1 / (2 * t)) ** 2 if t > 0 else 0.0,
            "condition_sum": c2,
            "mean_spectral": spec.mean,
            "mean_direct": direct.mean,
            "mean_oracle": oracle.mean,
            "mean_over_t": oracle.mean / t if t > 0 else np.nan,
        }
        rows.append(CutoffRow(N, oracle.mean, oracle.sigma, lam, certified, extra))
        if curves:
            horizon = ceil(oracle.mean + GAMMAS[-1] * oracle.sigma) + 1
            all_curves[str(N)] = bound_curves(oracle.mean, oracle.sigma, lam, tv_series(bd, start, horizon))
    report = CutoffReport(label, rows, curves=all_curves)
    valid = [r for r in rows if "t_N" in r.extra]
    report.flags = {
        "cutoff_condition": increasing_beyond([r.extra["condition_mean"] for r in valid]) if len(valid) == len(rows) else False,
        "window_condition": bounded_below([r.extra["condition_sum"] for r in valid]) if len(valid) == len(rows) else False,
        "mean_over_t_last": valid[-1].extra["mean_over_t"] if valid else None,
        "advisory": any(not r.certified for r in rows),
    }
    if len(rows) < 2:
        report.flags["cutoff_condition"] = None
        report.flags["window_condition"] = None
    return report
