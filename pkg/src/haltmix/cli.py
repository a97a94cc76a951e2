"""``haltmix`` command line.

Every run writes its table to a file (``--out``, or ``<outdir>/<command>-<model>.<ext>``
with ``outdir`` from ``--outdir``, ``$HALTMIX_OUTDIR`` or the working directory)
and a manifest ``<output>.manifest.json`` from which ``haltmix replay`` reproduces
the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import models as M
from .bd_spectral import (
    BirthDeathChain,
    SpectralError,
    bd_spectrum,
    hitting_moments_absorbing,
    hitting_moments_direct,
    hitting_moments_spectral,
)
from .chain_core import ChainError, DiscreteChain, as_chain, reversible_spectrum, separation_series, tv_series
from .ctime import Generator, ct_hitting_survival, ct_marginal, uniformize
from .cutoff import cutoff_bd, cutoff_general, cutoff_symmetric
from .io import csv_text, json_text, load_description, table_json
from .simulate import SimConfig, sample_hitting, sample_stopping_time
from .stopping import (
    ScheduleError,
    build_schedule,
    default_horizon,
    halting_set_M,
    hitting_survival,
    sst_schedule,
    verify_halting_state,
)

MODELS = ("biased-walk", "ehrenfest", "bernoulli-laplace", "metropolis", "riffle", "ct-ehrenfest", "two-state-ct")
CT_MODELS = ("ct-ehrenfest", "two-state-ct")
FAMILY_MODELS = ("ehrenfest", "biased-walk", "bernoulli-laplace")
OUTDIR_ENV = "HALTMIX_OUTDIR"
RIFFLE_TV_EPS = 1e-13


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover
        return "0+unknown"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# model construction


@dataclass
class Model:
    name: str
    obj: object
    kind: str  # discrete, riffle, ct

    @property
    def chain(self) -> DiscreteChain:
        if self.kind == "riffle":
            return self.obj.chain
        if self.kind == "ct":
            _, P = uniformize(self.generator, "lazy")
            return DiscreteChain.from_kernel(P, stationary=self.generator.stationary)
        return as_chain(self.obj)

    @property
    def generator(self) -> Generator:
        if isinstance(self.obj, Generator):
            return self.obj
        return Generator(self.obj.rates())

    @property
    def size(self) -> int:
        if self.kind == "ct":
            return self.generator.size
        if self.kind == "riffle":
            return self.obj.N
        return as_chain(self.obj).size


def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"model {args.model} needs --{n.replace('_', '-')}")


def build_model(args) -> Model:
    if args.chain is not None:
        if args.model is not None:
            raise UsageError("give either a model name or --chain, not both")
        obj = load_description(args.chain)
        return Model("chain", obj, "ct" if isinstance(obj, Generator) else "discrete")
    if args.model is None:
        raise UsageError("a model name or --chain is required")
    m = args.model
    if m == "biased-walk":
        _need(args, "N", "p")
        bd = M.biased_walk(args.N, args.p, args.q)
    elif m == "ehrenfest":
        _need(args, "N")
        bd = M.ehrenfest(args.N)
    elif m == "bernoulli-laplace":
        _need(args, "N")
        bd = M.bernoulli_laplace(args.N, args.r if args.r is not None else args.N // 2)
    elif m == "metropolis":
        _need(args, "weights")
        bd = M.metropolis_bd([float(w) for w in args.weights.split(",")])
    elif m == "riffle":
        _need(args, "N")
        return Model(m, M.RiffleProjection(args.N), "riffle")
    elif m == "ct-ehrenfest":
        _need(args, "N", "lam", "mu")
        return Model(m, M.CtEhrenfest(args.N, args.lam, args.mu), "ct")
    elif m == "two-state-ct":
        _need(args, "lam", "mu", "p")
        return Model(m, M.TwoStateCT(args.lam, args.mu, args.p), "ct")
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown model {m}")
    if args.lazy:
        bd = bd.lazy(0.5)
    return Model(m, bd, "discrete")


def start_vector(model: Model, args) -> np.ndarray:
    if model.name == "two-state-ct" and args.start is None:
        return model.obj.start
    n = model.size if model.kind != "riffle" else model.obj.N
    if args.start in (None, "0"):
        v = np.zeros(n)
        v[0] = 1.0
        return v
    if args.start == "stationary":
        return model.generator.stationary if model.kind == "ct" else model.chain.stationary.copy()
    try:
        x = int(args.start)
    except ValueError:
        raise UsageError(f"--start must be a state index or 'stationary', got {args.start!r}") from None
    if not 0 <= x < n:
        raise UsageError(f"--start {x} outside 0..{n - 1}")
    v = np.zeros(n)
    v[x] = 1.0
    return v


# ---------------------------------------------------------------------------
# commands; each returns (header, rows, extra-json, warnings)


def _riffle_horizon(proj, cap: int = 400) -> int:
    n = 0
    while n < cap and float(M.riffle_tv(proj, n)) >= RIFFLE_TV_EPS:
        n += 1
    return n


def cmd_tv(model: Model, args):
    if model.kind == "ct":
        return _ct_tv(model, args)
    if model.kind == "riffle":
        proj = model.obj
        horizon = args.horizon if args.horizon is not None else _riffle_horizon(proj)
        rows = []
        for n in range(horizon + 1):
            nu = M.riffle_distribution(proj, n)
            sep = max(Fraction(1) - a / b for a, b in zip(nu, proj.stationary))
            rows.append((n, M.riffle_tv(proj, n), sep))
        return ("n", "tv", "sep"), rows, None, []
    chain = model.chain
    start = start_vector(model, args)
    horizon = args.horizon if args.horizon is not None else default_horizon(chain, start)
    tv = tv_series(chain, start, horizon)
    sep = separation_series(chain, start, horizon)
    return ("n", "tv", "sep"), list(zip(range(horizon + 1), tv, sep)), None, []


def _ct_halting_state(model: Model, start) -> int | None:
    if model.name == "ct-ehrenfest" and start[0] == 1.0:
        return M.ct_ehrenfest_halting(model.obj)
    states, _ = halting_set_M(model.chain, start)
    return min(states) if states else None


def _ct_tv(model: Model, args):
    G = model.generator
    start = start_vector(model, args)
    t_max = args.t_max if args.t_max is not None else 5.0
    grid = np.linspace(0.0, t_max, args.t_points)
    x = _ct_halting_state(model, start)
    pi = G.stationary
    rows = []
    cur = start
    last = 0.0
    for t in grid:
        cur = ct_marginal(G, cur, t - last)
        last = t
        surv = ct_hitting_survival(G, start, [x], t) if x is not None else None
        rows.append((t, 0.5 * float(np.abs(cur - pi).sum()), surv))
    return ("t", "tv", "survival_halting_state"), rows, {"halting_state": x}, []


def cmd_halting(model: Model, args):
    if model.kind == "riffle":
        proj = model.obj
        verdicts = [M.riffle_halting_check(proj, r=r) for r in range(1, proj.N + 1)]
    else:
        chain = model.chain
        start = start_vector(model, args)
        ctx: dict = {}
        verdicts = [verify_halting_state(chain, start, x, _ctx=ctx) for x in range(chain.size)]
    rows = [(v.state, v.label, v.margin, v.horizon, v.method) for v in verdicts]
    warnings = []
    if model.kind == "ct":
        warnings.append("continuous-time verdicts come from the lazy uniformized chain")
    return ("state", "verdict", "margin", "horizon", "method"), rows, None, warnings


def cmd_spectrum(model: Model, args):
    if model.kind == "ct":
        q, _ = uniformize(model.generator, "lazy")
        w, _ = reversible_spectrum(model.chain)
        vals = q * (w - 1.0)
    elif isinstance(model.obj, BirthDeathChain):
        vals = bd_spectrum(model.obj).eigenvalues
    else:
        chain = model.chain
        if not chain.reversible:
            raise ChainError("spectrum output needs a reversible chain")
        vals, _ = reversible_spectrum(chain)
    return ("k", "lambda_k"), list(enumerate(vals)), None, []


def cmd_hitting(model: Model, args):
    if model.kind != "discrete":
        raise UsageError("hitting needs a discrete-time model")
    chain = model.chain
    targets = [args.target] if args.target is not None else list(range(1, chain.size))
    rows = []
    bd = model.obj if isinstance(model.obj, BirthDeathChain) else None
    for x in targets:
        if not 0 <= x < chain.size:
            raise UsageError(f"--target {x} outside 0..{chain.size - 1}")
        if bd is not None:
            methods = (hitting_moments_spectral(bd, x), hitting_moments_direct(bd, x), hitting_moments_absorbing(bd, x))
        else:
            methods = (hitting_moments_absorbing(chain, x, start_vector(model, args)),)
        rows.extend((x, m.mean, m.variance, m.method) for m in methods)
    return ("x", "mean", "variance", "method"), rows, None, []


def _states(text: str | None, size: int) -> list[int] | None:
    if text is None:
        return None
    out = sorted({int(s) for s in text.split(",") if s.strip()})
    if not out or out[0] < 0 or out[-1] >= size:
        raise UsageError(f"--set must list states in 0..{size - 1}")
    return out


def cmd_schedule(model: Model, args):
    if model.kind == "ct":
        raise UsageError("schedule needs a discrete-time model")
    chain = model.chain
    if model.kind == "riffle":
        start = np.zeros(chain.size)
        start[0] = 1.0
    else:
        start = start_vector(model, args)
    horizon = args.horizon if args.horizon is not None else default_horizon(chain, start)
    sch = sst_schedule(chain, start, horizon) if args.kind == "sst" else build_schedule(chain, start, horizon)
    tv = tv_series(chain, start, horizon)
    sep = separation_series(chain, start, horizon)
    A = _states(args.set, chain.size)
    header = ["n", "tv", "sep", "survival_T"]
    cols = [range(horizon + 1), tv, sep, sch.survival]
    if A is not None:
        header.append("survival_T_A")
        cols.append(hitting_survival(chain, start, A, horizon))
    extra = {"kind": sch.kind, "max_identity_error": sch.max_identity_error()}
    return tuple(header), list(zip(*cols)), extra, []


def _family_member(args, N: int):
    if args.model == "ehrenfest":
        bd = M.ehrenfest(N)
    elif args.model == "biased-walk":
        if args.p is None:
            raise UsageError("biased-walk family needs --p")
        bd = M.biased_walk(N, args.p, args.q)
    elif args.model == "bernoulli-laplace":
        # N is the top state: N red balls among 2N
        bd = M.bernoulli_laplace(2 * N, N)
    else:
        raise UsageError(f"cutoff-scan supports {', '.join(FAMILY_MODELS)}")
    return bd.lazy(0.5) if args.lazy else bd


def _target_state(args, bd: BirthDeathChain) -> int:
    if args.model == "biased-walk" and args.p != 0.5 and (args.q is None or args.q != args.p):
        return bd.N
    return bd.N // 2 + 1


def cmd_cutoff_scan(args):
    if args.model not in FAMILY_MODELS:
        raise UsageError(f"cutoff-scan supports {', '.join(FAMILY_MODELS)}")
    Ns = list(range(args.N_from, args.N_to + 1, args.N_step))
    if not Ns:
        raise UsageError("empty N range")
    members = [(N, _family_member(args, N)) for N in Ns]
    if args.criterion == "symmetric":
        report = cutoff_symmetric(members, label=args.model, curves=args.curves)
    elif args.criterion == "bd":
        report = cutoff_bd([(N, bd, _target_state(args, bd)) for N, bd in members], label=args.model, curves=args.curves)
    else:
        fam = []
        for N, bd in members:
            x = _target_state(args, bd)
            start = np.zeros(bd.size)
            start[0] = 1.0
            fam.append((N, bd, list(range(x, bd.size)), start))
        report = cutoff_general(fam, label=args.model, curves=args.curves)
    rows = [tuple(r.as_dict()[c] for c in report.CSV_COLUMNS) for r in report.rows]
    warnings = ["uncertified halting state: rows marked advisory"] if report.flags.get("advisory") else []
    return report.CSV_COLUMNS, rows, report.as_dict(), warnings


def cmd_simulate(model: Model, args):
    if model.kind != "discrete":
        raise UsageError("simulate needs a discrete-time model")
    chain = model.chain
    start = start_vector(model, args)
    cfg = SimConfig(args.seed, args.reps, args.max_steps)
    if args.target == "stopping":
        horizon = default_horizon(chain, start)
        if args.max_steps is not None:
            horizon = max(horizon, args.max_steps)
        sch = build_schedule(chain, start, horizon)
        samples = sample_stopping_time(sch, chain, start, cfg)
        header = ("replicate", "T", "X_T")
    else:
        A = _states(args.set, chain.size)
        if A is None:
            raise UsageError("hitting target needs --set")
        samples = sample_hitting(chain, A, start, cfg)
        header = ("replicate", "T")
    warnings = [f"{samples.censored} replicates censored at {samples.max_steps} steps"] if samples.censored else []
    return header, samples.rows(), {"summary": samples.summary()}, warnings


# ---------------------------------------------------------------------------
# parser and output


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("output")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--quiet", action="store_true")
    g.add_argument("--out", help="output file")
    g.add_argument("--outdir", help=f"output directory (default ${OUTDIR_ENV} or .)")


def _model_args(p: argparse.ArgumentParser, positional: bool = True):
    if positional:
        p.add_argument("model", nargs="?", choices=MODELS)
        p.add_argument("--chain", help="chain-description JSON file")
    p.add_argument("--N", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--r", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--weights", help="comma-separated target weights (metropolis)")
    p.add_argument("--lazy", action="store_true", help="hold with probability 1/2")
    p.add_argument("--start", help="start state or 'stationary' (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="haltmix", description="Halting states and optimal stopping times for finite Markov chains.")
    parser.add_argument("--version", action="version", version=f"haltmix {tool_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tv", help="distance series d(n), s(n) (or d(t) for continuous time)")
    _model_args(p)
    p.add_argument("--horizon", type=int)
    p.add_argument("--t-max", type=float)
    p.add_argument("--t-points", type=int, default=101)
    _common(p)

    p = sub.add_parser("halting", help="per-state halting verdicts")
    _model_args(p)
    _common(p)

    p = sub.add_parser("spectrum", help="eigenvalues, descending")
    _model_args(p)
    _common(p)

    p = sub.add_parser("hitting", help="hitting-time mean and variance from state 0")
    _model_args(p)
    p.add_argument("--target", type=int)
    _common(p)

    p = sub.add_parser("schedule", help="optimal stopping schedule survival")
    _model_args(p)
    p.add_argument("--horizon", type=int)
    p.add_argument("--kind", choices=("tv", "sst"), default="tv")
    p.add_argument("--set", help="comma-separated states A for the survival_T_A column")
    _common(p)

    p = sub.add_parser("cutoff-scan", help="cutoff report over a family")
    p.add_argument("model", choices=FAMILY_MODELS)
    _model_args(p, positional=False)
    p.add_argument("--N-from", dest="N_from", type=int, required=True)
    p.add_argument("--N-to", dest="N_to", type=int, required=True)
    p.add_argument("--N-step", dest="N_step", type=int, default=1)
    p.add_argument("--criterion", choices=("general", "bd", "symmetric"), default="symmetric")
    p.add_argument("--curves", action="store_true", help="attach exact d(n) to the bound curves")
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo samples")
    _model_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--target", choices=("stopping", "hitting"), default="stopping")
    p.add_argument("--set", help="comma-separated target states (hitting)")
    _common(p)

    p = sub.add_parser("replay", help="rerun a manifest")
    p.add_argument("manifest")
    p.add_argument("--check", action="store_true", help="rerun into a scratch directory and compare bytes")
    p.add_argument("--quiet", action="store_true")
    return parser


def _output_path(args, ext: str) -> Path:
    if args.out:
        return Path(args.out)
    outdir = Path(args.outdir or os.environ.get(OUTDIR_ENV) or ".")
    name = getattr(args, "model", None) or "chain"
    return outdir / f"{args.command}-{name}.{ext}"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _strip_output_flags(argv: list[str]) -> list[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in ("--out", "--outdir"):
            skip = True
            continue
        if a.startswith("--out=") or a.startswith("--outdir="):
            continue
        out.append(a)
    return out


def run(args, argv: list[str]) -> int:
    if args.command == "cutoff-scan":
        header, rows, extra, warnings = cmd_cutoff_scan(args)
    else:
        model = build_model(args)
        handler = {
            "tv": cmd_tv,
            "halting": cmd_halting,
            "spectrum": cmd_spectrum,
            "hitting": cmd_hitting,
            "schedule": cmd_schedule,
            "simulate": cmd_simulate,
        }[args.command]
        header, rows, extra, warnings = handler(model, args)

    path = _output_path(args, args.format)
    path.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        text = csv_text(header, rows)
    else:
        text = table_json(header, rows, extra)
    path.write_text(text)
    outputs = {"table": path}
    if args.format == "csv" and extra:
        side = path.with_name(path.name + (".summary.json" if args.command == "simulate" else ".report.json"))
        side.write_text(json_text(extra))
        outputs["document"] = side

    manifest = {
        "command": args.command,
        "argv": _strip_output_flags(argv),
        "model": getattr(args, "model", None) or getattr(args, "chain", None),
        "parameters": {k: v for k, v in vars(args).items() if k not in ("out", "outdir", "quiet", "command")},
        "seed": getattr(args, "seed", None),
        "outputs": {k: {"path": str(p.resolve()), "name": p.name, "sha256": _sha256(p)} for k, p in outputs.items()},
        "tool_version": tool_version(),
    }
    Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not args.quiet:
        if args.command == "simulate":
            sys.stdout.write(json_text(extra["summary"]))
        else:
            sys.stdout.write(text)
    return 0


def replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    argv = list(manifest["argv"])
    table = manifest["outputs"]["table"]
    if args.check:
        with tempfile.TemporaryDirectory() as tmp:
            target = Path(tmp) / table["name"]
            code = main(argv + ["--out", str(target), "--quiet"])
            if code != 0:
                return code
            ok = True
            for key, rec in manifest["outputs"].items():
                p = Path(tmp) / rec["name"]
                same = p.exists() and _sha256(p) == rec["sha256"]
                ok &= same
                if not args.quiet:
                    print(f"{key}: {'identical' if same else 'DIFFERS'}")
            return 0 if ok else 1
    return main(argv + ["--out", table["path"]] + (["--quiet"] if args.quiet else []))


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "replay":
            return replay(args)
        return run(args, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"haltmix: error: {exc}", file=sys.stderr)
        return 2
    except (ChainError, SpectralError, ScheduleError, ArithmeticError, ValueError, OSError) as exc:
        print(f"haltmix: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
