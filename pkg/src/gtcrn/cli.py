"""Command-line front end: simulate | estimate | check | probe | oracle."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .estimator import (DiscardLimitExceeded, Stopwatch, fd_estimate, gt_estimate, result_record)
from .expr import ExpressionError
from .models import model_hash, resolve_model
from .network import ModelError
from .oracles import (PureBirthLaw, exp_moment_threshold, monomolecular_solution, pure_birth_exp_moment_finite,
                      pure_birth_mean_sensitivity, pure_birth_moments, pure_birth_pmf)
from .simulator import DEFAULT_MAX_EVENTS, ExplosionGuard, SimConfig, simulate, simulate_direct
from .validity import check_gt_validity, integrability_probe

SCHEMA = "gtcrn/1"
EXIT_OK, EXIT_CONFIG, EXIT_EXPLOSION, EXIT_INCONCLUSIVE = 0, 2, 3, 4


class ConfigError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


GLOBAL_DEFAULTS = {"model": None, "seed": 0, "threads": 1, "out": None, "format": None}


def _common() -> argparse.ArgumentParser:
    # Accepted before or after the subcommand. Defaults are suppressed so neither
    # parser masks a value given to the other; they are filled in after parsing.
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--model", help="model file or built-in name")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--format", choices=("json", "csv", "text"))
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="gtcrn", description=__doc__, parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate one trajectory")
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--max-events", type=int, default=DEFAULT_MAX_EVENTS)
    s.add_argument("--replicate", type=int, default=0)
    s.add_argument("--algorithm", choices=("next-reaction", "direct"), default="next-reaction")

    e = sub.add_parser("estimate", parents=[common], help="sensitivity estimate")
    e.add_argument("--param", required=True, help="target parameter or reaction name")
    e.add_argument("--f", default="x1", help="polynomial observable")
    e.add_argument("--T", type=float, required=True)
    e.add_argument("--N", type=int, default=10**5)
    e.add_argument("--method", choices=("gt", "fd-forward", "fd-central"), default="gt")
    e.add_argument("--h", type=float, help="finite-difference step (default 0.05 c*)")
    e.add_argument("--crn", action="store_true", help="common random numbers for finite differences")
    e.add_argument("--max-events", type=int, default=DEFAULT_MAX_EVENTS)
    e.add_argument("--force", action="store_true", help="run GT even when validity is inconclusive")
    e.add_argument("--require-valid", action="store_true")

    c = sub.add_parser("check", parents=[common], help="GT validity report")
    c.add_argument("--param", help="target parameter or reaction name (default: all)")
    c.add_argument("--require-valid", action="store_true")
    c.add_argument("--probe-N", type=int, default=0, help="attach Monte Carlo probes with this many replicates")
    c.add_argument("--T", type=float, default=1.0)

    p = sub.add_parser("probe", parents=[common], help="integrability probes")
    p.add_argument("--param", required=True)
    p.add_argument("--kind", choices=("right", "left", "moment"), default="right")
    p.add_argument("--grid", type=_floats, help="comma-separated ρ, ε or moment powers")
    p.add_argument("--f", default="x1")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--N", type=int, default=10**5)
    p.add_argument("--max-events", type=int, default=DEFAULT_MAX_EVENTS)

    o = sub.add_parser("oracle", parents=[common], help="closed-form oracle values")
    o.add_argument("--kind", choices=("pure-birth", "immigration", "decay", "immigration-decay"), default="pure-birth")
    o.add_argument("--x0", type=int, default=1)
    o.add_argument("--c", type=float, default=1.0)
    o.add_argument("--d", type=float, default=1.0)
    o.add_argument("--t", type=float, default=1.0)
    o.add_argument("--k", type=_floats, default=[0.0, 1.0, 2.0])
    o.add_argument("--eps", type=_floats, default=[])
    return parser


def _load(args):
    if not args.model:
        raise ConfigError("--model is required")
    try:
        net, text = resolve_model(args.model)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from None
    return net, text


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out",)}


def _record(args, text, result) -> dict:
    rec = {"schema": SCHEMA, "command": args.command, "config": _config(args), "result": result}
    if text is not None:
        rec["model_sha256"] = model_hash(text)
    return rec


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"


def cmd_simulate(args):
    net, text = _load(args)
    cfg = SimConfig(T=args.T, max_events=args.max_events, seed=args.seed, replicate_index=args.replicate)
    sim = simulate if args.algorithm == "next-reaction" else simulate_direct
    traj = sim(net, cfg)
    if (args.format or "csv") == "csv":
        return traj.to_csv(), EXIT_OK
    summary = {"final_state": dict(zip(net.species, traj.final_state)),
               "counts": dict(zip((r.name for r in net.reactions), traj.counts)),
               "integrated_propensity": dict(zip((r.name for r in net.reactions), traj.integrated_propensity)),
               "n_events": len(traj.jump_times)}
    if args.format == "text":
        return "".join(f"{k}: {v}\n" for k, v in summary.items()), EXIT_OK
    return _dump(_record(args, text, summary)), EXIT_OK


def cmd_estimate(args):
    net, text = _load(args)
    target = net.channel(args.param)
    c_star = net.rate(target)
    cfg = SimConfig(T=args.T, max_events=args.max_events, seed=args.seed)
    report = check_gt_validity(net, target)
    code = EXIT_OK
    if not report.valid:
        if args.require_valid:
            sys.stderr.write(report.render(net) + "\n")
            return "", EXIT_INCONCLUSIVE
        if args.method == "gt" and not args.force:
            sys.stderr.write("GT validity could not be certified; rerun with --force to estimate anyway\n")
            sys.stderr.write(report.render(net) + "\n")
            return "", EXIT_INCONCLUSIVE
    with Stopwatch() as sw:
        if args.method == "gt":
            res = gt_estimate(net, args.f, target, cfg, args.N, args.threads)
            method = "GT"
        else:
            mode = args.method.split("-", 1)[1]
            h = args.h if args.h is not None else 0.05 * c_star
            res = fd_estimate(net, args.f, target, cfg, args.N, h, mode, args.crn, args.threads)
            method = f"FD-{mode}"
    rec = result_record(res, model=net.name, f=args.f, target_param=net.reactions[target].rate_param,
                        c_star=c_star, T=args.T, N=args.N, method=method, wallclock_s=sw.elapsed,
                        validity=report.verdict)
    if args.format == "text":
        return (f"{method} estimate of d E[{args.f}] / d {rec['target_param']}: {res.mean:.6g} "
                f"± {res.stderr:.3g} (95% CI {res.ci95[0]:.6g} .. {res.ci95[1]:.6g}, "
                f"N={res.n_replicates}, discarded {res.n_discarded})\n"), code
    if args.format == "csv":
        keys = ["method", "mean", "variance", "stderr", "n_discarded", "seed"]
        return ",".join(keys) + "\n" + ",".join(str(rec[k]) for k in keys) + "\n", code
    return _dump(_record(args, text, rec)), code


def cmd_check(args):
    net, text = _load(args)
    targets = [net.channel(args.param)] if args.param else list(range(net.m))
    reports = []
    for j in targets:
        rep = check_gt_validity(net, j)
        if args.probe_N > 0:
            cfg = SimConfig(T=args.T, seed=args.seed)
            rep.probes = (integrability_probe(net, j, cfg, args.probe_N, "right", threads=args.threads)
                          + integrability_probe(net, j, cfg, args.probe_N, "left", threads=args.threads))
        reports.append(rep)
    code = EXIT_INCONCLUSIVE if args.require_valid and not all(r.valid for r in reports) else EXIT_OK
    if args.format == "text":
        return "\n".join(r.render(net) for r in reports) + "\n", code
    return _dump(_record(args, text, [r.to_dict(net) for r in reports])), code


def cmd_probe(args):
    net, text = _load(args)
    target = net.channel(args.param)
    cfg = SimConfig(T=args.T, max_events=args.max_events, seed=args.seed)
    grid = args.grid
    if args.kind == "moment" and grid:
        grid = [int(g) for g in grid]
    results = integrability_probe(net, target, cfg, args.N, args.kind, grid, f=args.f if args.kind == "moment" else None,
                                  threads=args.threads)
    rows = [r.to_dict() for r in results]
    fmt = args.format or "text"
    if fmt == "json":
        return _dump(_record(args, text, rows)), EXIT_OK
    keys = ["condition", "parameter", "estimate", "stderr", "top_sample_share", "doubling_shift", "n", "status"]
    sep = "," if fmt == "csv" else "\t"
    return sep.join(keys) + "\n" + "".join(sep.join(str(r[k]) for k in keys) + "\n" for r in rows), EXIT_OK


def cmd_oracle(args):
    ks = [int(k) for k in args.k]
    if args.kind == "pure-birth":
        law = PureBirthLaw(args.x0, args.c, args.t)
        mean, var = pure_birth_moments(law)
        out = {"kind": "pure-birth", "x0": args.x0, "c": args.c, "t": args.t,
               "pmf": {str(args.x0 + k): pure_birth_pmf(law, k) for k in ks},
               "mean": mean, "variance": var, "dmean_dc": pure_birth_mean_sensitivity(law),
               "exp_moment_threshold": exp_moment_threshold(law),
               "exp_moment_finite": {str(e): pure_birth_exp_moment_finite(law, e) for e in args.eps}}
    else:
        law = monomolecular_solution(args.kind, {"c": args.c, "d": args.d}, args.x0, args.t)
        out = {"kind": args.kind, "x0": args.x0, "t": args.t, "family": law.family, "mean": law.mean,
               "variance": law.variance, "dmean": law.mean_sensitivity,
               "pmf": {str(k): law.pmf(k) for k in ks}}
    return _dump(_record(args, None, out)), EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "check": cmd_check,
            "probe": cmd_probe, "oracle": cmd_oracle}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for key, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    try:
        output, code = COMMANDS[args.command](args)
    except (ConfigError, ModelError, ExpressionError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except ExplosionGuard as exc:
        sys.stderr.write(f"explosion guard: {exc}\n")
        return EXIT_EXPLOSION
    except DiscardLimitExceeded as exc:
        sys.stderr.write(f"explosion guard: {exc}\n")
        return EXIT_EXPLOSION
    if output:
        if args.out:
            Path(args.out).write_text(output, encoding="utf-8")
        else:
            sys.stdout.write(output)
    return code


if __name__ == "__main__":
    sys.exit(main())
