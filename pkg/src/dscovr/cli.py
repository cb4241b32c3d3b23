"""Command-line entry point: ``python -m dscovr {run,oracle,summarize}``.

Exit codes: 0 success, 2 configuration or input error, 3 divergence.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import ConfigError, DivergenceError, ParseError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _overrides(args):
    out = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
        out[key.strip()] = value
    if getattr(args, "algo", None):
        out["algos"] = args.algo
    if getattr(args, "seed", None):
        out["seeds"] = args.seed
    if getattr(args, "out", None):
        out["out"] = args.out
    return out


def _cmd_run(args):
    from .experiment import load_config, run_experiment

    cfg = load_config(args.config, _overrides(args))
    summary = run_experiment(cfg)
    diverged = [r for r in summary["runs"] if r["status"] != "ok"]
    for r in summary["runs"]:
        if r["status"] == "ok":
            print(f"{r['algo']:>10} seed={r['seed']:<4} passes={r['passes']:.1f} "
                  f"primal_gap={r['final_primal_gap']:.3e} -> {r['trace']}")
        else:
            print(f"{r['algo']:>10} seed={r['seed']:<4} DIVERGED: {r.get('message', '')}")
    print(f"summary written to {cfg.out}/summary.json")
    return EXIT_DIVERGED if diverged else EXIT_OK


def _cmd_oracle(args):
    from .baselines import optimality_residual
    from .experiment import build_problem, cached_oracle, load_config
    from .problem import dual_value, primal_value

    cfg = load_config(args.config, _overrides(args))
    problem = build_problem(cfg)
    ref = cached_oracle(cfg, problem)
    p = primal_value(problem, ref.w)
    try:
        d = dual_value(problem, ref.alpha)
    except NotImplementedError:
        d = None
    print(json.dumps({"primal": p, "dual": d, "gap": None if d is None else p - d,
                      "residual": optimality_residual(problem, ref.w),
                      "w_norm": float(np.linalg.norm(ref.w))}, indent=2))
    return EXIT_OK


def _cmd_summarize(args):
    from .experiment import summarize

    try:
        table = summarize(args.dir)
    except FileNotFoundError as exc:
        raise ConfigError("dir", str(exc)) from None
    print(json.dumps(table, indent=2))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="dscovr", description="Distributed saddle-point ERM experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run every (algorithm, seed) cell of a config")
    run.add_argument("--config", required=True)
    run.add_argument("--algo", help="comma-separated algorithms, overrides the config")
    run.add_argument("--seed", help="comma-separated seeds, overrides the config")
    run.add_argument("--out", help="output directory")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    run.set_defaults(func=_cmd_run)
    orc = sub.add_parser("oracle", help="print the reference saddle point's objective values")
    orc.add_argument("--config", required=True)
    orc.add_argument("--set", action="append", metavar="KEY=VALUE")
    orc.set_defaults(func=_cmd_oracle)
    sm = sub.add_parser("summarize", help="aggregate a results directory")
    sm.add_argument("dir")
    sm.set_defaults(func=_cmd_summarize)
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
