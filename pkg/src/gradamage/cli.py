"""Command line driver: ``gradamage run|count-test|verify|compare``."""

import argparse
import logging
import sys

from . import kernels
from .io import ConfigError, load_config, run_scenario, timing_comparison
from .verify import condensation_equivalence, count_report, fd_oracle_suite


def _run(args):
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    status, rep = run_scenario(cfg)
    if cfg.scenario == "cube-count-test":
        print(rep.to_text())
    else:
        last = rep.records[-1] if rep.records else None
        print(f"{rep.formulation}: {rep.completed_steps}/{cfg.load.n_steps} steps, dofs {rep.n_dofs}, "
              f"assembly {rep.assembly_s:.2f} s, solve {rep.solve_s:.2f} s")
        if last is not None:
            print(f"final u* = {last.u_prescribed:.4g} mm, reaction = {last.reaction_top:.6g} N, D_max = {last.D_max:.6f}")
        if rep.aborted:
            print(f"nonconvergence: {rep.failure}", file=sys.stderr)
    print(f"artifacts in {cfg.output_dir}")
    return status


def _count(args):
    rep = count_report(args.steps)
    print(rep.to_text())
    if args.csv:
        rep.to_csv(args.csv)
    return 0


def _verify(args):
    rep = fd_oracle_suite(args.seed, args.states)
    print(rep.to_text())
    eq = condensation_equivalence(args.seed)
    ok = eq < 1e-10
    print(f"  {'PASS' if ok else 'FAIL'}  condensation equivalence     max abs diff {eq:.2e}  (tol 1e-10)")
    print(f"  kernel backend: {kernels.BACKEND}")
    if args.csv:
        rep.to_csv(args.csv)
    return 0 if rep.passed and ok else 1


def _compare(args):
    try:
        a, b = load_config(args.config_a), load_config(args.config_b)
        cmp = timing_comparison(a, b)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(cmp.to_text())
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="gradamage", description="Finite-strain gradient damage solver")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a scenario configuration")
    p.add_argument("config")
    p.set_defaults(func=_run)
    p = sub.add_parser("count-test", help="count test on structured cubes")
    p.add_argument("--steps", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--csv")
    p.set_defaults(func=_count)
    p = sub.add_parser("verify", help="finite-difference oracles and condensation check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--states", type=int, default=1000)
    p.add_argument("--csv")
    p.set_defaults(func=_verify)
    p = sub.add_parser("compare", help="timing ratio of two configurations (A / B)")
    p.add_argument("config_a")
    p.add_argument("config_b")
    p.set_defaults(func=_compare)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
