"""Command line interface.

Exit codes: 0 success, 2 configuration error, 3 simulation budget exceeded or
oracle truncation excessive.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    build_test,
    design,
    kstar_search,
    load_config,
    simulate,
    table1,
    write_reports_csv,
)
from .oracle import TruncationExcessiveError, exact_characteristics, wald_bound_check
from .sampler import BudgetExceededError


def _open_out(path: str):
    if path == "-":
        return sys.stdout
    return open(path, "w")


def _cmd_design(args) -> int:
    print(design(load_config(args.config)))
    return 0


def _cmd_simulate(args) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.reps is not None:
        overrides["sim.reps"] = args.reps
    if args.seed is not None:
        overrides["sim.seed"] = args.seed
    if overrides:
        config = config.with_overrides(**overrides)
    report = simulate(config, workers=args.workers)
    out = _open_out(args.out)
    try:
        write_reports_csv([report], out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_table1(args) -> int:
    reports = table1(reps=args.reps, seed=args.seed, workers=args.workers)
    if args.out == "-":
        write_reports_csv(reports, sys.stdout)
    else:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "table1.csv", "w") as fh:
            write_reports_csv(reports, fh)
        print(f"wrote {out_dir / 'table1.csv'}")
    return 0


def _cmd_oracle(args) -> int:
    config = load_config(args.config)
    spec = build_test(config)
    for truth in (0, 1):
        res = exact_characteristics(spec, truth, max_obs=args.max_obs)
        print(
            f"truth={truth} EN={res.en:.6f} EM={res.em:.6f} err={res.err:.6e} "
            f"truncation={res.truncation_mass:.3e}"
        )
    ok = wald_bound_check(spec, spec.cost.d, max_obs=args.max_obs)
    print(f"error probabilities within d={spec.cost.d:.6e}: {'yes' if ok else 'NO'}")
    return 0


def _cmd_kstar(args) -> int:
    config = load_config(args.config)
    ks = range(args.kmin, args.kmax + 1, args.step)
    k_star, curve = kstar_search(config, ks, workers=args.workers)
    write_reports_csv(curve, sys.stdout)
    print(f"k_star={k_star}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqstage",
        description="Multistage sequential tests: design, simulation, and exact checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="print the deterministic design summary")
    p.add_argument("config")
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("simulate", help="Monte Carlo estimate of the configured test")
    p.add_argument("config")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="-")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("table1", help="reproduce the binomial comparison study")
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=20254)
    p.add_argument("--out", default="-")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_table1)

    p = sub.add_parser("oracle", help="exact characteristics on the Bernoulli lattice")
    p.add_argument("config")
    p.add_argument("--max-obs", type=int, default=200_000)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("kstar", help="exhaust the group stage size over a grid")
    p.add_argument("config")
    p.add_argument("--kmin", type=int, required=True)
    p.add_argument("--kmax", type=int, required=True)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_kstar)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (BudgetExceededError, TruncationExcessiveError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
