"""``nbgrowth`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import experiments as ex

log = logging.getLogger("nbgrowth")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--r", type=int, help="bouquet rank; degrees lie in 2..2r (default 2)")
    p.add_argument("--alpha", type=float, help="target growth rate in (1, 2r-1) (default 2.0)")
    p.add_argument("--dist", help="explicit degree law such as '2:0.6667,4:0.3333'")
    p.add_argument("--eps", type=float, help="success window for |lambda1 - alpha| (default 0.05)")
    p.add_argument("--n", type=float, nargs="+", help="graph size(s)")
    p.add_argument("--trials", type=int, help="trials per n (default 20)")
    p.add_argument("--seed", type=int, help="master seed (default 42)")
    p.add_argument("--delta0", type=float, help="tangle-free radius factor (default 0.2)")
    p.add_argument("--max-attempts", type=int, dest="max_attempts", help="rejection budget per trial")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--timing", action="store_true", default=None, help="record per-trial wallclock")
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--csv", help="CSV rows path")
    p.add_argument("--config", help="key=value or JSON file; its values override flags")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nbgrowth",
        description="Random graphs with prescribed non-backtracking growth, and the free subgroups they carry.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("density-search", help="how often a sampled graph lands within eps of alpha")
    _add_common(p)
    p.add_argument("--witness", help="write the best graph here (text edge list)")

    p = sub.add_parser("sweep-n", help="median |lambda1 - alpha| across a grid of n")
    _add_common(p)

    p = sub.add_parser("gw-validate", help="Galton-Watson mean law, martingale, tail and Q checks")
    _add_common(p)
    p.add_argument("--gw-runs", type=int, dest="gw_runs", help="trajectories (default 100000)")
    p.add_argument("--gw-t-max", type=int, dest="gw_t_max", help="generations (default 8)")
    p.add_argument("--q-ell-max", type=int, dest="q_ell_max", help="largest ell in the Q study (default 9)")
    p.add_argument("--q-runs", type=int, dest="q_runs", help="trees in the Q study (default 500)")
    p.add_argument("--control", action="store_true", default=None,
                   help="shuffle generations across runs; the martingale suite should then fail")

    p = sub.add_parser("emit-subgroup", help="free subgroup basis from a density-search witness")
    _add_common(p)
    p.add_argument("--witness", help="write the witness graph here")
    p.add_argument("--tolerance", type=float, help="allowed |rate - lambda1| (default 0.1)")
    p.add_argument("--depth", type=int, help="ball depth for the growth rate (default 18)")
    return parser


def config_from_args(args: argparse.Namespace) -> ex.ExperimentConfig:
    values = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose") and v is not None}
    if "n" in values:
        values["n"] = tuple(int(v) for v in values["n"])
    overrides = ex.load_config_file(args.config) if args.config else None
    return ex.make_config(args.command, overrides, **values)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        config = config_from_args(args)
    except (ex.ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return ex.EXIT_CONFIG
    result = ex.run(config)
    ex.write_outputs(config, result)
    if not config.out:
        sys.stdout.write(ex.render_report(result.report))
    log.info("exit code %d", result.exit_code)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
