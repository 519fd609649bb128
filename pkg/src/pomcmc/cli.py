"""Command-line interface: ``pomcmc {scores,gen,exact,mcmc,aggregate,bench}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, PomcmcError
from .reports import ExperimentConfig, run_experiment

EXIT_IO = 4


def _bucket_size(text: str):
    if text == "auto":
        return "auto"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {text!r}") from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", help="comma- or tab-separated categorical data file")
    common.add_argument("--no-header", dest="has_header", action="store_false", help="data file has no header row")
    common.add_argument("--missing", default="?", help="missing-value token to reject (default: ?)")
    common.add_argument("--drop-columns", type=_int_list, default=(), help="0-based columns to ignore")
    common.add_argument("--network", help="network description (JSON) to sample data from")
    common.add_argument("--rows", type=int, help="rows to sample from --network")
    common.add_argument("--data-seed", type=int, default=0, help="seed for --network sampling and --subsample")
    common.add_argument("--subsample", type=int, help="use a uniform random subset of this many rows")
    common.add_argument("--scores", help="precomputed score cache file")
    common.add_argument("--max-indegree", "-k", dest="k", type=int, default=3)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1, help="worker processes for independent chains")
    common.add_argument("--exact-cap", type=int, default=24, help="largest n accepted by exact mode")
    common.add_argument("-v", "--verbose", action="store_true")

    mcmc = argparse.ArgumentParser(add_help=False)
    mcmc.add_argument("--bucket-size", "-b", dest="b", type=_bucket_size, default=None,
                      help="bucket size or 'auto' (default: auto)")
    mcmc.add_argument("--parts", "-r", dest="r", type=int, default=None)
    mcmc.add_argument("--iters", type=int, help="total iterations per chain")
    mcmc.add_argument("--burnin", dest="burn_in", type=int)
    mcmc.add_argument("--thin", dest="thinning", type=int)
    mcmc.add_argument("--samples", type=int)
    mcmc.add_argument("--chains", type=int, default=1)
    mcmc.add_argument("--compare-exact", action="store_true", help="also compute exact posteriors and errors")
    mcmc.add_argument("--exact", dest="exact_reference", help="exact arc matrix CSV to compare against")

    parser = argparse.ArgumentParser(prog="pomcmc", description=__doc__)
    sub = parser.add_subparsers(dest="mode", required=True)
    sub.add_parser("scores", parents=[common], help="build and cache local scores")
    sub.add_parser("gen", parents=[common], help="sample a dataset from a network")
    sub.add_parser("exact", parents=[common], help="exact arc posteriors")
    sub.add_parser("mcmc", parents=[common, mcmc], help="partial order MCMC")
    agg = sub.add_parser("aggregate", parents=[common], help="pool chain estimates found in --out")
    agg.add_argument("--exact", dest="exact_reference", help="exact arc matrix CSV to compare against")
    bench = sub.add_parser("bench", parents=[common], help="time MCMC iterations per bucket size")
    bench.add_argument("--bucket-size", "-b", dest="bench_b", type=_int_list, default=(),
                       help="comma-separated bucket sizes")
    bench.add_argument("--iters", dest="bench_iters", type=int, default=20)
    bench.add_argument("--synthetic-nodes", type=int, help="time on random scores with this many nodes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    fields = {k: v for k, v in vars(args).items() if k != "verbose"}
    try:
        return run_experiment(ExperimentConfig(**fields))
    except (PomcmcError, ValueError) as exc:
        code = exc.exit_code if isinstance(exc, PomcmcError) else ConfigError.exit_code
        print(f"pomcmc: error: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"pomcmc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
