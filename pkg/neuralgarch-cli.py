#!/usr/bin/env python3
"""
neuralgarch - volatility model fitting, forecasting and comparison

Config-driven runs of GARCH, EGARCH, diagonal BEKK and their neural
time-varying-coefficient counterparts.
"""
from sys import exit as sys_exit

from os import makedirs as os_makedirs
from os.path import join as os_join

from glob import glob as glob_glob
from argparse import ArgumentParser as argparse_ArgumentParser

from logger import HtmlLogArchive, Logger
from runner.commands import SIMULATED_PROCESSES, cmd_rank, cmd_simulate
from runner.config import load_config
from runner.jobs import Job, expand_seeds, run_jobs
from volatility.errors import ConfigError, VolatilityError

HTML_LOG_FILE = "run-log.html"


def add_verbose_argument(parser):
    parser.add_argument(
        "--verbose",
        type=int,
        choices=[0, 1, 2],
        default=None,
        help="""Verbosity level: 0=(success, warnings and errors only)
        1=(information, success, warnings, errors messages)
        2=(debug, information, success, warnings, errors messages)
        (default: run.log_level from the config, else 1)""",
    )


def add_run_arguments(parser):
    parser.add_argument(
        "--config",
        type=str,
        action="append",
        required=True,
        help="YAML run configuration. Can be given several times to run a grid.",
    )
    parser.add_argument(
        "--set",
        type=str,
        action="append",
        default=[],
        metavar="KEY.PATH=VALUE",
        help="Override a config key, e.g. --set model.epochs=50 --set run.seed=7",
    )
    parser.add_argument(
        "--seeds",
        type=int,
        nargs="+",
        help="Run every config once per seed (replaces run.seed)",
    )
    parser.add_argument(
        "--jobs",
        type=int,
        default=1,
        help="Number of worker processes for independent runs (default: 1)",
    )
    add_verbose_argument(parser)


def parse_arguments(argv=None):
    parser = argparse_ArgumentParser(
        description="Fit, forecast and compare (neural) GARCH volatility models",
        prog="neuralgarch",
    )
    parser.add_argument("--version", action="version", version="neuralgarch 1.0.0")
    subparsers = parser.add_subparsers(dest="command", required=True)

    add_run_arguments(subparsers.add_parser("fit", help="Fit models and write artifacts"))
    add_run_arguments(subparsers.add_parser("predict", help="One-step-ahead forecasts on the test split"))
    add_run_arguments(subparsers.add_parser("run", help="fit followed by predict"))

    rank = subparsers.add_parser("rank", help="Friedman/Wilcoxon ranking and CD diagram")
    rank.add_argument(
        "--results",
        type=str,
        nargs="+",
        required=True,
        help="results.csv files or glob patterns (** allowed)",
    )
    rank.add_argument("--output-dir", type=str, required=True, help="Where to write the report")
    rank.add_argument("--alpha", type=float, default=0.05, help="Significance level (default: 0.05)")
    rank.add_argument(
        "--no-correction",
        action="store_true",
        help="Skip the Holm correction of the pairwise Wilcoxon p-values",
    )
    add_verbose_argument(rank)

    simulate = subparsers.add_parser("simulate", help="Write synthetic price files and a starter config")
    simulate.add_argument("--process", choices=SIMULATED_PROCESSES, default="garch")
    simulate.add_argument("--n-obs", type=int, default=2000, help="Number of returns (default: 2000)")
    simulate.add_argument("--n-assets", type=int, default=1, help="Assets for the bekk process")
    simulate.add_argument("--innovation", choices=["normal", "student_t"], default="normal")
    simulate.add_argument("--seed", type=int, required=True)
    simulate.add_argument("--output-dir", type=str, required=True)
    add_verbose_argument(simulate)

    return parser.parse_args(argv)


def get_log_level_name(verbose_level) -> str:
    """Convert verbose level to log level name."""
    level_mapping = {0: "SUCCESS", 1: "INFO", 2: "DEBUG"}
    return level_mapping.get(verbose_level, "INFO")


def resolve_results(patterns) -> list:
    paths = []
    for pattern in patterns:
        matches = sorted(glob_glob(pattern, recursive=True))
        if not matches:
            raise ConfigError(f"No results file matches '{pattern}'")
        paths.extend(m for m in matches if m not in paths)
    return paths


def run_configured(args, log_level) -> int:
    configs = [load_config(path, args.set) for path in args.config]
    if args.verbose is None:
        log_level = configs[0].run.log_level
        Logger.set_global_level(log_level)
    configs = expand_seeds(configs, args.seeds)
    logger = Logger(log_level, "neuralgarch")

    archive = None
    if configs[0].run.html_log:
        os_makedirs(configs[0].run.output_dir, exist_ok=True)
        archive = HtmlLogArchive(os_join(configs[0].run.output_dir, HTML_LOG_FILE))
        Logger.attach_handler(archive)
    try:
        outcomes = run_jobs([Job(args.command, c) for c in configs], args.jobs, log_level)
    finally:
        if archive is not None:
            Logger.detach_handler(archive)

    failed = [o for o in outcomes if not o.ok]
    for outcome in outcomes:
        if outcome.test_ll is not None:
            logger.info(f"{outcome.label}: test LL {outcome.test_ll:.3f}")
    if failed:
        logger.error(f"❌ {len(failed)} of {len(outcomes)} runs failed")
        return max(o.exit_code for o in failed)
    logger.success(f"🎉 {len(outcomes)} run(s) completed")
    return 0


def main(argv=None):
    try:
        args = parse_arguments(argv)
        log_level = get_log_level_name(args.verbose if args.verbose is not None else 1)
        logger = Logger(log_level, "neuralgarch")
        logger.debug(f"Arguments: {vars(args)}")

        if args.command in ("fit", "predict", "run"):
            sys_exit(run_configured(args, log_level))

        if args.command == "rank":
            cmd_rank(
                resolve_results(args.results),
                args.output_dir,
                alpha=args.alpha,
                correct=not args.no_correction,
                log_level=log_level,
            )
        elif args.command == "simulate":
            cmd_simulate(
                args.process,
                args.n_obs,
                args.output_dir,
                args.seed,
                n_assets=args.n_assets,
                innovation=args.innovation,
                log_level=log_level,
            )
        sys_exit(0)

    except KeyboardInterrupt:
        print("\n❌ Operation cancelled by user")
        sys_exit(1)
    except VolatilityError as e:
        Logger("ERROR", "neuralgarch").error(f"❌ {e}")
        sys_exit(e.exit_code)
    except FileNotFoundError as e:
        Logger("ERROR", "neuralgarch").error(f"❌ File not found: {e.filename}")
        sys_exit(ConfigError.exit_code)
    except Exception as e:
        Logger("ERROR", "neuralgarch").error(f"❌ Error: {e}")
        sys_exit(1)


if __name__ == "__main__":
    main()
