"""Command-line front end: ``simulate --config <file> --out <dir>``.

Exit codes: 0 on success, 2 when the configuration fails validation,
1 on any runtime error.
"""

import argparse
import sys

from .bench import ConfigError, emit_report, parse_config_file, run_scenario, validate_config


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="simulate",
        description="Run a Monte-Carlo link simulation from a key=value config file.",
    )
    parser.add_argument("--config", required=True, help="path to the config file")
    parser.add_argument("--out", required=True, help="output directory for CSV + manifest")
    parser.add_argument("--seed", type=int, default=None, help="override master_seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads")
    parser.add_argument("--scenario", default=None, help="override the scenario")
    parser.add_argument(
        "--plot-script",
        action="store_true",
        help="also emit a matplotlib script next to the CSV",
    )
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config_file(args.config)
        if args.seed is not None:
            cfg.master_seed = args.seed
        if args.scenario is not None:
            cfg.scenario = args.scenario
        validate_config(cfg)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        report = run_scenario(cfg, threads=max(1, args.threads))
        paths = emit_report(report, args.out, plot_script=args.plot_script)
    except Exception as exc:  # surfaced with context, non-zero exit
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1

    for cell in report.cells:
        print(
            f"{cell.detector:>14s}  Eb/N0={cell.eb_n0_db:5.1f} dB  iter={cell.iteration}  "
            f"BER={cell.ber:.3e}  ({cell.errors}/{cell.bits} bits)"
        )
    print(f"wrote: {', '.join(paths)}  [{report.wall_time_s:.1f} s]")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
