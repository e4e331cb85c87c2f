"""Command-line entry point: ``isacsim {simulate,track,validate,params}``.

Exit codes: 0 success / validation pass, 1 validation fail, 2 usage error,
3 I/O or file-format error. Machine-readable output goes to stdout,
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from . import engine, pdpfile, tracking
from .metrics import rmsds_rows, validate_run, write_rmsds_csv
from .params import Direction, DirectionParams, ParamsParseError, ParamsValidationError, builtin_params, load_params

log = logging.getLogger("isacsim")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
PARAMS_DIR_ENV = "ISAC_PARAMS_DIR"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def preset(direction: str) -> DirectionParams:
    """Built-in preset, or ``$ISAC_PARAMS_DIR/<direction>.json`` when that variable is set."""
    root = os.environ.get(PARAMS_DIR_ENV)
    if root:
        return read_params_file(Path(root) / f"{direction}.json")
    return builtin_params(direction)


def read_params_file(path) -> DirectionParams:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read parameters {path}: {exc}", EXIT_IO) from None
    try:
        return load_params(text)
    except (ParamsParseError, ParamsValidationError) as exc:
        raise CliError(f"invalid parameters in {path}: {exc}", EXIT_USAGE) from None


def _resolve_params(args) -> DirectionParams:
    params = read_params_file(args.params) if args.params else preset(args.direction)
    if params.direction != Direction(args.direction):
        log.warning("parameter file direction %s differs from --direction %s", params.direction.value, args.direction)
    return params


def _sim_config(args, duration: float) -> engine.SimConfig:
    cfg = engine.SimConfig(
        direction=Direction(args.direction),
        duration=duration,
        snapshot_interval=args.interval,
        delay_bins=args.bins,
        seed=args.seed,
    )
    problems = cfg.problems()
    if problems:
        raise CliError("; ".join(problems), EXIT_USAGE)
    return cfg


def _tracking_config(args) -> tracking.TrackingConfig:
    try:
        return tracking.TrackingConfig(
            match_threshold=args.epsilon_m,
            filter_threshold=args.epsilon_f,
            handover_time=args.epsilon_ht,
            handover_delay=args.epsilon_hd,
            threshold_offset=args.threshold_db,
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def _write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None


def cmd_simulate(args) -> int:
    params = _resolve_params(args)
    cfg = _sim_config(args, args.duration)
    t0 = time.perf_counter()
    pdp, truth = engine.run(params, cfg)
    log.info("simulated %d snapshots in %.2f s", pdp.rows, time.perf_counter() - t0)
    try:
        pdpfile.write_pdp(args.out, pdp, args.format)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from None
    _write_text(f"{args.out}.truth.jsonl", truth.to_jsonl())
    return EXIT_OK


def cmd_track(args) -> int:
    try:
        pdp = pdpfile.read_pdp(args.input)
    except OSError as exc:
        raise CliError(f"cannot read {args.input}: {exc}", EXIT_IO) from None
    except pdpfile.PdpFormatError as exc:
        raise CliError(f"format error in {args.input}: {exc}", EXIT_IO) from None
    cfg = _tracking_config(args)
    tracks = tracking.track(pdp, cfg, noise_floor=args.noise_floor)
    text = tracking.tracks_to_jsonl(tracks)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    log.info("%d tracks", len(tracks))
    return EXIT_OK


def cmd_validate(args) -> int:
    params = _resolve_params(args)
    duration = args.snapshots * args.interval if args.snapshots else args.duration
    cfg = _sim_config(args, duration)
    pdp, truth = engine.run(params, cfg)
    tracks = tracking.track(pdp, _tracking_config(args)) if args.track else None
    report = validate_run(pdp, truth, params, cfg, tracks=tracks, rmsds_threshold=args.rmsds_threshold)
    text = report.to_json()
    if args.report:
        _write_text(args.report, text)
    else:
        sys.stdout.write(text)
    if args.rmsds_csv:
        write_rmsds_csv(args.rmsds_csv, rmsds_rows(pdp.values, args.rmsds_threshold, pdp.delay_resolution))
    for c in report.checks:
        flag = "PASS" if c.passed else ("FAIL" if c.enforced else "info")
        log.info("%-4s %-24s n=%-8d %s=%.5g tol=%.5g", flag, c.name, c.sample_size, c.distance_kind, c.distance,
                 c.tolerance)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_params(args) -> int:
    text = preset(args.direction).to_json()
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_sim_flags(p, duration_default: float = 1200.0) -> None:
    p.add_argument("--direction", required=True, choices=[d.value for d in Direction])
    p.add_argument("--duration", type=float, default=duration_default, help="simulated seconds")
    p.add_argument("--interval", type=float, default=0.01, help="snapshot interval in seconds")
    p.add_argument("--bins", type=int, default=600, help="delay bins (1 ns each)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", help="JSON parameter file overriding the preset")


def _add_tracking_flags(p) -> None:
    d = tracking.TrackingConfig()
    p.add_argument("--epsilon-m", type=float, default=d.match_threshold, help="MCD matching threshold")
    p.add_argument("--epsilon-f", type=int, default=d.filter_threshold, help="minimum track length in snapshots")
    p.add_argument("--epsilon-ht", type=int, default=d.handover_time, help="handover time gap in snapshots")
    p.add_argument("--epsilon-hd", type=float, default=d.handover_delay, help="handover delay gap in ns")
    p.add_argument("--threshold-db", type=float, default=d.threshold_offset, help="sensing threshold above floor")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="isacsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a PDP file and its ground truth")
    _add_sim_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("bin", "csv"), default="bin")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="extract S-MPC tracks from a PDP file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", help="JSON Lines output (default: stdout)")
    p.add_argument("--noise-floor", type=float, default=None, help="override the median noise floor (dB)")
    _add_tracking_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("validate", help="simulate, extract statistics and compare with the parameters")
    _add_sim_flags(p)
    p.add_argument("--snapshots", type=int, default=None, help="snapshot count (overrides --duration)")
    p.add_argument("--report", help="report JSON path (default: stdout)")
    p.add_argument("--rmsds-csv", help="also write per-snapshot RMS delay spread as CSV")
    p.add_argument("--rmsds-threshold", type=float, default=25.0, help="dB below peak kept for RMSDS")
    p.add_argument("--track", action="store_true", help="also run the tracker and report tracked statistics")
    _add_tracking_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("params", help="print a parameter preset as JSON")
    p.add_argument("--direction", required=True, choices=[d.value for d in Direction])
    p.add_argument("--out")
    p.set_defaults(func=cmd_params)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"isacsim: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
