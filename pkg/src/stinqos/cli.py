"""Simulate status-update delivery over satellite links and estimate QoS exponents.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from .config import load_config
from .errors import ConfigError, InsufficientDataError, SchemaError
from .metrics import DEFAULT_WINDOW, FitRecord, fit_tail_exponent, tail_thresholds, write_fits_csv
from .pipeline import AXES, default_out_dir, run, sweep
from .report import FIGURES, report

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _values(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stinqos", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate one scenario into a run directory")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="run directory (default: $STINQOS_OUT_DIR)")

    s = sub.add_parser("sweep", help="sweep one axis with replications")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", required=True, choices=sorted(AXES))
    s.add_argument("--values", required=True, type=_values, help="comma-separated list")
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--series-axis", default="", choices=[""] + sorted(AXES),
                   help="optional outer axis, one curve per value")
    s.add_argument("--series-values", type=_values, default=[])
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--no-trace", action="store_true", help="skip per-point trace/aoi CSVs")
    s.add_argument("--out", help="sweep directory (default: $STINQOS_OUT_DIR)")

    rep = sub.add_parser("report", help="derive plot data from a run or sweep directory")
    rep.add_argument("--in", dest="in_dir", required=True)
    rep.add_argument("--figure", required=True, choices=FIGURES)

    f = sub.add_parser("fit", help="fit a tail exponent to one CSV column")
    f.add_argument("--samples", required=True)
    f.add_argument("--column", required=True)
    f.add_argument("--scale", type=float, default=1.0,
                   help="divide samples by this first (e.g. the blocklength n)")
    f.add_argument("--points", type=int, default=200)
    f.add_argument("--window", type=float, nargs=2, default=DEFAULT_WINDOW,
                   metavar=("LO", "HI"))
    return p


def _read_column(path: str, column: str) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if column not in (reader.fieldnames or []):
            raise SchemaError(f"{path}: missing column {column!r}")
        vals = [row[column] for row in reader]
    return np.array([float(v) for v in vals if v not in ("", "nan")])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "run":
            cfg = load_config(args.config)
            out = default_out_dir(args.out)
            res = run(cfg, out)
            print(f"{out}: {res.summary['delivered']} delivered, "
                  f"mean delay {res.summary['mean_total_delay_cu']:.1f} cu")
        elif args.cmd == "sweep":
            cfg = load_config(args.config)
            out = default_out_dir(args.out)
            if args.series_axis and not args.series_values:
                raise ConfigError("--series-axis needs --series-values")
            rows, errors = sweep(cfg, args.axis, args.values, args.reps, out,
                                 args.series_axis, args.series_values, args.jobs,
                                 not args.no_trace)
            print(f"{out}: {len(rows)} rows, {len(errors)} point errors")
        elif args.cmd == "report":
            csv_path, svg_path = report(args.in_dir, args.figure)
            print(f"{csv_path}\n{svg_path}")
        elif args.cmd == "fit":
            x = _read_column(args.samples, args.column)
            try:
                est = fit_tail_exponent(x / args.scale, tail_thresholds(x / args.scale, args.points),
                                        tuple(args.window))
            except InsufficientDataError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_RUNTIME
            units = f"1/({args.column}/{args.scale:g})" if args.scale != 1 else f"1/{args.column}"
            write_fits_csv([FitRecord(args.column, units, est)], sys.stdout)
    except (ConfigError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
