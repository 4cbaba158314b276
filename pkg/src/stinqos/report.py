"""Plot-ready CSV and SVG files derived only from stored run/sweep CSVs.

Times are converted to seconds here, and only here (1 cu = 1e-6 s).
"""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .channel import SECONDS_PER_CU
from .errors import InsufficientDataError, SchemaError
from .metrics import empirical_tail, fit_peak_aoi_exponent, fmt, tail_thresholds

FIGURES = ("fig2", "fig4", "fig5")


def _read_csv(path: Path, required: tuple[str, ...]) -> list[dict[str, str]]:
    if not path.exists():
        raise SchemaError(f"missing input file {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        for c in required:
            if c not in cols:
                raise SchemaError(f"{path.name}: missing column {c!r}")
        return list(reader)


def _num(s: str) -> float:
    return float(s) if s not in ("", "nan") else math.nan


def _sort_key(v: str):
    try:
        return (0, float(v), "")
    except ValueError:
        return (1, 0.0, v)


def _aggregate(rows, x_col, y_col, series_col, y_scale=1.0):
    """Mean of y over replications per (series, x), ordered by series then x."""
    groups: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in rows:
        groups[(r[series_col] if series_col else "", r[x_col])].append(_num(r[y_col]))
    out = []
    for s, x in sorted(groups, key=lambda k: (_sort_key(k[0]), _sort_key(k[1]))):
        ys = [y for y in groups[(s, x)] if not math.isnan(y)]
        y = float(np.mean(ys)) * y_scale if ys else math.nan
        out.append((float(x), y, s))
    return out


def _fig2(in_dir: Path):
    rows = _read_csv(in_dir / "sweep.csv", ("n_hat", "L", "mean_total_delay_cu"))
    pts = _aggregate(rows, "n_hat", "mean_total_delay_cu", "L", SECONDS_PER_CU)
    return ("n_hat_cu", "mean_end_to_end_delay_s", "L"), pts, "blocklength n_hat (cu)", \
        "mean end-to-end delay (s)"


def _fig5(in_dir: Path):
    rows = _read_csv(in_dir / "sweep.csv", ("n_hat", "L", "theta_error"))
    pts = _aggregate(rows, "n_hat", "theta_error", "L")
    return ("n_hat_cu", "theta_error_nats_per_n_hat", "L"), pts, "blocklength n_hat (cu)", \
        "error-rate exponent (nats / n_hat)"


def _fig4(in_dir: Path):
    if (in_dir / "sweep.csv").exists():
        rows = _read_csv(in_dir / "sweep.csv", ("axis", "axis_value", "series_value",
                                                 "mean_peak_aoi_cu", "peak_aoi_violation"))
        axis = rows[0]["axis"] if rows else ""
        if axis == "gbs_count":
            pts = _aggregate(rows, "axis_value", "mean_peak_aoi_cu", "series_value", SECONDS_PER_CU)
            return ("gbs_count", "mean_peak_aoi_s", "series"), pts, "number of GBSs", \
                "mean peak AoI (s)"
        pts = _aggregate(rows, "axis_value", "peak_aoi_violation", "series_value")
        return (axis or "x", "peak_aoi_violation", "series"), pts, axis, \
            "peak-AoI violation probability"
    # single run: empirical violation curve against A_th / n
    aoi_rows = _read_csv(in_dir / "aoi.csv", ("time_cu", "age_cu", "is_peak"))
    summary = _read_summary(in_dir)
    n = int(summary["n"])
    peaks = np.array([float(r["age_cu"]) for r in aoi_rows if r["is_peak"] == "1"])
    if peaks.size == 0:
        return ("a_th_over_n", "peak_aoi_violation", "series"), [], "A_th / n", "violation"
    thr = tail_thresholds(peaks, 50)
    emp = empirical_tail(peaks, thr)
    pts = [(t / n, p, "empirical") for t, p in zip(thr, emp)]
    try:
        est = fit_peak_aoi_exponent(peaks, n, thr)
        pts += [(t / n, float(est.predict(t / n)), "fitted") for t in thr]
    except InsufficientDataError:
        pass
    return ("a_th_over_n", "peak_aoi_violation", "series"), pts, "A_th / n", \
        "peak-AoI violation probability"


def _read_summary(in_dir: Path) -> dict:
    path = in_dir / "summary.json"
    if not path.exists():
        raise SchemaError(f"missing input file {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if "n" not in data:
        raise SchemaError("summary.json: missing column 'n'")
    return data


def report(in_dir, figure: str) -> tuple[Path, Path]:
    """Write ``report/<figure>.csv`` and ``report/<figure>.svg`` under ``in_dir``."""
    if figure not in FIGURES:
        raise SchemaError(f"unknown figure {figure!r}; choose from {FIGURES}")
    in_dir = Path(in_dir)
    header, pts, xlabel, ylabel = {"fig2": _fig2, "fig4": _fig4, "fig5": _fig5}[figure](in_dir)
    out = in_dir / "report"
    out.mkdir(exist_ok=True)
    csv_path = out / f"{figure}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, y, s in pts:
            w.writerow([fmt(x), fmt(y), s])
    svg_path = out / f"{figure}.svg"
    _plot(pts, header[2], xlabel, ylabel, svg_path)
    return csv_path, svg_path


def _plot(pts, series_name, xlabel, ylabel, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "stinqos", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        series: dict[str, list] = defaultdict(list)
        for x, y, s in pts:
            series[s].append((x, y))
        for s, xy in series.items():
            xs, ys = zip(*xy)
            ax.plot(xs, ys, marker="o", label=f"{series_name}={s}" if s else None)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if any(s for s in series):
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
