"""Run and sweep orchestration: simulate, build the AoI process, fit tails, write CSVs."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import config as cfgmod
from .channel import place_gbs
from .config import ScenarioConfig
from .errors import ConfigError, InsufficientDataError
from .fbc import error_exponent
from .metrics import (FitRecord, delay_violation, fit_peak_aoi_exponent, fit_tail_exponent,
                      fmt, mean_ci, mellin, peak_aoi_violation, tail_thresholds, write_fits_csv)
from .sim import AoiTrajectory, SimTrace, aoi_trajectory, select_path, simulate, write_trace_csv

log = logging.getLogger(__name__)

OUT_DIR_ENV = "STINQOS_OUT_DIR"

SUMMARY_KEYS = (
    "mode", "variant", "seed", "k", "n_hat", "L", "n", "gbs_count", "tx_power_dbm",
    "aoi_threshold_cu", "delay_threshold_cu",
    "updates", "delivered", "dropped", "drop_rate", "mean_rounds",
    "mean_total_delay_cu", "total_delay_ci_lo", "total_delay_ci_hi",
    "mean_queuing_cu", "mean_transmission_cu", "mean_processing_cu", "mean_propagation_cu",
    "mean_peak_aoi_cu", "peak_aoi_ci_lo", "peak_aoi_ci_hi", "time_average_aoi_cu",
    "peak_aoi_violation", "delay_violation",
    "theta_delay", "theta_queue", "theta_aoi", "theta_error", "theta_error_codeword",
    "mellin_s", "mellin_service",
)


@dataclass
class RunResult:
    config: ScenarioConfig
    trace: SimTrace
    aoi: AoiTrajectory
    fits: list[FitRecord]
    summary: dict[str, Any]


def _try_fit(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except InsufficientDataError:
        return None


def first_hop_state(config: ScenarioConfig):
    """Mean (unit fading gain, interference-free) state of the path's first hop."""
    topo = config.topology
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(3)[0])
    topology = place_gbs(topo.gbs_count, topo.inner_radius_km, topo.outer_radius_km, rng,
                         topo.altitude_km)
    return select_path(topology, config.mode, config.radio)[0].mean_state()


def analyze(config: ScenarioConfig, trace: SimTrace) -> RunResult:
    """Everything derived from one trace: AoI process, fits and the summary row."""
    aoi = aoi_trajectory(trace)
    m = config.metrics
    coding = config.coding
    n = coding.blocklength
    totals = trace.total_delays()
    delays = [d.delay for d in trace.deliveries]

    fits: list[FitRecord] = []
    theta_delay = theta_queue = theta_aoi = None
    if totals.size:
        theta_delay = _try_fit(fit_tail_exponent, totals, tail_thresholds(totals, m.tail_points),
                               m.window)
    fits.append(FitRecord("delay", "1/cu", theta_delay, int(totals.size)))
    if trace.queue_lengths.size:
        q = trace.queue_lengths
        theta_queue = _try_fit(fit_tail_exponent, q, np.arange(0, int(q.max()) + 1), m.window)
    fits.append(FitRecord("queue_length", "1/update", theta_queue, int(trace.queue_lengths.size)))
    if aoi.peaks.size:
        theta_aoi = _try_fit(fit_peak_aoi_exponent, aoi.peaks, n,
                             tail_thresholds(aoi.peaks, m.tail_points), m.window)
    fits.append(FitRecord("peak_aoi", "1/(cu/n)", theta_aoi, int(aoi.peaks.size)))

    state = first_hop_state(config)
    th_err = error_exponent(coding.sub_blocklength, coding.payload_bits, state,
                            coding.max_rounds, "sub_block")
    th_err_n = error_exponent(coding.sub_blocklength, coding.payload_bits, state,
                              coding.max_rounds, "codeword")
    fits.append(FitRecord("error", "nats/n_hat", None, 0, th_err))
    fits.append(FitRecord("error_codeword", "nats/n", None, 0, th_err_n))

    mean_d, d_lo, d_hi = mean_ci(totals)
    mean_p, p_lo, p_hi = mean_ci(aoi.peaks)
    served = trace.service_times
    summary = {
        "mode": config.mode,
        "variant": config.harq.variant,
        "seed": config.seed,
        "k": coding.payload_bits,
        "n_hat": coding.sub_blocklength,
        "L": coding.max_rounds,
        "n": n,
        "gbs_count": config.topology.gbs_count,
        "tx_power_dbm": config.radio.satellite_direct.tx_power_dbm,
        "aoi_threshold_cu": m.aoi_threshold_cu,
        "delay_threshold_cu": m.delay_threshold_cu,
        "updates": trace.updates_served,
        "delivered": len(trace.deliveries),
        "dropped": len(trace.dropped),
        "drop_rate": trace.drop_rate,
        "mean_rounds": (float(np.mean([d.rounds for d in trace.deliveries]))
                        if trace.deliveries else math.nan),
        "mean_total_delay_cu": mean_d,
        "total_delay_ci_lo": d_lo,
        "total_delay_ci_hi": d_hi,
        "mean_queuing_cu": _mean([d.queuing for d in delays]),
        "mean_transmission_cu": _mean([d.transmission for d in delays]),
        "mean_processing_cu": _mean([d.processing for d in delays]),
        "mean_propagation_cu": _mean([d.propagation for d in delays]),
        "mean_peak_aoi_cu": mean_p,
        "peak_aoi_ci_lo": p_lo,
        "peak_aoi_ci_hi": p_hi,
        "time_average_aoi_cu": aoi.time_average(),
        "peak_aoi_violation": (peak_aoi_violation(aoi.peaks, m.aoi_threshold_cu, n)
                               if aoi.peaks.size else math.nan),
        "delay_violation": delay_violation(totals, m.delay_threshold_cu) if totals.size else math.nan,
        "theta_delay": _theta(theta_delay),
        "theta_queue": _theta(theta_queue),
        "theta_aoi": _theta(theta_aoi),
        "theta_error": th_err,
        "theta_error_codeword": th_err_n,
        "mellin_s": m.mellin_s,
        "mellin_service": mellin(served, m.mellin_s) if served.size else math.nan,
    }
    return RunResult(config, trace, aoi, fits, summary)


def _mean(xs) -> float:
    return float(np.mean(xs)) if len(xs) else math.nan


def _theta(est) -> float:
    return est.theta if est is not None else math.nan


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, np.generic):
        return v.item()
    return v


def write_run_dir(result: RunResult, out_dir, write_trace: bool = True) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        existing = [p.name for p in out.iterdir()]
        if existing:
            raise FileExistsError(f"run directory {out} is not empty")
        with open(out / "config.toml", "w", encoding="utf-8", newline="") as fh:
            fh.write(cfgmod.dumps(result.config))
        with open(out / "run.log", "w", encoding="utf-8", newline="") as fh:
            for w in result.config.warnings:
                fh.write(f"WARNING {w}\n")
            for line in cfgmod.dumps(result.config).splitlines():
                fh.write(f"config {line}\n")
            fh.write(f"done updates={result.trace.updates_served} "
                     f"delivered={len(result.trace.deliveries)}\n")
        if write_trace:
            with open(out / "trace.csv", "w", encoding="utf-8", newline="") as fh:
                write_trace_csv(result.trace, fh, result.aoi)
            with open(out / "aoi.csv", "w", encoding="utf-8", newline="") as fh:
                write_aoi_csv(result.aoi, fh)
        with open(out / "fits.csv", "w", encoding="utf-8", newline="") as fh:
            write_fits_csv(result.fits, fh)
        with open(out / "summary.json", "w", encoding="utf-8", newline="") as fh:
            json.dump({k: _json_safe(result.summary[k]) for k in SUMMARY_KEYS}, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"writing run directory {out}: {exc}") from exc
    return out


def write_aoi_csv(aoi: AoiTrajectory, fh) -> None:
    """Sawtooth breakpoints; ``is_peak`` marks the pre-reset point of every delivery after the first."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("time_cu", "age_cu", "is_peak"))
    bp = aoi.breakpoints
    # pre-reset points sit at rows 1, 3, 5, ...; the first of them is not a peak
    peak_rows = set(range(3, 2 * len(aoi.peaks) + 3, 2))
    for i, (t, a) in enumerate(bp.tolist()):
        w.writerow((t, a, 1 if i in peak_rows else 0))


def run(config: ScenarioConfig, out_dir=None, write_trace: bool = True) -> RunResult:
    """Simulate one scenario and, when ``out_dir`` is given, write its run directory."""
    result = analyze(config, simulate(config))
    if out_dir is not None:
        write_run_dir(result, out_dir, write_trace)
    return result


AXES = {
    "blocklength": "coding.n_hat",
    "rounds": "coding.L",
    "gbs_count": "topology.gbs_count",
    "tx_power": ("radio.satellite_direct.tx_power_dbm", "radio.satellite_to_gbs.tx_power_dbm"),
    "aoi_threshold": "metrics.aoi_threshold_cu",
    "mode": "mode",
    "variant": "harq.variant",
}


def apply_axis(config: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    """Config with one sweep axis set.

    ``blocklength`` sets n_hat with L held, so n = L * n_hat follows; when
    ``coding.rate`` is configured, k is rescaled to rate * n_hat.
    """
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(AXES)}")
    keys = AXES[axis]
    keys = keys if isinstance(keys, tuple) else (keys,)
    over: dict[str, Any] = {}
    for key in keys:
        typ, _ = cfgmod.SCHEMA[key]
        over[key] = _cast(typ, value, axis)
    if axis == "blocklength" and config.flat.get("coding.rate") is not None:
        over["coding.k"] = config.flat["coding.rate"] * over["coding.n_hat"]
    return config.with_values(**over)


def _cast(typ, value, axis):
    if typ is str:
        return str(value)
    try:
        x = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"axis {axis}: bad value {value!r}") from exc
    if typ is int:
        if not x.is_integer():
            raise ConfigError(f"axis {axis}: value {value!r} is not an integer")
        return int(x)
    return x


def replication_seed(base_seed: int, replication: int) -> int:
    """Independent, reproducible 64-bit seed for one replication."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(replication,))
    return int(ss.generate_state(1, np.uint64)[0])


SWEEP_PREFIX = ("axis", "axis_value", "series_axis", "series_value", "replication")


@dataclass(frozen=True)
class _Point:
    axis: str
    value: Any
    series_axis: str
    series_value: Any
    replication: int
    out_dir: Optional[str]
    write_trace: bool


def _run_point(base: ScenarioConfig, p: _Point):
    try:
        cfg = apply_axis(base, p.axis, p.value)
        if p.series_axis:
            cfg = apply_axis(cfg, p.series_axis, p.series_value)
        cfg = cfg.with_values(seed=replication_seed(base.seed, p.replication))
        result = run(cfg, p.out_dir, p.write_trace)
    except ConfigError as exc:
        return p, None, str(exc)
    return p, result.summary, None


def _ordered(values) -> list:
    try:
        return sorted(values, key=float)
    except (TypeError, ValueError):
        return list(values)


def _label(v) -> str:
    return str(v).replace("/", "_").replace(" ", "")


def sweep(base: ScenarioConfig, axis: str, values: Sequence, replications: int = 1,
          out_dir=None, series_axis: str = "", series_values: Sequence = (),
          jobs: int = 1, write_trace: bool = True):
    """Run every (series value, axis value, replication) point.

    Replication ``r`` uses the same derived seed at every point, so points
    are compared under common random numbers. Points whose values violate a
    config invariant are recorded as errors and skipped. Returns
    ``(rows, errors)``; rows are ordered by series value, axis value, then
    replication, with numeric values in ascending order.
    """
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(AXES)}")
    if series_axis and series_axis not in AXES:
        raise ConfigError(f"unknown series axis {series_axis!r}")
    if replications < 1:
        raise ConfigError("replications must be >= 1")
    values = _ordered(values)
    series = _ordered(series_values) if series_axis else [""]
    out = Path(out_dir) if out_dir is not None else None
    points = []
    for sv in series:
        for v in values:
            for r in range(replications):
                pdir = None
                if out is not None:
                    name = f"{axis}={_label(v)}"
                    if series_axis:
                        name = f"{series_axis}={_label(sv)}__{name}"
                    pdir = str(out / "points" / name / f"rep{r}")
                points.append(_Point(axis, v, series_axis, sv, r, pdir, write_trace))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_point, [base] * len(points), points))
    else:
        results = [_run_point(base, p) for p in points]

    rows, errors = [], []
    for p, summary, err in results:
        prefix = {"axis": p.axis, "axis_value": p.value, "series_axis": p.series_axis,
                  "series_value": p.series_value, "replication": p.replication}
        if err is not None:
            errors.append({**prefix, "error": err})
            log.warning("sweep point %s=%s failed: %s", p.axis, p.value, err)
        else:
            rows.append({**prefix, **summary})
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
            write_sweep_csv(rows, fh)
        with open(out / "errors.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_PREFIX + ("error",))
            for e in errors:
                w.writerow([_cell(e[k]) for k in SWEEP_PREFIX] + [e["error"]])
    return rows, errors


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return str(v)


SWEEP_COLUMNS = SWEEP_PREFIX + SUMMARY_KEYS


def write_sweep_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([_cell(row[k]) for k in SWEEP_COLUMNS])


def default_out_dir(given: Optional[str]) -> Path:
    if given:
        return Path(given)
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env)
    raise ConfigError(f"no output directory: pass --out or set {OUT_DIR_ENV}")
