"""Empirical tails, log-linear QoS exponent fits, violation probabilities, Mellin transforms.

Exceedance is strict (``>``) everywhere.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, TextIO, Union

import numpy as np

from .errors import DomainError, InsufficientDataError

DEFAULT_WINDOW = (1e-4, 1e-1)
MIN_FIT_POINTS = 4


def empirical_tail(samples, thresholds) -> np.ndarray:
    """Fraction of samples strictly above each threshold."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise DomainError("empirical tail of an empty sample")
    t = np.asarray(thresholds, dtype=float)
    return (x.size - np.searchsorted(x, t, side="right")) / x.size


def tail_thresholds(samples, count: int = 200) -> np.ndarray:
    """Evenly spaced thresholds from the sample minimum up to its maximum."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise DomainError("no samples")
    return np.linspace(x.min(), x.max(), count)


@dataclass(frozen=True)
class QosExponentEstimate:
    theta: float
    fit_window: tuple[float, float]
    r_squared: float
    std_error: float
    n_samples: int
    intercept: float = 0.0

    @property
    def valid(self) -> bool:
        return self.theta > 0 and math.isfinite(self.theta)

    def predict(self, threshold) -> np.ndarray:
        """Fitted tail probability exp(intercept - theta * threshold)."""
        return np.exp(self.intercept - self.theta * np.asarray(threshold, dtype=float))


WindowRule = Union[tuple[float, float], Callable[[np.ndarray, np.ndarray], np.ndarray]]


def _window_mask(thresholds, probs, rule: WindowRule) -> np.ndarray:
    if callable(rule):
        return np.asarray(rule(thresholds, probs), dtype=bool)
    lo, hi = rule
    return (probs >= lo) & (probs <= hi)


def fit_qos_exponent(thresholds, probs, window_rule: WindowRule = DEFAULT_WINDOW,
                     n_samples: int = 0) -> QosExponentEstimate:
    """Least-squares fit of ln(prob) = intercept - theta * threshold.

    Only points selected by ``window_rule`` with positive probability are
    used. The default rule keeps probabilities in [1e-4, 1e-1]; a callable
    rule receives ``(thresholds, probs)`` and returns a boolean mask.

    With ``n_samples`` given, ``std_error`` accounts for the correlation
    between exceedance points drawn from one sample; otherwise it is the
    plain OLS slope error.
    """
    t = np.asarray(thresholds, dtype=float)
    p = np.asarray(probs, dtype=float)
    mask = _window_mask(t, p, window_rule) & (p > 0)
    usable = int(mask.sum())
    if usable < MIN_FIT_POINTS:
        raise InsufficientDataError(usable, MIN_FIT_POINTS)
    x, y = t[mask], np.log(p[mask])
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        raise InsufficientDataError(1, MIN_FIT_POINTS)
    slope = float(np.sum((x - xm) * (y - ym))) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    if n_samples > 0:
        # exceedance counts share samples, so points are correlated:
        # Cov(ln p_i, ln p_j) = (1 - p_max) / (N p_max)
        pm = np.maximum.outer(p[mask], p[mask])
        w = (x - xm) / sxx
        std_error = math.sqrt(max(0.0, float(w @ ((1.0 - pm) / (n_samples * pm)) @ w)))
    else:
        std_error = math.sqrt(ss_res / (usable - 2) / sxx)
    return QosExponentEstimate(-slope, (float(x.min()), float(x.max())), r2, std_error,
                               n_samples or usable, intercept)


def fit_tail_exponent(samples, thresholds=None, window_rule: WindowRule = DEFAULT_WINDOW,
                      scale: float = 1.0) -> QosExponentEstimate:
    """Tail exponent of ``samples / scale`` from its empirical exceedance curve."""
    x = np.asarray(samples, dtype=float) / scale
    if thresholds is None:
        thresholds = tail_thresholds(x)
    else:
        thresholds = np.asarray(thresholds, dtype=float) / scale
    return fit_qos_exponent(thresholds, empirical_tail(x, thresholds), window_rule, x.size)


def delay_violation(totals, d_th: float) -> float:
    """Pr{delay > d_th}."""
    return float(empirical_tail(totals, [d_th])[0])


def queue_length_violation(lengths, q_th: float) -> float:
    """Pr{queue length > q_th}."""
    return float(empirical_tail(lengths, [q_th])[0])


def peak_aoi_violation(peaks, a_th: float, n: int) -> float:
    """Pr{peak / n > a_th / n} with peaks and threshold in channel uses."""
    if n < 1:
        raise DomainError(f"blocklength must be >= 1, got {n}")
    x = np.asarray(peaks, dtype=float)
    if x.size == 0:
        raise DomainError("no peak-AoI samples")
    return float(np.count_nonzero(x / n > a_th / n)) / x.size


def fit_peak_aoi_exponent(peaks, n: int, thresholds_cu=None,
                          window_rule: WindowRule = DEFAULT_WINDOW) -> QosExponentEstimate:
    """Peak-AoI exponent against the blocklength-normalized threshold A_th / n."""
    return fit_tail_exponent(peaks, thresholds_cu, window_rule, scale=float(n))


def mellin(samples, s: float) -> float:
    """Empirical Mellin transform E[X^(s-1)] of a positive sample."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise DomainError("Mellin transform of an empty sample")
    if np.any(x <= 0):
        raise DomainError("Mellin transform needs strictly positive samples")
    if s == 1:
        return 1.0
    return float(np.mean(x ** (s - 1.0)))


def mean_ci(samples, z: float = 1.959964) -> tuple[float, float, float]:
    """Sample mean with a normal-approximation confidence interval."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        return math.nan, math.nan, math.nan
    m = float(x.mean())
    half = z * float(x.std(ddof=1)) / math.sqrt(x.size) if x.size > 1 else 0.0
    return m, m - half, m + half


FIT_COLUMNS = ("metric", "theta", "theta_units", "window_lo", "window_hi", "r2", "stderr",
               "n_samples")


@dataclass(frozen=True)
class FitRecord:
    """One fits.csv row: a fitted estimate, a failed fit (None), or an analytic ``theta``."""

    metric: str
    theta_units: str
    estimate: QosExponentEstimate | None
    n_samples: int = 0
    theta: float | None = None


def write_fits_csv(records: Iterable[FitRecord], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FIT_COLUMNS)
    for r in records:
        e = r.estimate
        if e is None:
            theta = fmt(r.theta) if r.theta is not None else "nan"
            w.writerow([r.metric, theta, r.theta_units, "nan", "nan", "nan", "nan", r.n_samples])
        else:
            w.writerow([r.metric, fmt(e.theta), r.theta_units, fmt(e.fit_window[0]),
                        fmt(e.fit_window[1]), fmt(e.r_squared), fmt(e.std_error), e.n_samples])


def fmt(x: float) -> str:
    """Locale-independent float formatting that round-trips."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)
