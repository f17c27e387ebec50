"""Convergence and distributional diagnostics for simulator output."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import stats as _st

__all__ = [
    "SlopeFit",
    "KSResult",
    "mse_vs_target",
    "mse_with_stderr",
    "loglog_slope",
    "ks_statistic",
    "qq_points",
    "wasserstein1_1d",
    "KS_C01",
    "KS_MIN_SAMPLES",
]

# Asymptotic Kolmogorov critical constant at alpha = 0.01.
KS_C01 = 1.628
KS_MIN_SAMPLES = 20


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float
    # False when fewer than three points were fitted, so r_squared is trivially 1.
    r_squared_valid: bool = True


class KSResult(NamedTuple):
    stat: float
    critical_01: float
    passed: bool


def _as_samples(samples, what="samples"):
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{what} must be non-empty")
    return arr


def mse_vs_target(samples, target: float) -> float:
    """Mean of ``(sample - target)^2``."""
    arr = _as_samples(samples)
    return float(np.mean((arr - target) ** 2))


def mse_with_stderr(samples, target: float) -> tuple[float, float]:
    """MSE and its Monte Carlo standard error."""
    sq = (_as_samples(samples) - target) ** 2
    se = float(np.std(sq, ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else float("nan")
    return float(sq.mean()), se


def loglog_slope(xs, ys) -> SlopeFit:
    """Least-squares line through ``(log x, log y)``."""
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("xs and ys must have equal length")
    if x.size < 2:
        raise ValueError("need at least two points")
    if np.any(x <= 0) or np.any(y <= 0) or not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("loglog_slope needs finite positive values")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise ValueError("xs must not all be equal")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - float(np.sum(resid**2)) / ss_tot)
    return SlopeFit(float(slope), float(intercept), r2, x.size >= 3)


def _check_variance(arr, variance):
    if variance < 0 or not math.isfinite(variance):
        raise ValueError("variance must be finite and >= 0")
    if variance == 0:
        if np.any(arr != 0):
            raise ValueError("zero variance with nonzero samples")
        raise ValueError("variance must be > 0")


def ks_statistic(samples, variance: float) -> KSResult:
    """One-sample KS test against ``N(0, variance)`` with the alpha = 0.01 gate."""
    arr = _as_samples(samples)
    _check_variance(arr, variance)
    if arr.size < KS_MIN_SAMPLES:
        raise ValueError(f"ks_statistic needs at least {KS_MIN_SAMPLES} samples")
    stat = float(_st.kstest(arr, "norm", args=(0.0, math.sqrt(variance))).statistic)
    crit = KS_C01 / math.sqrt(arr.size)
    return KSResult(stat, crit, stat < crit)


def qq_points(samples, variance: float) -> np.ndarray:
    """``(theoretical, empirical)`` quantile pairs at plotting positions ``(i - 0.5)/R``."""
    arr = _as_samples(samples)
    _check_variance(arr, variance)
    R = arr.size
    probs = (np.arange(1, R + 1) - 0.5) / R
    theo = _st.norm.ppf(probs, scale=math.sqrt(variance))
    return np.column_stack([theo, np.sort(arr)])


def wasserstein1_1d(a, b) -> float:
    """Empirical W1 between two samples on the line.

    Equal sizes give the exact value, the mean absolute difference of the
    sorted samples. Otherwise the larger sample is resampled at the smaller
    one's plotting positions by linear interpolation of its quantiles.
    """
    a = np.sort(_as_samples(a, "a"))
    b = np.sort(_as_samples(b, "b"))
    if a.size != b.size:
        if a.size < b.size:
            a, b = b, a
        n = b.size
        probs = (np.arange(n) + 0.5) / n
        a = np.quantile(a, probs)
    return float(np.mean(np.abs(a - b)))
