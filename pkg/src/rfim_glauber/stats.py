"""Small statistical helpers: Wilson bounds, OLS with slope errors, batch means."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps


def wilson_upper(k, n, z: float = 3.0):
    """One-sided Wilson score upper bound for a binomial proportion."""
    k = np.asarray(k, dtype=float)
    n = float(n)
    p = k / n
    z2 = z * z
    centre = (p + z2 / (2 * n)) / (1 + z2 / n)
    half = z * np.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n)
    return np.minimum(1.0, centre + half)


def wilson_interval(k, n, z: float = 3.0):
    k = np.asarray(k, dtype=float)
    n = float(n)
    p = k / n
    z2 = z * z
    centre = (p + z2 / (2 * n)) / (1 + z2 / n)
    half = z * np.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n)
    return np.maximum(0.0, centre - half), np.minimum(1.0, centre + half)


@dataclass
class LineFit:
    slope: float
    intercept: float
    r2: float
    slope_se: float

    @property
    def c_hat(self) -> float:
        return -1.0 / self.slope if self.slope < 0 else float("inf")


def ols(x, y, y_se=None) -> LineFit:
    """Least squares line; slope_se from y_se if given, else from residuals."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        return LineFit(float("nan"), float("nan"), float("nan"), float("nan"))
    res = sps.linregress(x, y)
    xc = x - x.mean()
    sxx = float(np.sum(xc * xc))
    if y_se is not None:
        se = float(np.sqrt(np.sum((xc / sxx) ** 2 * np.asarray(y_se, float) ** 2)))
    else:
        se = float(res.stderr) if len(x) > 2 else float("nan")
    return LineFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2), se)


def mean_se(x):
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        return float(x.mean()) if n else float("nan"), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(n))


def batch_means_tau(series, dt: float, n_batches: int = 20):
    """Integrated autocorrelation time (in time units) by batch means.

    τ = Δt · b · Var(batch means) / (2 Var(series)), b the batch length in
    samples.  Returns nan for a constant series.
    """
    x = np.asarray(series, dtype=float)
    b = len(x) // n_batches
    if b < 1:
        raise ValueError("series shorter than the number of batches")
    x = x[: b * n_batches]
    var = x.var()
    if var <= 0:
        return float("nan")
    bm = x.reshape(n_batches, b).mean(axis=1)
    return float(dt * b * bm.var(ddof=1) / (2.0 * var))
