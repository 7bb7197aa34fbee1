"""Log-log exponent fits shared by the experiment modules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ExponentFit:
    """OLS fit of log y against log n, with the slope standard error."""

    n_grid: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    slope_se: float
    excluded: list = field(default_factory=list)  # grid points with y <= 0

    def predicted(self) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(self.n_grid, float) ** self.slope


def fit_exponent(n_grid, y) -> ExponentFit:
    """Unweighted least squares on logs; nonpositive y values are dropped
    (and reported) since they carry no log-log information."""
    n_grid = np.asarray(n_grid, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > 0
    excluded = n_grid[~keep].tolist()
    xs = np.log(n_grid[keep])
    ys = np.log(y[keep])
    m = len(xs)
    if m < 2:
        raise ValueError("need at least two positive points for a log-log fit")
    xbar = xs.mean()
    sxx = float(((xs - xbar) ** 2).sum())
    slope = float(((xs - xbar) * (ys - ys.mean())).sum() / sxx)
    intercept = float(ys.mean() - slope * xbar)
    resid = ys - (intercept + slope * xs)
    if m > 2:
        sigma2 = float((resid ** 2).sum() / (m - 2))
    else:
        sigma2 = 0.0
    slope_se = float(np.sqrt(sigma2 / sxx))
    return ExponentFit(n_grid=n_grid[keep], y=y[keep], slope=slope,
                       intercept=intercept, slope_se=slope_se,
                       excluded=excluded)
