"""Log-log regression container shared by all scaling-exponent estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float
    n_points: int

    def summary(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "r2": self.r_squared,
            "n": self.n_points,
        }


def fit_loglog(x, y) -> ScalingFit:
    """Ordinary least squares of log y on log x with slope standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("need at least two matching points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    return fit_linear(np.log(x), np.log(y))


def fit_linear(lx, ly) -> ScalingFit:
    lx = np.asarray(lx, dtype=float)
    ly = np.asarray(ly, dtype=float)
    n = len(lx)
    A = np.vstack([lx, np.ones(n)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(res[0]) if len(res) else float(np.sum((ly - A @ coef) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    if n > 2 and ss_tot > 0:
        sxx = float(np.sum((lx - lx.mean()) ** 2))
        stderr = float(np.sqrt(ss_res / (n - 2) / sxx))
    else:
        stderr = 0.0
    return ScalingFit(slope, intercept, stderr, r2, n)
