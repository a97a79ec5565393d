"""Small least-squares helpers for the empirical decay and bound fits."""

from __future__ import annotations

import numpy as np

__all__ = ["loglog_fit", "proportional_fit"]


def loglog_fit(x, y):
    """Slope, intercept and the slope's standard error of log y vs log x."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    n = len(lx)
    if n > 2:
        s2 = float(resid @ resid) / (n - 2)
        sxx = float(np.sum((lx - lx.mean()) ** 2))
        stderr = np.sqrt(s2 / sxx) if sxx > 0 else float("inf")
    else:
        stderr = float("inf")
    return float(coef[0]), float(coef[1]), float(stderr)


def proportional_fit(x, y):
    """Best C for y ~ C x (through the origin) and the R^2 of that model."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    C = float(x @ y) / float(x @ x)
    resid = y - C * x
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return C, r2
