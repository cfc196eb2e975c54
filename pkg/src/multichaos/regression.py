"""Ordinary least-squares line fits used by the scaling estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class SlopeFit:
    """Fitted line ``y = slope * x + intercept`` with regression diagnostics.

    ``flag`` is ``"degenerate"`` when all ordinates coincide (slope set to 0).
    """

    slope: float
    stderr: float
    intercept: float
    x: np.ndarray
    y: np.ndarray
    residual_rms: float
    n_excluded: int = 0
    flag: str | None = None


def fit_line(x, y, n_excluded: int = 0) -> SlopeFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if x.size < 2:
        raise ValueError("need at least two points for a line fit")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("regression data must be finite")
    scale = float(np.max(np.abs(y)))
    if np.ptp(y) <= DEGENERATE_RTOL * scale:
        return SlopeFit(0.0, 0.0, float(np.mean(y)), x, y, 0.0, n_excluded, "degenerate")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise ValueError("abscissae must not all coincide")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    ssr = float(resid @ resid)
    dof = x.size - 2
    stderr = float(np.sqrt(ssr / dof / sxx)) if dof > 0 else float("nan")
    return SlopeFit(slope, stderr, intercept, x, y, float(np.sqrt(ssr / x.size)), n_excluded, None)
