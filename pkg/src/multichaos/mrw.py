"""Multifractal random walk: Brownian motion run on a chaos clock."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .gmc import GridMeasure
from .mfa import theoretical_spectrum
from .regression import SlopeFit, fit_line
from .rng import stream

PATH_KINDS = ("brownian", "mrw", "lbm")


@dataclass(frozen=True, eq=False)
class PathSeries:
    """Positions ``(K+1, d)`` at strictly increasing times.

    ``exit_index`` marks the first exterior point for exit-time paths.
    """

    times: np.ndarray
    positions: np.ndarray
    kind: str
    seed: int | None = None
    exit_index: int | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.positions, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if t.ndim != 1 or x.shape[0] != t.size:
            raise ValueError("positions must have one row per time")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(x)):
            raise ValueError("positions must be finite")
        if self.kind not in PATH_KINDS:
            raise ValueError(f"unknown path kind {self.kind!r}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", x)

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def at(self, t) -> np.ndarray:
        """Linear interpolation of the path at times ``t``, shape ``(len(t), d)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < self.times[0]) or np.any(t > self.times[-1]):
            raise ValueError("interpolation times outside the path range")
        return np.stack([np.interp(t, self.times, self.positions[:, c]) for c in range(self.d)], axis=1)


def cell_boundaries(widths: np.ndarray, t0: float = 0.0) -> np.ndarray:
    """Cumulative cell boundaries; uniform widths give ``t0 + k h`` exactly."""
    widths = np.asarray(widths, dtype=float)
    if widths.size and np.all(widths == widths[0]):
        return t0 + widths[0] * np.arange(widths.size + 1)
    return t0 + np.concatenate([[0.0], np.cumsum(widths)])


def _gaussian_walk(variances: np.ndarray, d_target: int, seed: int) -> np.ndarray:
    if d_target < 1:
        raise ValueError("target dimension must be at least 1")
    z = stream(seed).standard_normal((variances.size, d_target))
    steps = np.sqrt(variances)[:, None] * z
    out = np.zeros((variances.size + 1, d_target))
    np.cumsum(steps, axis=0, out=out[1:])
    return out


def simulate_brownian(widths: Sequence[float], d_target: int, seed: int) -> PathSeries:
    """Brownian motion on the cell boundaries of the given time widths."""
    widths = np.asarray(widths, dtype=float)
    return PathSeries(cell_boundaries(widths), _gaussian_walk(widths, d_target, seed), "brownian", int(seed))


def simulate_mrw(clock_measure: GridMeasure, d_target: int, seed: int) -> PathSeries:
    """``B`` run on the clock ``t -> M([0, t])``: increment variances are the cell masses."""
    if clock_measure.d != 1:
        raise ValueError("the clock measure must live on a time interval")
    if clock_measure.gamma is not None and clock_measure.gamma**2 >= 2:
        raise ValueError("the clock needs gamma^2 < 2")
    grid = clock_measure.grid
    widths = np.full(grid.shape[0], grid.spacing[0])
    times = cell_boundaries(widths, grid.lower[0])
    return PathSeries(times, _gaussian_walk(clock_measure.masses, d_target, seed), "mrw", int(seed))


def _lag_steps(path: PathSeries, lags: Sequence[float]) -> np.ndarray:
    dt = np.diff(path.times)
    h = dt[0]
    if not np.allclose(dt, h, rtol=1e-9, atol=0):
        raise ValueError("structure functions need a uniform time grid")
    steps = np.rint(np.asarray(lags, dtype=float) / h).astype(np.int64)
    if np.any(steps < 1) or not np.allclose(steps * h, lags, rtol=1e-9):
        raise ValueError("lags must be positive multiples of the time step")
    if steps.max() >= path.times.size:
        raise ValueError("lag longer than the path")
    return steps


def structure_moments(paths: Iterable[PathSeries], q: float, lags: Sequence[float], max_starts: int = 1024) -> np.ndarray:
    """``mean |Z_{t+lag} - Z_t|^q`` over a coarse grid of ``t`` and over replicas."""
    acc = None
    count = 0
    for path in paths:
        steps = _lag_steps(path, lags)
        stride = max(1, (path.times.size - 1) // max_starts)
        row = np.empty(steps.size)
        z = path.positions
        for k, s in enumerate(steps):
            starts = np.arange(0, z.shape[0] - s, stride)
            inc = z[starts + s] - z[starts]
            row[k] = np.mean(np.sqrt(np.sum(inc * inc, axis=1)) ** q)
        acc = row if acc is None else acc + row
        count += 1
    if count == 0:
        raise ValueError("no paths")
    return acc / count


def mrw_structure_slope(paths: Iterable[PathSeries], q: float, lags: Sequence[float], max_starts: int = 1024) -> SlopeFit:
    """Slope of ``log`` structure moments against ``log lag``."""
    mean = structure_moments(paths, q, lags, max_starts)
    return fit_line(np.log(np.asarray(lags, dtype=float)), np.log(mean))


def theoretical_mrw_lower_spectrum(alpha, gamma: float):
    """Lower singularity spectrum of the walk: the clock spectrum at ``2 alpha``."""
    if gamma**2 >= 2:
        raise ValueError("the walk needs gamma^2 < 2")
    return theoretical_spectrum(2 * np.asarray(alpha, dtype=float), gamma, 1)


def mrw_lower_support(gamma: float) -> tuple[float, float]:
    a = 1 / math.sqrt(2)
    return (a - abs(gamma) / 2) ** 2, (a + abs(gamma) / 2) ** 2


@dataclass(frozen=True, eq=False)
class PathDimension:
    """Oscillation scaling of a path around one time.

    ``estimate`` is the log-log regression slope of ``|Z_{t+r} - Z_{t-r}|``
    against ``r``; ``liminf_proxy`` is the smallest per-radius ratio
    ``log|Z_{t+r} - Z_{t-r}| / log r``. A path that does not move gives
    ``+inf`` for both with ``flag = "constant"``.
    """

    estimate: float
    liminf_proxy: float
    ratios: np.ndarray
    flag: str | None = None


def path_lower_dimension(path: PathSeries, t: float, radii: Sequence[float]) -> PathDimension:
    r = np.asarray(radii, dtype=float)
    if r.size < 2 or np.any(r <= 0):
        raise ValueError("need at least two positive radii")
    if t - r.max() < path.times[0] or t + r.max() > path.times[-1]:
        raise ValueError(f"t = {t} too close to the path endpoints for radius {r.max()}")
    osc = path.at(t + r) - path.at(t - r)
    size = np.sqrt(np.sum(osc * osc, axis=1))
    if np.any(size == 0):
        inf = np.full(r.size, np.inf)
        return PathDimension(math.inf, math.inf, inf, "constant")
    ratios = np.log(size) / np.log(r)
    fit = fit_line(np.log(r), np.log(size))
    return PathDimension(fit.slope, float(np.min(ratios)), ratios)
