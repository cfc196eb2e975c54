"""Gaussian multiplicative chaos measures on grids and their experiments."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .fields import FieldGrid, Grid, LayeredFactor, LayeredField, sample_field
from .regression import SlopeFit, fit_line
from .rng import stream

MAX_CENTERS = 4096


class SubcriticalityError(ValueError):
    """Raised when gamma^2 is not strictly below the critical value."""


class BallOutsideDomainWarning(UserWarning):
    """A ball query did not meet the measure's domain."""


@dataclass(frozen=True)
class GmcParams:
    gamma: float
    d: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be positive")
        if not math.isfinite(self.gamma) or self.gamma**2 >= 2 * self.d:
            raise SubcriticalityError(f"gamma^2 = {self.gamma**2:g} must be below 2d = {2 * self.d}")


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Non-negative cell masses on a box lattice.

    ``gamma`` records the chaos parameter when the measure came from a field.
    ``underflow_count`` counts cells whose weight underflowed and was replaced
    by the smallest positive normal number.
    """

    masses: np.ndarray
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    gamma: float | None = None
    underflow_count: int = 0
    total_mass: float = field(init=False)

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if m.ndim != len(self.lower) or len(self.lower) != len(self.upper):
            raise ValueError("masses must have one axis per domain dimension")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("masses must be finite and non-negative")
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "total_mass", float(np.sum(m)))

    @classmethod
    def lebesgue(cls, grid: Grid) -> "GridMeasure":
        return cls(np.full(grid.shape, grid.cell_volume), grid.lower, grid.upper, gamma=0.0)

    @property
    def grid(self) -> Grid:
        return Grid(self.lower, self.upper, self.masses.shape)

    @property
    def d(self) -> int:
        return self.masses.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.masses.shape

    @property
    def cell_volume(self) -> float:
        return self.grid.cell_volume

    @property
    def level(self) -> int | None:
        """Dyadic level ``n`` when every axis has ``2^n`` cells, else ``None``."""
        n = self.shape[0]
        if all(s == n for s in self.shape) and n & (n - 1) == 0:
            return n.bit_length() - 1
        return None


def gmc_from_field(field: FieldGrid, params: GmcParams) -> GridMeasure:
    """Cell masses ``exp(gamma X - gamma^2 sigma^2 / 2) * cell volume``."""
    grid = field.grid
    if params.d != grid.d:
        raise ValueError(f"params dimension {params.d} does not match field dimension {grid.d}")
    vol = grid.cell_volume
    if params.gamma == 0:
        w = np.full(grid.shape, vol)
        return GridMeasure(w, grid.lower, grid.upper, gamma=0.0)
    g = params.gamma
    w = np.exp(g * field.values - 0.5 * g * g * field.diag_variances) * vol
    under = w == 0
    count = int(under.sum())
    if count:
        w[under] = np.finfo(float).tiny
    return GridMeasure(w, grid.lower, grid.upper, gamma=g, underflow_count=count)


def _ball_cells(measure: GridMeasure, x: np.ndarray, r: float) -> tuple[slice, ...] | np.ndarray | None:
    grid = measure.grid
    if measure.d == 1:
        c = grid.axes()[0]
        lo = int(np.searchsorted(c, x[0] - r, "left"))
        hi = int(np.searchsorted(c, x[0] + r, "right"))
        return (slice(lo, hi),) if hi > lo else None
    axes = grid.axes()
    sl = []
    for a, c in enumerate(axes):
        lo = int(np.searchsorted(c, x[a] - r, "left"))
        hi = int(np.searchsorted(c, x[a] + r, "right"))
        if hi <= lo:
            return None
        sl.append(slice(lo, hi))
    sub = np.meshgrid(*[c[s] - x[a] for a, (c, s) in enumerate(zip(axes, sl))], indexing="ij")
    inside = sum(s * s for s in sub) <= r * r
    if not inside.any():
        return None
    full = np.zeros(measure.shape, dtype=bool)
    full[tuple(sl)] = inside
    return full


def ball_mass(measure: GridMeasure, x, r: float) -> float:
    """Mass of the cells whose centres lie in the closed ball ``B(x, r)``.

    A ball that misses the domain returns 0 and emits
    :class:`BallOutsideDomainWarning`.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cells = _ball_cells(measure, x, r)
    if cells is None:
        lo, hi = np.asarray(measure.lower), np.asarray(measure.upper)
        gap = np.maximum(np.maximum(lo - x, x - hi), 0.0)
        if float(np.sqrt(gap @ gap)) > r:
            warnings.warn(f"ball B({x.tolist()}, {r:g}) lies outside the domain", BallOutsideDomainWarning, stacklevel=2)
        return 0.0
    return float(np.sum(measure.masses[cells]))


def ball_masses_1d(measure: GridMeasure, centers: np.ndarray, r: float) -> np.ndarray:
    """Vectorized 1-D ball masses via prefix sums (closed balls, cell centres)."""
    if measure.d != 1:
        raise ValueError("ball_masses_1d needs a 1-D measure")
    c = measure.grid.axes()[0]
    cs = np.concatenate([[0.0], np.cumsum(measure.masses)])
    centers = np.asarray(centers, dtype=float)
    lo = np.searchsorted(c, centers - r, "left")
    hi = np.searchsorted(c, centers + r, "right")
    return np.maximum(cs[hi] - cs[lo], 0.0)


def sample_points(measure: GridMeasure, rng: np.random.Generator, size: int, region: np.ndarray | None = None) -> np.ndarray:
    """Size-biased cell centres, ``(size, d)``; ``region`` restricts to a cell mask."""
    w = measure.masses.ravel()
    if region is not None:
        w = np.where(np.asarray(region, dtype=bool).ravel(), w, 0.0)
    pos = np.flatnonzero(w > 0)
    if pos.size == 0:
        raise ValueError("cannot sample from a measure with zero total mass")
    cum = np.cumsum(w[pos])
    u = rng.random(size) * cum[-1]
    idx = pos[np.minimum(np.searchsorted(cum, u, "right"), pos.size - 1)]
    return measure.grid.points()[idx]


def sample_point(measure: GridMeasure, rng: np.random.Generator) -> np.ndarray:
    """One cell centre drawn with probability proportional to its mass."""
    return sample_points(measure, rng, 1)[0]


def interior_centers(grid: Grid, margin: float, max_count: int = MAX_CENTERS) -> np.ndarray:
    """Evenly thinned 1-D cell centres at distance at least ``margin`` from the boundary."""
    c = grid.axes()[0]
    keep = c[(c - grid.lower[0] >= margin) & (grid.upper[0] - c >= margin)]
    if keep.size == 0:
        raise ValueError("no cell centre is far enough from the boundary")
    stride = max(1, int(math.ceil(keep.size / max_count)))
    return keep[::stride]


def _check_radii(radii: Sequence[float], spacing: float) -> np.ndarray:
    r = np.asarray(radii, dtype=float)
    if r.size < 2 or np.any(np.diff(r) >= 0):
        raise ValueError("radii must be strictly decreasing with at least two entries")
    if r.min() < 4 * spacing * (1 - 1e-12):
        raise ValueError("radii must be at least four cell sides")
    return r


def ball_moments(measure: GridMeasure, q: float, radii: Sequence[float], centers: np.ndarray | None = None) -> np.ndarray:
    """``mean over centres of M(B(x, r))^q`` for each radius (1-D measures)."""
    grid = measure.grid
    r = _check_radii(radii, grid.spacing[0])
    if centers is None:
        centers = interior_centers(grid, r.max())
    out = np.empty(r.size)
    for k, rk in enumerate(r):
        m = ball_masses_1d(measure, centers, rk)
        if q < 0 and np.any(m == 0):
            out[k] = np.nan
        else:
            out[k] = np.mean(m**q) if q != 0 else 1.0
    return out


def moment_scaling_slope(
    measures: Iterable[GridMeasure],
    q: float,
    radii: Sequence[float],
    centers: np.ndarray | None = None,
) -> SlopeFit:
    """Slope of ``log mean_replicas M(B(x, r))^q`` against ``log r``.

    Each replica contributes the average over sliding centres (interior cell
    centres, thinned to at most ``MAX_CENTERS``). Replicas with an empty ball
    at ``q < 0`` are excluded and counted in ``n_excluded``.
    """
    rows = []
    excluded = 0
    for meas in measures:
        if meas.d != 1:
            raise ValueError("moment scaling is implemented for 1-D measures")
        if meas.gamma and q * meas.gamma**2 >= 2 * meas.d:
            raise ValueError(f"q = {q} violates q < 2d / gamma^2")
        row = ball_moments(meas, q, radii, centers)
        if np.any(np.isnan(row)):
            excluded += 1
            continue
        rows.append(row)
    if not rows:
        raise ValueError("every replica was excluded")
    mean = np.mean(rows, axis=0)
    return fit_line(np.log(np.asarray(radii, dtype=float)), np.log(mean), excluded)


def thick_point_exponent(layered: LayeredField, x, levels: Sequence[int] | None = None) -> SlopeFit:
    """Slope of ``S_m(x)`` against ``m log 2`` over the given levels."""
    levels = np.arange(1, layered.depth + 1) if levels is None else np.asarray(levels, dtype=int)
    if levels.min() < 1 or levels.max() > layered.depth:
        raise ValueError(f"levels must lie in 1..{layered.depth}")
    idx = layered.grid.locate(np.atleast_2d(np.asarray(x, dtype=float)))
    values = layered.partial_sums[(levels - 1,) + tuple(i[0] for i in idx)]
    return fit_line(levels * math.log(2.0), values)


def _root_cell(grid: Grid, rng: np.random.Generator, region: np.ndarray | None) -> int:
    if region is None:
        return int(rng.integers(grid.size))
    cells = np.flatnonzero(np.asarray(region, dtype=bool).ravel())
    if cells.size == 0:
        raise ValueError("empty sampling region")
    return int(cells[rng.integers(cells.size)])


def rooted_field(factor, gamma: float, seed: int, region: np.ndarray | None = None) -> tuple[np.ndarray, FieldGrid]:
    """Draw ``(x, X)`` from the size-biased law ``E[M_gamma(dx) P(dX)]``.

    By the Cameron-Martin shift ``x`` is a uniform cell centre (within
    ``region`` if given) and ``X`` is an ordinary sample shifted by ``gamma``
    times its realized covariance with the value at ``x``.
    """
    base = sample_field(factor, seed)
    cell = _root_cell(base.grid, stream(seed, 1), region)
    values = base.values + gamma * factor.covariance_row(cell)
    shifted = FieldGrid(base.grid, values, base.epsilon, base.diag_variances, base.seed)
    return base.grid.points()[cell], shifted


def rooted_layered(factor: LayeredFactor, gamma: float, seed: int, region: np.ndarray | None = None) -> tuple[np.ndarray, LayeredField]:
    """:func:`rooted_field` for a multiscale field, rooted at the finest level.

    Every layer is shifted by ``gamma`` times its own covariance row, so each
    ``S_m`` carries the shift ``gamma Cov(S_m(.), S_depth(x))``.
    """
    base = factor.sample(seed)
    grid = factor.grid
    cell = _root_cell(grid, stream(seed, 1), region)
    inc = base.increments.copy()
    for m, layer in enumerate(factor.layers):
        inc[m] += gamma * layer.covariance_row(cell).reshape(grid.shape)
    sums = np.empty_like(inc)
    for m in range(inc.shape[0]):
        sums[m] = inc[m] if m == 0 else sums[m - 1] + inc[m]
    return grid.points()[cell], LayeredField(grid, inc, sums, base.variances, base.seed)


def _level_centers(shape: tuple[int, ...], n: int) -> tuple[np.ndarray, ...]:
    idx = []
    for cells in shape:
        boxes = 2**n
        if cells % boxes:
            raise ValueError(f"level {n} does not divide {cells} cells")
        stride = cells // boxes
        idx.append(np.arange(boxes) * stride + stride // 2)
    return tuple(np.meshgrid(*idx, indexing="ij"))


@dataclass(frozen=True, eq=False)
class ThickCount:
    levels: np.ndarray
    counts: np.ndarray
    fit: SlopeFit | None

    @property
    def dimension(self) -> float:
        return self.fit.slope if self.fit is not None else float("nan")


def thick_point_counts(layered: LayeredField, gamma: float, levels: Sequence[int]) -> np.ndarray:
    """Number of level-``n`` box centres with ``S_n >= gamma n log 2``."""
    out = []
    for n in levels:
        if not 1 <= n <= layered.depth:
            raise ValueError(f"level {n} outside 1..{layered.depth}")
        s = layered.partial_sums[n - 1][_level_centers(layered.grid.shape, n)]
        out.append(int(np.count_nonzero(s >= gamma * n * math.log(2.0))))
    return np.asarray(out)


def thick_point_box_count(layereds: LayeredField | Iterable[LayeredField], gamma: float, levels: Sequence[int]) -> ThickCount:
    """Replica-averaged thick-point counts and the slope of ``log N_n`` on ``n log 2``.

    Levels with a zero mean count are left out of the fit; with fewer than two
    usable levels the fit is ``None``.
    """
    if isinstance(layereds, LayeredField):
        layereds = [layereds]
    levels = np.asarray(levels, dtype=int)
    counts = np.mean([thick_point_counts(lf, gamma, levels) for lf in layereds], axis=0)
    ok = counts > 0
    fit = fit_line(levels[ok] * math.log(2.0), np.log(counts[ok])) if ok.sum() >= 2 else None
    return ThickCount(levels, counts, fit)
