"""Regularized log-correlated Gaussian fields on rectangular lattices.

The covariance of the field at regularization scale ``eps`` is

    K_eps(x, y) = profile(|x - y| + eps) + g(x, y)

where ``profile`` is ``-log`` (default) or its positive part ``max(-log, 0)``.
Fields are sampled exactly, either through a dense Cholesky factor (small
grids, arbitrary ``g`` tables) or through a circulant embedding on a
doubled torus (large grids, constant ``g``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .rng import stream

JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
DENSE_CAP_1D = 8192
DENSE_CAP_2D = 64
AUTO_DENSE_MAX = 1024
MAX_CLIPPED_MASS = 0.02


class InvalidKernelError(ValueError):
    """Raised for kernel specifications that cannot define a covariance."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a covariance cannot be factorized at the largest jitter."""


def _log_profile(s: np.ndarray) -> np.ndarray:
    return -np.log(s)


def _log_plus_profile(s: np.ndarray) -> np.ndarray:
    return np.maximum(-np.log(s), 0.0)


PROFILES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "log": _log_profile,
    "log_plus": _log_plus_profile,
}


@dataclass(frozen=True)
class Grid:
    """Cell-centred lattice on an axis-aligned box."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        sh = tuple(int(v) for v in self.shape)
        if not (len(lo) == len(hi) == len(sh)) or len(sh) == 0:
            raise ValueError("lower, upper and shape must have the same positive length")
        if any(not (b > a) for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box {lo} -> {hi}")
        if any(n < 1 for n in sh):
            raise ValueError(f"grid shape must be positive, got {sh}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "shape", sh)

    @classmethod
    def uniform(cls, lower: Sequence[float], upper: Sequence[float], cells: int | Sequence[int]) -> "Grid":
        lower = tuple(lower)
        if isinstance(cells, (int, np.integer)):
            cells = (int(cells),) * len(lower)
        return cls(lower, tuple(upper), tuple(cells))

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def sides(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.lower, self.upper))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(s / n for s, n in zip(self.sides, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [a + (np.arange(n) + 0.5) * h for a, n, h in zip(self.lower, self.shape, self.spacing)]

    def points(self) -> np.ndarray:
        """Cell centres as an ``(size, d)`` array in C order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, ...]:
        """Index of the cell containing each point (nearest cell centre).

        Raises ``ValueError`` naming the first point outside the closed box.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.d:
            raise ValueError(f"points have dimension {pts.shape[1]}, grid has {self.d}")
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        outside = np.any((pts < lo) | (pts > hi) | ~np.isfinite(pts), axis=1)
        if outside.any():
            k = int(np.argmax(outside))
            raise ValueError(f"point index {k} at {pts[k].tolist()} lies outside the field grid")
        idx = np.floor((pts - lo) / np.asarray(self.spacing)).astype(np.int64)
        idx = np.minimum(idx, np.asarray(self.shape) - 1)
        return tuple(idx[:, a] for a in range(self.d))

    def describe(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "shape": list(self.shape)}


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Parameters of the regularized kernel ``profile(|x-y| + eps) + g``.

    ``g`` is either a finite constant or a symmetric table over the grid points
    (dense synthesis only).
    """

    d: int = 1
    lower: tuple[float, ...] | None = None
    upper: tuple[float, ...] | None = None
    epsilon: float = 2.0**-10
    g: Union[float, np.ndarray] = 0.0
    profile: str = "log"

    def __post_init__(self):
        if self.d not in (1, 2):
            raise InvalidKernelError(f"dimension must be 1 or 2, got {self.d}")
        lo = (0.0,) * self.d if self.lower is None else tuple(float(v) for v in self.lower)
        hi = (1.0,) * self.d if self.upper is None else tuple(float(v) for v in self.upper)
        if len(lo) != self.d or len(hi) != self.d:
            raise InvalidKernelError("domain bounds must match the dimension")
        if any(not (b > a) for a, b in zip(lo, hi)):
            raise InvalidKernelError(f"degenerate domain {lo} -> {hi}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidKernelError(f"epsilon must be positive, got {self.epsilon}")
        if self.profile not in PROFILES:
            raise InvalidKernelError(f"unknown profile {self.profile!r}; choose from {sorted(PROFILES)}")
        g = self.g
        if np.ndim(g) == 0:
            g = float(g)
            if not math.isfinite(g):
                raise InvalidKernelError(f"g must be finite, got {g}")
        else:
            g = np.asarray(g, dtype=float)
            if not np.all(np.isfinite(g)):
                raise InvalidKernelError("g table contains non-finite values")
            if g.ndim != 2 or g.shape[0] != g.shape[1] or not np.array_equal(g, g.T):
                raise InvalidKernelError("g table must be a symmetric square matrix")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "g", g)

    @property
    def stationary(self) -> bool:
        return np.ndim(self.g) == 0

    def with_epsilon(self, epsilon: float) -> "KernelSpec":
        return KernelSpec(self.d, self.lower, self.upper, epsilon, self.g, self.profile)

    def grid(self, cells: int | Sequence[int]) -> Grid:
        return Grid.uniform(self.lower, self.upper, cells)

    def of_distance(self, r: np.ndarray, epsilon: float | None = None) -> np.ndarray:
        """Kernel as a function of distance (constant ``g`` only)."""
        if not self.stationary:
            raise InvalidKernelError("distance form requires a constant g")
        eps = self.epsilon if epsilon is None else epsilon
        return PROFILES[self.profile](np.asarray(r, dtype=float) + eps) + self.g

    def describe(self) -> dict:
        g = self.g if self.stationary else {"table_shape": list(np.shape(self.g))}
        return {
            "d": self.d,
            "lower": list(self.lower),
            "upper": list(self.upper),
            "epsilon": self.epsilon,
            "g": g,
            "profile": self.profile,
        }


def _as_points(grid_or_points, d: int) -> np.ndarray:
    if isinstance(grid_or_points, Grid):
        return grid_or_points.points()
    pts = np.asarray(grid_or_points, dtype=float)
    if pts.ndim == 1 and d == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != d:
        raise ValueError(f"points must have shape (N, {d})")
    return pts


def _distances(pts: np.ndarray) -> np.ndarray:
    if pts.shape[1] == 1:
        return np.abs(pts[:, 0][:, None] - pts[:, 0][None, :])
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def build_kernel(spec: KernelSpec, grid: Grid | np.ndarray) -> np.ndarray:
    """Dense covariance matrix ``K_eps(x_i, x_j)`` over the grid points."""
    pts = _as_points(grid, spec.d)
    lo, hi = np.asarray(spec.lower), np.asarray(spec.upper)
    if np.any(pts < lo) or np.any(pts > hi):
        raise ValueError("grid points must lie in the kernel domain")
    if isinstance(grid, Grid) and spec.epsilon < min(grid.spacing):
        warnings.warn(
            f"epsilon {spec.epsilon:g} is below the grid spacing {min(grid.spacing):g}",
            stacklevel=2,
        )
    cov = PROFILES[spec.profile](_distances(pts) + spec.epsilon)
    if spec.stationary:
        cov += spec.g
    else:
        if spec.g.shape != cov.shape:
            raise InvalidKernelError(f"g table shape {spec.g.shape} does not match {cov.shape}")
        cov += spec.g
    return cov


def cholesky_with_jitter(cov: np.ndarray, label: str = "") -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``cov + jitter * I`` for the first jitter that works."""
    n = cov.shape[0]
    eye = np.eye(n)
    for jitter in JITTER_LADDER:
        try:
            return np.linalg.cholesky(cov + jitter * eye if jitter else cov), jitter
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefiniteError(
        f"covariance is not positive definite at jitter {JITTER_LADDER[-1]:g}" + (f" ({label})" if label else "")
    )


@dataclass(frozen=True, eq=False)
class CovarianceFactor:
    """Dense factor ``L`` with ``L L^T = K + jitter * I``."""

    grid: Grid | None
    diag_variances: np.ndarray
    factor: np.ndarray
    jitter: float
    epsilon: float | None = None
    label: str = ""

    @property
    def n_normals(self) -> int:
        return self.factor.shape[1]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.grid.shape if self.grid is not None else (self.factor.shape[0],)

    def apply(self, z: np.ndarray) -> np.ndarray:
        return (self.factor @ z).reshape(self.shape)

    def covariance_row(self, index: int) -> np.ndarray:
        """Realized covariance ``(L L^T)[index]`` with every grid point, in grid shape."""
        return (self.factor @ self.factor[index]).reshape(self.shape)

    def variances(self) -> np.ndarray:
        return self.diag_variances.reshape(self.shape)


def factorize(
    cov: np.ndarray,
    grid: Grid | None = None,
    epsilon: float | None = None,
    label: str = "",
) -> CovarianceFactor:
    """Cholesky-factorize a symmetric covariance with the jitter ladder.

    An all-zero covariance gets a zero factor without jitter.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    if not np.array_equal(cov, cov.T):
        raise ValueError("covariance must be symmetric")
    if cov.shape[0] > DENSE_CAP_1D:
        raise ValueError(f"dense factorization capped at {DENSE_CAP_1D} points; use the circulant method")
    if not cov.any():
        chol, jitter = np.zeros_like(cov), 0.0
    else:
        chol, jitter = cholesky_with_jitter(cov, label)
    return CovarianceFactor(grid, np.diag(cov).copy(), chol, jitter, epsilon, label)


@dataclass(frozen=True, eq=False)
class CirculantFactor:
    """Square root of a stationary covariance via a doubled-torus embedding.

    ``clipped_mass`` is the fraction of spectral mass removed by clipping
    negative eigenvalues; ``diag_variances`` are the variances actually
    realized after clipping.
    """

    grid: Grid
    sqrt_eigs: np.ndarray
    embed_shape: tuple[int, ...]
    diag_variances: np.ndarray
    clipped_mass: float
    epsilon: float | None = None
    label: str = ""
    jitter: float = 0.0

    @property
    def n_normals(self) -> int:
        return int(np.prod(self.embed_shape))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.grid.shape

    def apply(self, z: np.ndarray) -> np.ndarray:
        z = z.reshape(self.embed_shape)
        x = np.fft.irfftn(self.sqrt_eigs * np.fft.rfftn(z), s=self.embed_shape, axes=tuple(range(len(self.embed_shape))))
        return x[tuple(slice(0, n) for n in self.grid.shape)]

    def covariance_row(self, index: int) -> np.ndarray:
        """Realized (clipped) covariance of grid point ``index`` with every grid point."""
        delta = np.zeros(self.embed_shape)
        delta[np.unravel_index(index, self.grid.shape)] = 1.0
        row = np.fft.irfftn(self.sqrt_eigs**2 * np.fft.rfftn(delta), s=self.embed_shape, axes=tuple(range(len(self.embed_shape))))
        return row[tuple(slice(0, n) for n in self.grid.shape)]

    def variances(self) -> np.ndarray:
        return self.diag_variances


def circulant_from_distance(
    covariance_of_distance: Callable[[np.ndarray], np.ndarray],
    grid: Grid,
    epsilon: float | None = None,
    label: str = "",
    max_clipped_mass: float = MAX_CLIPPED_MASS,
) -> CirculantFactor:
    """Circulant factor for an isotropic covariance on a uniform grid."""
    embed = tuple(2 * n for n in grid.shape)
    offsets = []
    for p, h in zip(embed, grid.spacing):
        j = np.arange(p)
        offsets.append(np.minimum(j, p - j) * h)
    mesh = np.meshgrid(*offsets, indexing="ij")
    r = np.sqrt(sum(m * m for m in mesh))
    row = covariance_of_distance(r)
    lam = np.fft.rfftn(row).real
    negative = np.clip(-lam, 0.0, None)
    # each rfft bin except the self-conjugate ones stands for two full-spectrum bins
    weight = np.full(lam.shape, 2.0)
    weight[..., 0] = 1.0
    if embed[-1] % 2 == 0:
        weight[..., -1] = 1.0
    total = float(np.sum(weight * np.abs(lam)))
    clipped = float(np.sum(weight * negative)) / total if total > 0 else 0.0
    if clipped > max_clipped_mass:
        raise NotPositiveDefiniteError(
            f"circulant embedding clips {clipped:.3g} of the spectral mass" + (f" ({label})" if label else "")
        )
    variance = float(row.flat[0]) + float(np.sum(weight * negative)) / row.size
    sqrt_eigs = np.sqrt(np.clip(lam, 0.0, None))
    return CirculantFactor(grid, sqrt_eigs, embed, np.full(grid.shape, variance), clipped, epsilon, label)


def factor_for(spec: KernelSpec, grid: Grid, method: str = "auto") -> CovarianceFactor | CirculantFactor:
    """Factor the kernel of ``spec`` on ``grid``.

    ``method`` is ``"dense"``, ``"circulant"`` or ``"auto"`` (dense for small
    grids or tabulated ``g``, circulant otherwise).
    """
    label = f"kernel {spec.describe()}"
    method = _resolve_method(spec, grid, method)
    if method == "dense":
        _check_dense_cap(grid)
        return factorize(build_kernel(spec, grid), grid, spec.epsilon, label)
    return circulant_from_distance(spec.of_distance, grid, spec.epsilon, label)


def _resolve_method(spec: KernelSpec, grid: Grid, method: str) -> str:
    if method not in ("auto", "dense", "circulant"):
        raise ValueError(f"unknown synthesis method {method!r}")
    if method == "circulant" and not spec.stationary:
        raise InvalidKernelError("circulant synthesis requires a constant g")
    if method == "auto":
        return "dense" if (not spec.stationary or grid.size <= AUTO_DENSE_MAX) else "circulant"
    return method


def _check_dense_cap(grid: Grid) -> None:
    if grid.d == 1 and grid.size > DENSE_CAP_1D:
        raise ValueError(f"dense synthesis capped at {DENSE_CAP_1D} points in 1D")
    if grid.d == 2 and max(grid.shape) > DENSE_CAP_2D:
        raise ValueError(f"dense synthesis capped at {DENSE_CAP_2D}x{DENSE_CAP_2D} in 2D")


@dataclass(frozen=True, eq=False)
class FieldGrid:
    """One realization of the regularized field on a grid."""

    grid: Grid
    values: np.ndarray
    epsilon: float | None
    diag_variances: np.ndarray
    seed: int

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError("values must match the grid shape")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def at(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-grid-point values and variances at arbitrary points."""
        idx = self.grid.locate(points)
        return self.values[idx], self.diag_variances[idx]


def sample_field(factor: CovarianceFactor | CirculantFactor, seed: int) -> FieldGrid:
    """Draw ``L z`` with ``z`` from the stream keyed by ``seed``."""
    rng = stream(seed)
    z = rng.standard_normal(factor.n_normals)
    values = factor.apply(z)
    grid = factor.grid if factor.grid is not None else Grid((0.0,), (1.0,), (values.size,))
    return FieldGrid(grid, values.reshape(grid.shape), factor.epsilon, factor.variances().reshape(grid.shape), int(seed))


@dataclass(frozen=True, eq=False)
class LayeredField:
    """Independent layers ``Y_m`` and partial sums ``S_m`` at scales ``2^-m``.

    Arrays are indexed by ``m - 1`` along the first axis.
    """

    grid: Grid
    increments: np.ndarray
    partial_sums: np.ndarray
    variances: np.ndarray
    seed: int

    @property
    def depth(self) -> int:
        return self.increments.shape[0]

    def level(self, m: int) -> FieldGrid:
        """The field ``S_m`` (scale ``2^-m``) as a :class:`FieldGrid`."""
        if not 1 <= m <= self.depth:
            raise ValueError(f"level {m} outside 1..{self.depth}")
        return FieldGrid(self.grid, self.partial_sums[m - 1], 2.0**-m, self.variances[m - 1], self.seed)


@dataclass(frozen=True, eq=False)
class LayeredFactor:
    """Factors for every layer of a multiscale field; reusable across seeds."""

    spec: KernelSpec
    grid: Grid
    layers: tuple = field(repr=False)
    variances: np.ndarray = field(repr=False)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def jitters(self) -> list[float]:
        return [f.jitter for f in self.layers]

    @property
    def clipped_masses(self) -> list[float]:
        return [getattr(f, "clipped_mass", 0.0) for f in self.layers]

    def sample(self, seed: int) -> LayeredField:
        rng = stream(seed)
        shape = self.grid.shape
        inc = np.empty((self.depth,) + shape)
        sums = np.empty_like(inc)
        for k, fac in enumerate(self.layers):
            inc[k] = fac.apply(rng.standard_normal(fac.n_normals)).reshape(shape)
            sums[k] = inc[k] if k == 0 else sums[k - 1] + inc[k]
        return LayeredField(self.grid, inc, sums, self.variances, int(seed))


def layer_covariance(spec: KernelSpec, m: int, dist: np.ndarray) -> np.ndarray:
    """Covariance of layer ``m`` at distance ``dist``; a table ``g`` is not included."""
    prof = PROFILES[spec.profile]
    dist = np.asarray(dist, dtype=float)
    if m == 1:
        return prof(dist + 0.5) + (spec.g if spec.stationary else 0.0)
    return prof(dist + 2.0**-m) - prof(dist + 2.0 ** -(m - 1))


def layered_factor(spec: KernelSpec, depth: int, grid: Grid | None = None, method: str = "auto") -> LayeredFactor:
    """Build layer factors: layer 1 is ``K_{1/2}``, layer ``m`` is ``K_{2^-m} - K_{2^-m+1}``.

    ``spec.epsilon`` is not used; the scales are fixed by the layer index.
    Without an explicit grid, each axis gets ``ceil(side * 2^depth)`` cells.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if grid is None:
        grid = Grid.uniform(spec.lower, spec.upper, [int(math.ceil(s * 2**depth - 1e-9)) for s in _sides(spec)])
    if max(grid.spacing) > 2.0**-depth * (1 + 1e-12):
        raise ValueError(f"grid spacing {max(grid.spacing):g} exceeds the finest scale 2^-{depth}")
    method = _resolve_method(spec, grid, method)
    layers = []
    if method == "dense":
        _check_dense_cap(grid)
        r = _distances(grid.points())
    for m in range(1, depth + 1):
        fine = 2.0**-m
        label = f"layer m={m}, kernel {spec.describe()}"

        def cov_of(dist, m=m):
            return layer_covariance(spec, m, dist)

        try:
            if method == "dense":
                cov = cov_of(r)
                if m == 1 and not spec.stationary:
                    cov = cov + spec.g
                layers.append(factorize(cov, grid, fine, label))
            else:
                layers.append(circulant_from_distance(cov_of, grid, fine, label))
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(f"layer {m}: {exc}") from exc
    per_layer = np.stack([f.variances().reshape(grid.shape) for f in layers])
    return LayeredFactor(spec, grid, tuple(layers), np.cumsum(per_layer, axis=0))


def _sides(spec: KernelSpec) -> list[float]:
    return [b - a for a, b in zip(spec.lower, spec.upper)]


def sample_layered(spec: KernelSpec, depth: int, seed: int, grid: Grid | None = None, method: str = "auto") -> LayeredField:
    """Sample a multiscale field; see :func:`layered_factor`."""
    return layered_factor(spec, depth, grid, method).sample(seed)
