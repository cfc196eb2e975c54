"""Liouville Brownian motion: the chaos clock along a Brownian path.

The clock is the Riemann sum ``F(t) = h * sum_{kh < t} exp(gamma X(B_kh) -
gamma^2 sigma^2 / 2)`` with nearest-grid field lookup, and the Liouville
path is ``B`` evaluated at the inverse clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fields import FieldGrid, Grid, KernelSpec, factor_for, layered_factor, sample_field
from .gmc import GridMeasure
from .mrw import PathSeries, cell_boundaries
from .parallel import pmap
from .regression import SlopeFit, fit_line
from .rng import derive_seed, stream

MAX_STEPS = 10**7
CHUNK = 4096


def _check_gamma(gamma: float) -> None:
    if not math.isfinite(gamma) or gamma**2 >= 4:
        raise ValueError(f"gamma^2 = {gamma**2:g} must be below 4")


@dataclass(frozen=True, eq=False)
class ClockProcess:
    """Piecewise-linear clock through ``(knots[k], values[k])`` with ``values[0] = 0``."""

    knots: np.ndarray
    values: np.ndarray
    strictly_increasing: bool = field(init=False)

    def __post_init__(self):
        s = np.asarray(self.knots, dtype=float)
        f = np.asarray(self.values, dtype=float)
        if s.ndim != 1 or s.shape != f.shape or s.size < 2:
            raise ValueError("knots and values must be 1-D of equal length >= 2")
        if s[0] != 0 or f[0] != 0:
            raise ValueError("the clock must start at (0, 0)")
        if np.any(np.diff(s) <= 0):
            raise ValueError("knots must be strictly increasing")
        df = np.diff(f)
        if np.any(df < 0) or not np.all(np.isfinite(f)):
            raise ValueError("clock values must be finite and non-decreasing")
        object.__setattr__(self, "knots", s)
        object.__setattr__(self, "values", f)
        object.__setattr__(self, "strictly_increasing", bool(np.all(df > 0)))

    @property
    def T(self) -> float:
        return float(self.knots[-1])

    @property
    def total(self) -> float:
        return float(self.values[-1])


def simulate_brownian_exit(
    lower: Sequence[float],
    upper: Sequence[float],
    h: float,
    seed: int,
    max_steps: int = MAX_STEPS,
) -> PathSeries:
    """Euler walk from the origin until the first point outside the open box.

    The returned path ends at that exterior point; ``exit_index`` is its index
    and the exit time is ``exit_index * h``.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if lo.shape != hi.shape or lo.ndim != 1:
        raise ValueError("box bounds must be 1-D of equal length")
    if not (np.all(lo < 0) and np.all(hi > 0)):
        raise ValueError("the origin must be interior to the domain")
    if not h > 0:
        raise ValueError("step must be positive")
    rng = stream(seed)
    sd = math.sqrt(h)
    d = lo.size
    pieces = [np.zeros((1, d))]
    cur = np.zeros(d)
    done = 0
    while done < max_steps:
        n = min(CHUNK, max_steps - done)
        p = cur + np.cumsum(rng.standard_normal((n, d)) * sd, axis=0)
        out = np.any((p <= lo) | (p >= hi), axis=1)
        if out.any():
            k = int(np.argmax(out))
            pieces.append(p[: k + 1])
            positions = np.concatenate(pieces)
            K = positions.shape[0] - 1
            return PathSeries(cell_boundaries(np.full(K, h)), positions, "brownian", int(seed), K)
        pieces.append(p)
        cur = p[-1]
        done += n
    raise RuntimeError(f"no exit within {max_steps} steps (h = {h:g}, last position {cur.tolist()})")


def _uniform_step(path: PathSeries) -> float:
    dt = np.diff(path.times)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("the clock needs a uniform time step")
    return float(dt[0])


def chaos_rates(positions: np.ndarray, field: FieldGrid, gamma: float) -> np.ndarray:
    """``exp(gamma X - gamma^2 sigma^2 / 2)`` at the nearest grid points."""
    if gamma == 0:
        field.grid.locate(positions)
        return np.ones(positions.shape[0])
    x, v = field.at(positions)
    return np.exp(gamma * x - 0.5 * gamma * gamma * v)


def clock_from_path(path: PathSeries, field: FieldGrid, gamma: float) -> ClockProcess:
    """Left-point Riemann clock along ``path`` (the final exterior point carries no weight)."""
    _check_gamma(gamma)
    if field.grid.d != path.d:
        raise ValueError("field and path dimensions differ")
    h = _uniform_step(path)
    rates = chaos_rates(path.positions[:-1], field, gamma)
    values = np.zeros(path.times.size)
    np.cumsum(rates, out=values[1:])
    return ClockProcess(path.times - path.times[0], h * values)


def mu_measure(clock: ClockProcess) -> GridMeasure:
    """Clock increments as a measure on ``[0, T]`` (one cell per time step)."""
    dt = np.diff(clock.knots)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("mu_measure needs uniform knots")
    return GridMeasure(np.diff(clock.values), (0.0,), (clock.T,))


def invert_clock(clock: ClockProcess, u) -> np.ndarray:
    """Smallest ``s`` with ``F(s) = u`` by binary search and linear interpolation."""
    u = np.asarray(u, dtype=float)
    F, s = clock.values, clock.knots
    if np.any(u < 0) or np.any(u > F[-1]) or not np.all(np.isfinite(u)):
        raise ValueError(f"clock values must lie in [0, {F[-1]:g}]")
    j = np.searchsorted(F, u, "left")  # first knot with F >= u
    jc = np.minimum(j, F.size - 1)
    exact = F[jc] == u
    k = np.clip(j - 1, 0, F.size - 2)  # F[k] < u <= F[k + 1] off the knots
    dF = F[k + 1] - F[k]
    frac = np.divide(u - F[k], dF, out=np.zeros(np.shape(u)), where=dF > 0)
    return np.where(exact, s[jc], s[k] + frac * (s[k + 1] - s[k]))


def lbm_path(path: PathSeries, clock: ClockProcess, times) -> PathSeries:
    """Liouville path: ``B`` at ``invert_clock(t)`` for each output time."""
    t = np.asarray(times, dtype=float)
    if np.any(t < 0) or np.any(t > clock.total):
        raise ValueError(f"output times must lie in [0, {clock.total:g}]")
    s = invert_clock(clock, t) + path.times[0]
    return PathSeries(t, path.at(s), "lbm", path.seed)


def mu_minus_measure(clock: ClockProcess, cells: int) -> GridMeasure:
    """Inverse-clock increments on a uniform grid of ``[0, F(T)]``."""
    if cells < 1:
        raise ValueError("need at least one cell")
    u = np.linspace(0.0, clock.total, cells + 1)
    return GridMeasure(np.diff(invert_clock(clock, u)), (0.0,), (clock.total,))


# closed forms


def theoretical_xi_mu(q, gamma: float):
    """Moment exponent ``(1 + gamma^2/4) q - (gamma^2/4) q^2`` of the clock measure."""
    q = np.asarray(q, dtype=float)
    return (1 + gamma**2 / 4) * q - (gamma**2 / 4) * q**2


def mu_spectrum_support(gamma: float) -> tuple[float, float]:
    return (1 - abs(gamma) / 2) ** 2, (1 + abs(gamma) / 2) ** 2


def theoretical_mu_spectrum(alpha, gamma: float):
    """Spectrum ``1 - ((1 - alpha)/gamma + gamma/4)^2`` of the clock measure on its support."""
    _check_gamma(gamma)
    alpha = np.asarray(alpha, dtype=float)
    if gamma == 0:
        return np.where(alpha == 1, 1.0, 0.0)
    lo, hi = mu_spectrum_support(gamma)
    val = 1 - ((1 - alpha) / gamma + gamma / 4) ** 2
    return np.where((alpha >= lo) & (alpha <= hi), val, 0.0)


def lbm_spectrum_support(gamma: float) -> tuple[float, float]:
    a = math.sqrt(2)
    b = abs(gamma) / math.sqrt(2)
    return (a + b) ** -2, (a - b) ** -2


def theoretical_lbm_lower_spectrum(alpha, gamma: float):
    """Lower spectrum ``2a - 2a((2a - 1)/(2a gamma) + gamma/4)^2`` of the Liouville path."""
    _check_gamma(gamma)
    alpha = np.asarray(alpha, dtype=float)
    if gamma == 0:
        return np.where(alpha == 0.5, 1.0, 0.0)
    lo, hi = lbm_spectrum_support(gamma)
    val = 2 * alpha - 2 * alpha * ((2 * alpha - 1) / (2 * alpha * gamma) + gamma / 4) ** 2
    return np.where((alpha >= lo) & (alpha <= hi), val, 0.0)


# exit-moment experiment


@dataclass(frozen=True)
class ExitExperimentConfig:
    """Exit moments of the clock from balls ``B(start, sqrt r)``.

    Each replica is one field realization on the box ``(-L/2, L/2)^2`` with
    ``L = tiles * tile_spacing``. One independent Brownian path starts from
    the centre of every tile, so a replica yields ``tiles^2`` samples per
    radius. ``cells_per_unit`` sets the field grid and ``epsilon`` is its
    spacing.
    """

    gamma: float
    radii: tuple[float, ...]
    h: float
    replicas: int
    seed: int
    tiles: int = 4
    tile_spacing: float = 2.0
    cells_per_unit: int = 128
    profile: str = "log_plus"
    g: float = 0.0
    max_steps: int = MAX_STEPS

    def __post_init__(self):
        _check_gamma(self.gamma)
        r = tuple(float(v) for v in self.radii)
        object.__setattr__(self, "radii", r)
        if len(r) < 2 or any(v <= 0 for v in r):
            raise ValueError("need at least two positive radii")
        if any(b >= a for a, b in zip(r, r[1:])):
            raise ValueError("radii must be strictly decreasing")
        if max(r) > 1:
            raise ValueError("exit balls of radius sqrt(r) must fit in the unit ball")
        if not 0 < self.h <= min(r) ** 2 / 100 * (1 + 1e-12):
            raise ValueError(f"step h = {self.h:g} must satisfy 0 < h <= min(r)^2 / 100 = {min(r) ** 2 / 100:g}")
        if self.replicas < 1 or self.tiles < 1:
            raise ValueError("replicas and tiles must be positive")
        if self.tile_spacing < 2:
            raise ValueError("tiles must be at least 2 apart so each contains a unit ball")

    @property
    def side(self) -> float:
        return self.tiles * self.tile_spacing

    def starts(self) -> np.ndarray:
        a = (np.arange(self.tiles) + 0.5) * self.tile_spacing - self.side / 2
        return np.array([(x, y) for x in a for y in a])

    def kernel(self) -> KernelSpec:
        L = self.side / 2
        return KernelSpec(2, (-L, -L), (L, L), 1.0 / self.cells_per_unit, self.g, self.profile)

    def grid(self) -> Grid:
        return self.kernel().grid(int(round(self.side * self.cells_per_unit)))


@dataclass(frozen=True, eq=False)
class ExitMoments:
    """Clock values at the exit times: ``values[replica, tile, radius]``.

    ``reached[replica, tile]`` is False for paths that hit the step cap.
    ``min_rates[replica]`` is the smallest clock rate on the field grid; a
    positive value makes the clock strictly increasing along every path.
    """

    radii: np.ndarray
    values: np.ndarray
    reached: np.ndarray
    seeds: list[int]
    min_rates: np.ndarray | None = None

    @property
    def n_excluded(self) -> int:
        return int(np.count_nonzero(~self.reached))

    def samples(self) -> np.ndarray:
        return self.values[self.reached]

    def moments(self, q: float) -> np.ndarray:
        return np.mean(self.samples() ** q, axis=0)

    def max_moment(self, q: float) -> float:
        """Largest per-replica moment, an empirical boundedness check."""
        per_rep = [np.mean(v[ok] ** q, axis=0) for v, ok in zip(self.values, self.reached) if ok.any()]
        return float(np.max(per_rep))

    def slope(self, q: float) -> SlopeFit:
        return fit_line(np.log(self.radii), np.log(self.moments(q)), self.n_excluded)


def _exit_values(rates: np.ndarray, grid: Grid, starts: np.ndarray, rho: np.ndarray, h: float, rng: np.random.Generator, max_steps: int):
    """Walk every start until it leaves all balls ``B(start, rho)``; rho ascending."""
    K = starts.shape[0]
    vals = np.zeros((K, rho.size))
    F = np.zeros(K)
    cur = np.zeros((K, 2))
    nxt = np.zeros(K, dtype=np.int64)
    alive = np.ones(K, dtype=bool)
    lo = np.asarray(grid.lower)
    sp = np.asarray(grid.spacing)
    top = np.asarray(grid.shape) - 1
    sd = math.sqrt(h)
    steps = 0
    while alive.any() and steps < max_steps:
        ia = np.flatnonzero(alive)
        inc = rng.standard_normal((CHUNK, ia.size, 2)) * sd
        p = cur[ia][None] + np.cumsum(inc, axis=0)
        prev = np.concatenate([cur[ia][None], p[:-1]])
        ix = np.clip(np.floor((prev + starts[ia][None] - lo) / sp).astype(np.int64), 0, top)
        Fc = F[ia][None] + h * np.cumsum(rates[ix[..., 0], ix[..., 1]], axis=0)
        rr = np.hypot(p[..., 0], p[..., 1])
        for col, i in enumerate(ia):
            while nxt[i] < rho.size:
                hit = np.flatnonzero(rr[:, col] >= rho[nxt[i]])
                if hit.size == 0:
                    break
                vals[i, nxt[i]] = Fc[hit[0], col]
                nxt[i] += 1
            if nxt[i] == rho.size:
                alive[i] = False
        F[ia] = Fc[-1]
        cur[ia] = p[-1]
        steps += CHUNK
    return vals, ~alive


def exit_moment_experiment(config: ExitExperimentConfig, threads: int = 1) -> ExitMoments:
    """Run all replicas; radii are reported in the configured (decreasing) order."""
    grid = config.grid()
    factor = factor_for(config.kernel(), grid, method="circulant")
    starts = config.starts()
    order = np.argsort(config.radii)
    rho = np.sqrt(np.asarray(config.radii)[order])
    seeds = [derive_seed(config.seed, "lbm-exit", i) for i in range(config.replicas)]

    def one(seed: int):
        fld = sample_field(factor, derive_seed(seed, "field"))
        rates = np.exp(config.gamma * fld.values - 0.5 * config.gamma**2 * fld.diag_variances)
        vals, ok = _exit_values(rates, grid, starts, rho, config.h, stream(seed, 1), config.max_steps)
        out = np.empty_like(vals)
        out[:, order] = vals
        return out, ok, float(rates.min())

    res = pmap(one, seeds, threads)
    values = np.stack([r[0] for r in res])
    reached = np.stack([r[1] for r in res])
    min_rates = np.array([r[2] for r in res])
    return ExitMoments(np.asarray(config.radii), values, reached, seeds, min_rates)


def exit_moment_slope(config: ExitExperimentConfig, q: float, threads: int = 1) -> SlopeFit:
    if config.gamma and q >= 4 / config.gamma**2:
        raise ValueError("q must be below 4 / gamma^2")
    return exit_moment_experiment(config, threads).slope(q)


# refinement study


@dataclass(frozen=True, eq=False)
class RefinementResult:
    """``totals[replica, path, j]`` is ``F_{2^-levels[j]}(T)`` for frozen paths."""

    levels: np.ndarray
    totals: np.ndarray
    exit_times: np.ndarray
    clipped_masses: list[float]

    def differences(self) -> np.ndarray:
        """Mean absolute change of ``F(T)`` between consecutive levels."""
        return np.mean(np.abs(np.diff(self.totals, axis=2)), axis=(0, 1))

    def difference_stderr(self) -> np.ndarray:
        d = np.abs(np.diff(self.totals, axis=2)).reshape(-1, self.levels.size - 1)
        return d.std(axis=0, ddof=1) / math.sqrt(d.shape[0])

    def normalized_means(self) -> np.ndarray:
        return np.mean(self.totals / self.exit_times[None, :, None], axis=(0, 1))


def clock_refinement(
    gamma: float,
    levels: Sequence[int],
    replicas: int,
    paths: int,
    h: float,
    seed: int,
    half_side: float = 0.5,
    g: float = math.log(4.0),
    threads: int = 1,
    oversample: int = 2,
) -> RefinementResult:
    """``F_eps(T)`` for ``eps = 2^-m`` along frozen exit paths from ``(-a, a)^2``.

    The fields are partial sums of one layered field per replica, so the
    levels are coupled as a martingale in ``m``. The field grid has
    ``oversample`` cells per finest scale so the last layer is resolved.
    """
    _check_gamma(gamma)
    levels = np.asarray(sorted(levels), dtype=int)
    depth = int(levels.max())
    spec = KernelSpec(2, (-half_side, -half_side), (half_side, half_side), 2.0**-depth, g, "log")
    if oversample < 1:
        raise ValueError("oversample must be at least 1")
    cells = int(round(2 * half_side * 2**depth * oversample))
    lf = layered_factor(spec, depth, Grid.uniform(spec.lower, spec.upper, cells), method="circulant")
    lo, hi = (-half_side, -half_side), (half_side, half_side)
    frozen = [simulate_brownian_exit(lo, hi, h, derive_seed(seed, "lbm-refine-path", p)) for p in range(paths)]
    idx = [lf.grid.locate(pth.positions[:-1]) for pth in frozen]
    T = np.array([pth.exit_index * h for pth in frozen])
    seeds = [derive_seed(seed, "lbm-refine", i) for i in range(replicas)]

    def one(s: int):
        layered = lf.sample(s)
        out = np.empty((paths, levels.size))
        for j, m in enumerate(levels):
            S = layered.partial_sums[m - 1]
            v = layered.variances[m - 1]
            for p, ip in enumerate(idx):
                out[p, j] = h * np.sum(np.exp(gamma * S[ip] - 0.5 * gamma**2 * v[ip]))
        return out

    totals = np.stack(pmap(one, seeds, threads))
    return RefinementResult(levels, totals, T, lf.clipped_masses)
