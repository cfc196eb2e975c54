"""Multifractal analysis: partition sums, L^q-spectra, Legendre transforms,
local dimensions, coarse spectra and the closed-form chaos spectra."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .gmc import GridMeasure, SubcriticalityError, ball_masses_1d, ball_mass, _check_radii
from .regression import SlopeFit, fit_line

CURVE_KINDS = ("tau_estimated", "tau_theory", "spectrum_theory", "spectrum_coarse", "legendre_numeric", "tau_legendre_numeric")
EMPTY = "empty-level-set"
ABSENT = "absent"
DEGENERATE = "degenerate"


@dataclass(frozen=True, eq=False)
class SpectrumCurve:
    """A sampled function with per-point standard errors and flags.

    ``flags`` holds an empty string for regular points. Ordinates may be
    non-finite only where a flag is set.
    """

    abscissa: np.ndarray
    ordinate: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)
    stderr: np.ndarray | None = None
    flags: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.abscissa, dtype=float)
        y = np.asarray(self.ordinate, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("abscissa and ordinate must be 1-D of equal length")
        if x.size > 1 and np.any(np.diff(x) <= 0):
            raise ValueError("abscissa must be strictly increasing")
        if self.kind not in CURVE_KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        flags = np.full(x.size, "", dtype=object) if self.flags is None else np.asarray(self.flags, dtype=object)
        if flags.shape != x.shape:
            raise ValueError("flags must match the abscissa")
        if np.any(~np.isfinite(y) & (flags == "")):
            raise ValueError("non-finite ordinates must be flagged")
        se = None if self.stderr is None else np.asarray(self.stderr, dtype=float)
        object.__setattr__(self, "abscissa", x)
        object.__setattr__(self, "ordinate", y)
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "stderr", se)

    def flagged(self) -> np.ndarray:
        return self.flags != ""


# closed forms


def _check_gamma(gamma: float, d: int) -> None:
    if gamma**2 >= 2 * d:
        raise SubcriticalityError(f"gamma^2 = {gamma**2:g} must be below 2d = {2 * d}")


def theoretical_xi(q, gamma: float, d: int = 1):
    """Power-law moment exponent ``(d + gamma^2/2) q - (gamma^2/2) q^2``."""
    q = np.asarray(q, dtype=float)
    return (d + gamma**2 / 2) * q - (gamma**2 / 2) * q**2


def _xi_prime(q, gamma: float, d: int):
    return d + gamma**2 / 2 - gamma**2 * q


def critical_q(gamma: float, d: int = 1) -> tuple[float, float]:
    """Breakpoints ``(-sqrt(2d)/|gamma|, sqrt(2d)/|gamma|)`` of the L^q-spectrum."""
    qp = math.sqrt(2 * d) / abs(gamma)
    return -qp, qp


def structure_phi(q, gamma: float, d: int = 1):
    """Structure function ``d - xi(q)``."""
    return d - theoretical_xi(q, gamma, d)


def tau_branches(q, gamma: float, d: int = 1):
    """The three analytic pieces (lower linear, parabolic, upper linear) at ``q``."""
    q = np.asarray(q, dtype=float)
    qm, qp = critical_q(gamma, d)
    # d - xi(q) factored so that q = 0 and q = 1 are exact
    mid = (1 - q) * (d - 0.5 * gamma**2 * q)
    return (-_xi_prime(qm, gamma, d) * q, mid, -_xi_prime(qp, gamma, d) * q)


def theoretical_tau(q, gamma: float, d: int = 1):
    """Closed-form L^q-spectrum of the chaos measure (piecewise, continuous)."""
    _check_gamma(gamma, d)
    q = np.asarray(q, dtype=float)
    if gamma == 0:
        return d * (1 - q)
    qm, qp = critical_q(gamma, d)
    low, mid, high = tau_branches(q, gamma, d)
    return np.where(q <= qm, low, np.where(q >= qp, high, mid))


def spectrum_support(gamma: float, d: int = 1) -> tuple[float, float]:
    """Endpoints ``((sqrt d - |gamma|/sqrt 2)^2, (sqrt d + |gamma|/sqrt 2)^2)``."""
    a = math.sqrt(d)
    b = abs(gamma) / math.sqrt(2)
    return (a - b) ** 2, (a + b) ** 2


def theoretical_spectrum(alpha, gamma: float, d: int = 1):
    """Singularity spectrum ``d - ((d - alpha)/gamma + gamma/2)^2 / 2`` on its support, else 0."""
    _check_gamma(gamma, d)
    alpha = np.asarray(alpha, dtype=float)
    if gamma == 0:
        return np.where(alpha == d, float(d), 0.0)
    lo, hi = spectrum_support(gamma, d)
    val = d - 0.5 * ((d - alpha) / gamma + gamma / 2) ** 2
    return np.where((alpha >= lo) & (alpha <= hi), val, 0.0)


def alpha_q(q, gamma: float, d: int = 1):
    """Local dimension ``d + (1/2 - q) gamma^2`` of the chaos measure at points typical for the q-tilted chaos."""
    return d + (0.5 - np.asarray(q, dtype=float)) * gamma**2


def tau_theory_curve(q, gamma: float, d: int = 1) -> SpectrumCurve:
    q = np.asarray(q, dtype=float)
    return SpectrumCurve(q, theoretical_tau(q, gamma, d), "tau_theory", {"gamma": gamma, "d": d})


def spectrum_theory_curve(alpha, gamma: float, d: int = 1) -> SpectrumCurve:
    alpha = np.asarray(alpha, dtype=float)
    return SpectrumCurve(alpha, theoretical_spectrum(alpha, gamma, d), "spectrum_theory", {"gamma": gamma, "d": d})


# partition sums


@dataclass(frozen=True, eq=False)
class PartitionTable:
    """``values[i, j] = S_{levels[i]}(q[j])`` for one measure replica."""

    levels: np.ndarray
    q: np.ndarray
    values: np.ndarray
    replica: int = 0


def box_masses(measure: GridMeasure, n: int) -> np.ndarray:
    """Masses of the ``2^n`` boxes per axis; a cell belongs to the box holding its centre."""
    if n < 0:
        raise ValueError("level must be non-negative")
    boxes = 2**n
    m = measure.masses
    if any(boxes > s for s in m.shape):
        raise ValueError(f"level {n} is finer than the measure ({m.shape} cells)")
    if all(s % boxes == 0 for s in m.shape):
        shape = []
        for s in m.shape:
            shape += [boxes, s // boxes]
        return m.reshape(shape).sum(axis=tuple(range(1, 2 * m.ndim, 2)))
    out = m
    for axis, s in enumerate(m.shape):
        ids = np.minimum(((np.arange(s) + 0.5) * boxes / s).astype(np.int64), boxes - 1)
        starts = np.searchsorted(ids, np.arange(boxes))
        out = np.add.reduceat(out, starts, axis=axis)
    return out


def _power_sum(masses: np.ndarray, q: float) -> float:
    pos = masses[masses > 0]
    if q == 0:
        return float(pos.size)
    if q == 1:
        return float(np.sum(pos))
    return float(np.sum(pos**q))


def partition_sum(measure: GridMeasure, n: int, q: float) -> float:
    """``S_n(q)``: sum of ``mass^q`` over level-``n`` boxes with positive mass."""
    return _power_sum(box_masses(measure, n), q)


def partition_table(measure: GridMeasure, levels: Sequence[int], q: Sequence[float], replica: int = 0) -> PartitionTable:
    levels = np.asarray(levels, dtype=int)
    q = np.asarray(q, dtype=float)
    vals = np.empty((levels.size, q.size))
    for i, n in enumerate(levels):
        bm = box_masses(measure, int(n))
        for j, qj in enumerate(q):
            vals[i, j] = _power_sum(bm, qj)
    return PartitionTable(levels, q, vals, replica)


def estimate_tau(tables: Iterable[PartitionTable], levels: Sequence[int] | None = None) -> SpectrumCurve:
    """Regression estimate of the L^q-spectrum from replica-averaged partition sums.

    For each ``q`` the estimate is the slope of ``log mean S_n(q)`` against
    ``n log 2`` over the level window, so Lebesgue measure in 1-D gives
    ``1 - q``.
    """
    tables = list(tables)
    if not tables:
        raise ValueError("no partition tables")
    base = tables[0]
    for t in tables[1:]:
        if not (np.array_equal(t.levels, base.levels) and np.array_equal(t.q, base.q)):
            raise ValueError("partition tables must share levels and q grid")
    rows = np.ones(base.levels.size, dtype=bool) if levels is None else np.isin(base.levels, levels)
    if rows.sum() < 3:
        raise ValueError("need at least three levels in the window")
    lv = base.levels[rows]
    mean = np.mean([t.values[rows] for t in tables], axis=0)
    order = np.argsort(base.q)
    tau = np.empty(base.q.size)
    se = np.empty(base.q.size)
    flags = np.full(base.q.size, "", dtype=object)
    for j in range(base.q.size):
        fit = fit_line(lv * math.log(2.0), np.log(mean[:, j]))
        tau[j], se[j] = fit.slope, fit.stderr
        if fit.flag:
            flags[j] = fit.flag
    meta = {"levels": [int(lv.min()), int(lv.max())], "replicas": len(tables)}
    return SpectrumCurve(base.q[order], tau[order], "tau_estimated", meta, se[order], flags[order])


# Legendre transforms


def _lower_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull vertices of points sorted by ``x``."""
    hull: list[int] = []
    for i in range(x.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull)


def legendre(curve: SpectrumCurve, alpha: Sequence[float]) -> SpectrumCurve:
    """Numeric ``inf_q (alpha q + tau(q))`` over the sampled q grid.

    A minimum sitting at a window edge with the objective still decreasing
    there, or a negative minimum, is reported as 0 with the flag
    ``"empty-level-set"``. Ties resolve to the smallest minimizing ``q``.
    """
    q = curve.abscissa
    t = curve.ordinate
    ok = ~curve.flagged() & np.isfinite(t)
    q, t = q[ok], t[ok]
    if q.size < 2:
        raise ValueError("need at least two sampled points")
    alpha = np.asarray(alpha, dtype=float)
    hull = _lower_hull(q, t)
    hq, ht = q[hull], t[hull]
    slopes = np.diff(ht) / np.diff(hq)
    # vertex k minimizes alpha q + tau when edges before it descend and edge k does not
    k = np.searchsorted(slopes, -alpha, side="left")
    vals = alpha * hq[k] + ht[k]
    flags = np.full(alpha.size, "", dtype=object)
    left_dec = (k == 0) & (alpha + slopes[0] > 0)
    right_dec = k == hq.size - 1
    empty = left_dec | right_dec | (vals < 0)
    vals = np.where(empty, 0.0, vals)
    flags[empty] = EMPTY
    meta = dict(curve.meta)
    meta.update({"q_window": [float(q[0]), float(q[-1])], "q_points": int(q.size), "source": curve.kind})
    return SpectrumCurve(alpha, vals, "legendre_numeric", meta, None, flags)


def legendre_inverse(curve: SpectrumCurve, q: Sequence[float]) -> SpectrumCurve:
    """Numeric ``sup_alpha (f(alpha) - alpha q)`` over the unflagged points of a spectrum."""
    ok = ~curve.flagged() & np.isfinite(curve.ordinate)
    a = curve.abscissa[ok]
    f = curve.ordinate[ok]
    if a.size < 2:
        raise ValueError("need at least two unflagged spectrum points")
    q = np.asarray(q, dtype=float)
    # the sup of a linear objective is reached on the upper hull, i.e. the lower hull of -f
    hull = _lower_hull(a, -f)
    ha, hf = a[hull], f[hull]
    slopes = np.diff(hf) / np.diff(ha)
    # maximize f(alpha) - alpha q: move right while the hull slope exceeds q
    k = np.searchsorted(-slopes, -q, side="left")
    vals = hf[k] - ha[k] * q
    meta = dict(curve.meta)
    meta.update({"alpha_window": [float(a[0]), float(a[-1])], "source": curve.kind})
    return SpectrumCurve(q, vals, "tau_legendre_numeric", meta)


# local dimensions and coarse spectra


@dataclass(frozen=True, eq=False)
class LocalDimension:
    """Log-log slope of ball masses plus the per-radius ratios ``log M / log r``."""

    fit: SlopeFit
    ratios: np.ndarray

    @property
    def slope(self) -> float:
        return self.fit.slope

    @property
    def lower(self) -> float:
        return float(np.min(self.ratios))

    @property
    def upper(self) -> float:
        return float(np.max(self.ratios))


def _local_from_masses(masses: np.ndarray, radii: np.ndarray) -> LocalDimension:
    if masses[0] <= 0:
        raise ValueError("zero mass at the largest radius")
    if np.any(masses <= 0):
        raise ValueError("zero ball mass at some radius")
    logm = np.log(masses)
    logr = np.log(radii)
    return LocalDimension(fit_line(logr, logm), logm / logr)


def local_dimension(measure: GridMeasure, x, radii: Sequence[float]) -> LocalDimension:
    """Regression of ``log M(B(x, r))`` on ``log r`` (radii strictly decreasing)."""
    r = _check_radii(radii, min(measure.grid.spacing))
    masses = np.array([ball_mass(measure, x, rk) for rk in r])
    return _local_from_masses(masses, r)


def local_dimensions(measure: GridMeasure, xs: np.ndarray, radii: Sequence[float]) -> list[LocalDimension]:
    """Vectorized :func:`local_dimension` for many 1-D points."""
    r = _check_radii(radii, min(measure.grid.spacing))
    xs = np.asarray(xs, dtype=float).reshape(-1)
    if measure.d != 1:
        return [local_dimension(measure, [x], r) for x in xs]
    table = np.stack([ball_masses_1d(measure, xs, rk) for rk in r], axis=1)
    return [_local_from_masses(row, r) for row in table]


def coarse_spectrum(
    measures: GridMeasure | Iterable[GridMeasure],
    n: int,
    alpha: Sequence[float],
    delta: float = 0.15,
) -> SpectrumCurve:
    """Histogram spectrum ``log N_n(alpha) / (n log 2)``.

    ``N_n(alpha)`` is the replica-averaged number of level-``n`` boxes with
    mass in ``[2^{-n(alpha+delta)}, 2^{-n(alpha-delta)}]``. Bins with no box
    are flagged ``"absent"`` and carry NaN.
    """
    if n < 6:
        raise ValueError("coarse spectrum needs level n >= 6")
    if isinstance(measures, GridMeasure):
        measures = [measures]
    alpha = np.asarray(alpha, dtype=float)
    counts = []
    for meas in measures:
        bm = box_masses(meas, n).ravel()
        bm = bm[bm > 0]
        ahat = np.log(bm) / (-n * math.log(2.0))
        ahat.sort()
        lo = np.searchsorted(ahat, alpha - delta, "left")
        hi = np.searchsorted(ahat, alpha + delta, "right")
        counts.append(hi - lo)
    mean = np.mean(counts, axis=0)
    flags = np.where(mean > 0, "", ABSENT).astype(object)
    with np.errstate(divide="ignore"):
        f = np.where(mean > 0, np.log(np.where(mean > 0, mean, 1.0)) / (n * math.log(2.0)), np.nan)
    meta = {"level": n, "delta": delta, "replicas": len(counts)}
    return SpectrumCurve(alpha, f, "spectrum_coarse", meta, None, flags)
