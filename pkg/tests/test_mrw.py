import math

import numpy as np
import pytest
from scipy import stats

from multichaos.fields import Grid, KernelSpec, factor_for, sample_field
from multichaos.gmc import GmcParams, GridMeasure, gmc_from_field
from multichaos.mfa import theoretical_xi
from multichaos.rng import derive_seed
from multichaos.mrw import (
    PathSeries,
    cell_boundaries,
    mrw_lower_support,
    mrw_structure_slope,
    path_lower_dimension,
    simulate_brownian,
    simulate_mrw,
    theoretical_mrw_lower_spectrum,
)


def _clock(gamma, n, seed):
    spec = KernelSpec(1, epsilon=2.0**-n)
    return gmc_from_field(sample_field(factor_for(spec, spec.grid(2**n)), seed), GmcParams(gamma))


def test_path_validation():
    with pytest.raises(ValueError):
        PathSeries(np.array([0.0, 0.0]), np.zeros(2), "mrw")
    with pytest.raises(ValueError):
        PathSeries(np.array([0.0, 1.0]), np.zeros(2), "levy")
    p = PathSeries(np.array([0.0, 1.0]), np.array([0.0, 2.0]), "brownian")
    assert p.at(0.25)[0, 0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        p.at(2.0)


def test_uniform_boundaries_are_exact_multiples():
    b = cell_boundaries(np.full(8, 0.125))
    assert np.array_equal(b, 0.125 * np.arange(9))


def test_gamma_zero_walk_is_brownian_bit_for_bit():
    leb = GridMeasure.lebesgue(Grid.uniform((0.0,), (1.0,), 256))
    a = simulate_mrw(leb, 2, 5)
    b = simulate_brownian(np.full(256, 1 / 256), 2, 5)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.times, b.times)


def test_gamma_zero_endpoint_variance():
    leb = GridMeasure.lebesgue(Grid.uniform((0.0,), (1.0,), 256))
    z = np.array([simulate_mrw(leb, 1, s).positions[-1, 0] for s in range(1000)])
    var = z.var(ddof=1)
    assert abs(var - 1) <= 3 * math.sqrt(2 / z.size)


def test_zero_mass_keeps_walk_still():
    masses = np.r_[np.full(4, 0.25), np.zeros(4)]
    z = simulate_mrw(GridMeasure(masses, (0.0,), (1.0,)), 1, 0).positions[:, 0]
    assert np.all(z[4:] == z[4])


def test_quadratic_variation_tracks_clock_mass():
    m = _clock(0.7, 12, 1)
    qv = []
    for s in range(200):
        z = simulate_mrw(m, 2, derive_seed(s, "walk")).positions
        qv.append(np.sum(np.diff(z, axis=0) ** 2))
    sd = math.sqrt(2 * 2 * np.sum(m.masses**2) / len(qv))
    assert abs(np.mean(qv) - 2 * m.total_mass) <= 3 * sd


def test_normalized_increments_are_gaussian():
    m = _clock(1.0, 12, 2)
    z = simulate_mrw(m, 1, 3).positions[:, 0]
    u = np.diff(z) / np.sqrt(m.masses)
    assert stats.kstest(u, "norm").pvalue > 0.01


def test_coordinates_are_independent():
    m = _clock(1.0, 12, 4)
    z = simulate_mrw(m, 2, 5).positions
    u = np.diff(z, axis=0) / np.sqrt(m.masses)[:, None]
    assert abs(np.corrcoef(u.T)[0, 1]) <= 4 / math.sqrt(u.shape[0])


def test_noninterval_clock_rejected():
    leb2 = GridMeasure.lebesgue(Grid.uniform((0.0, 0.0), (1.0, 1.0), 8))
    with pytest.raises(ValueError):
        simulate_mrw(leb2, 1, 0)


def test_brownian_structure_slope():
    leb = GridMeasure.lebesgue(Grid.uniform((0.0,), (1.0,), 2**14))
    paths = [simulate_mrw(leb, 1, s) for s in range(16)]
    lags = [2.0**-k for k in range(4, 10)]
    for q in (1.0, 2.0, 3.0):
        assert abs(mrw_structure_slope(paths, q, lags).slope - q / 2) <= 0.05


def test_mrw_structure_slope_q_two():
    paths = [simulate_mrw(_clock(0.6, 14, s), 1, derive_seed(s, "walk")) for s in range(16)]
    lags = [2.0**-k for k in range(4, 10)]
    assert abs(mrw_structure_slope(paths, 2.0, lags).slope - theoretical_xi(1.0, 0.6)) <= 0.1


def test_structure_lags_must_fit_grid():
    leb = GridMeasure.lebesgue(Grid.uniform((0.0,), (1.0,), 64))
    p = simulate_mrw(leb, 1, 0)
    with pytest.raises(ValueError):
        mrw_structure_slope([p], 1.0, [0.3 / 64, 0.1])


def test_lower_spectrum_examples():
    assert theoretical_mrw_lower_spectrum(0.5, 1.0) == pytest.approx(0.875)
    lo, hi = mrw_lower_support(1.0)
    assert theoretical_mrw_lower_spectrum(hi + 0.1, 1.0) == 0.0
    assert lo == pytest.approx((1 / math.sqrt(2) - 0.5) ** 2)
    alpha = np.linspace(lo, hi, 50)
    from multichaos.mfa import theoretical_spectrum

    assert np.allclose(theoretical_mrw_lower_spectrum(alpha, 0.8), theoretical_spectrum(2 * alpha, 0.8))
    with pytest.raises(ValueError):
        theoretical_mrw_lower_spectrum(0.5, 1.5)


def test_path_dimension_linear_and_constant():
    t = np.linspace(0, 1, 1025)
    radii = [2.0**-k for k in range(3, 8)]
    lin = PathSeries(t, t, "brownian")
    assert path_lower_dimension(lin, 0.5, radii).estimate == pytest.approx(1.0)
    flat = PathSeries(t, np.zeros_like(t), "brownian")
    pd = path_lower_dimension(flat, 0.5, radii)
    assert pd.flag == "constant" and math.isinf(pd.estimate) and math.isinf(pd.liminf_proxy)
    with pytest.raises(ValueError):
        path_lower_dimension(lin, 0.01, radii)


def test_brownian_path_dimension_median():
    p = simulate_brownian(np.full(2**16, 2.0**-16), 1, 9)
    radii = [2.0**-k for k in range(5, 11)]
    ts = np.linspace(0.1, 0.9, 200)
    est = [path_lower_dimension(p, t, radii).estimate for t in ts]
    assert abs(np.median(est) - 0.5) <= 0.1
