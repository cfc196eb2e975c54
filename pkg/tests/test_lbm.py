import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multichaos.fields import FieldGrid, Grid, KernelSpec, factor_for, sample_field
from multichaos.lbm import (
    ClockProcess,
    ExitExperimentConfig,
    clock_from_path,
    clock_refinement,
    exit_moment_experiment,
    exit_moment_slope,
    invert_clock,
    lbm_path,
    lbm_spectrum_support,
    mu_measure,
    mu_minus_measure,
    mu_spectrum_support,
    simulate_brownian_exit,
    theoretical_lbm_lower_spectrum,
    theoretical_mu_spectrum,
    theoretical_xi_mu,
)
from multichaos.mfa import partition_sum
from multichaos.mrw import PathSeries
from multichaos.rng import derive_seed

BOX = ((-1.0, -1.0), (1.0, 1.0))


def _square_exit_time(a: float = 1.0, terms: int = 50) -> float:
    """Mean exit time of planar Brownian motion from the centre of (-a, a)^2."""
    n = np.arange(1, 2 * terms, 2)
    series = np.sum((-1.0) ** ((n - 1) // 2) / (n**3 * np.cosh(n * np.pi / 2)))
    return a * a * (1 - 32 / np.pi**3 * series)


def _zero_field(lower=(-4.0, -4.0), upper=(4.0, 4.0), cells=64):
    grid = Grid.uniform(lower, upper, cells)
    return FieldGrid(grid, np.zeros(grid.shape), None, np.zeros(grid.shape), 0)


@pytest.fixture(scope="module")
def exit_path():
    return simulate_brownian_exit(*BOX, 1e-3, 7)


def test_exit_path_ends_outside():
    p = simulate_brownian_exit(*BOX, 1e-3, 1)
    assert p.exit_index == p.times.size - 1
    assert np.any(np.abs(p.positions[-1]) >= 1)
    assert np.all(np.abs(p.positions[:-1]) < 1)
    assert np.array_equal(p.positions, simulate_brownian_exit(*BOX, 1e-3, 1).positions)


def test_exit_origin_must_be_interior_and_cap():
    with pytest.raises(ValueError, match="interior"):
        simulate_brownian_exit((0.0, -1.0), (1.0, 1.0), 1e-3, 0)
    with pytest.raises(RuntimeError, match="no exit"):
        simulate_brownian_exit(*BOX, 1e-6, 0, max_steps=100)


def test_mean_exit_time_matches_series():
    h = 1e-4
    t = np.array([simulate_brownian_exit(*BOX, h, derive_seed(3, i)).exit_index * h for i in range(500)])
    # discrete monitoring overshoots the boundary by about 0.5826 sqrt(h)
    target = _square_exit_time(1 + 0.5826 * math.sqrt(h))
    assert abs(t.mean() - target) <= 3 * t.std(ddof=1) / math.sqrt(t.size)
    assert _square_exit_time() == pytest.approx(0.5894, abs=1e-4)


def test_gamma_zero_clock_is_identity(exit_path):
    c = clock_from_path(exit_path, _zero_field(), 0.0)
    assert np.allclose(c.values, c.knots, rtol=1e-12, atol=1e-15)
    assert c.strictly_increasing


def test_single_step_clock():
    path = PathSeries(np.array([0.0, 0.01]), np.array([[0.0, 0.0], [0.2, 0.0]]), "brownian")
    f = _zero_field()
    f.values[f.grid.locate(np.zeros((1, 2)))] = 0.3
    f.diag_variances[...] = 0.5
    c = clock_from_path(path, f, 1.0)
    assert c.total == pytest.approx(0.01 * math.exp(0.3 - 0.25))


def test_clock_lookup_outside_grid_names_index():
    path = PathSeries(np.array([0.0, 0.01, 0.02]), np.array([[0.0, 0.0], [9.0, 0.0], [0.0, 0.0]]), "brownian")
    with pytest.raises(ValueError, match="point index 1"):
        clock_from_path(path, _zero_field(), 1.0)


def test_clock_rejects_supercritical_gamma(exit_path):
    with pytest.raises(ValueError):
        clock_from_path(exit_path, _zero_field(), 2.0)


def test_clock_has_unit_mean_rate(exit_path):
    spec = KernelSpec(2, (-4.0, -4.0), (4.0, 4.0), 1 / 16, 0.0, "log_plus")
    fac = factor_for(spec, spec.grid(128), "circulant")
    totals = np.array([clock_from_path(exit_path, sample_field(fac, s), 1.0).total for s in range(500)])
    T = exit_path.exit_index * 1e-3
    assert abs(totals.mean() - T) <= 3 * totals.std(ddof=1) / math.sqrt(totals.size)


def test_mu_measure_and_partition_sum(exit_path):
    spec = KernelSpec(2, (-4.0, -4.0), (4.0, 4.0), 1 / 16, 0.0, "log_plus")
    c = clock_from_path(exit_path, sample_field(factor_for(spec, spec.grid(128), "circulant"), 0), 1.0)
    mu = mu_measure(c)
    assert mu.total_mass == pytest.approx(c.total, rel=1e-12)
    assert partition_sum(mu, 4, 1.0) == pytest.approx(c.total, rel=1e-12)
    flat = mu_measure(clock_from_path(exit_path, _zero_field(), 0.0))
    assert np.allclose(flat.masses, 1e-3)


def test_clock_validation():
    with pytest.raises(ValueError):
        ClockProcess(np.array([0.0, 1.0]), np.array([0.0, -1.0]))
    with pytest.raises(ValueError):
        ClockProcess(np.array([1.0, 2.0]), np.array([0.0, 1.0]))
    flat = ClockProcess(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 1.0]))
    assert not flat.strictly_increasing


def test_invert_clock_examples():
    c = ClockProcess(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.0, 2.0, 2.0, 5.0]))
    assert invert_clock(c, 0.0) == 0.0
    assert invert_clock(c, 1.0) == pytest.approx(0.5)
    # smallest s on the flat piece
    assert invert_clock(c, 2.0) == 1.0
    assert invert_clock(c, 3.5) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        invert_clock(c, 5.5)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=40), st.floats(0, 1))
def test_invert_clock_round_trip(rates, u):
    rates = np.asarray(rates)
    knots = np.arange(rates.size + 1) * 0.1
    c = ClockProcess(knots, np.r_[0.0, np.cumsum(rates * 0.1)])
    target = u * c.total
    s = invert_clock(c, target)
    assert abs(np.interp(s, c.knots, c.values) - target) <= 1e-12 * c.total
    assert np.all(np.diff(c.values) > 0)


def test_lbm_path_gamma_zero_and_endpoint(exit_path):
    c0 = clock_from_path(exit_path, _zero_field(), 0.0)
    same = lbm_path(exit_path, c0, c0.values)
    assert np.allclose(same.positions, exit_path.positions, atol=1e-12)
    spec = KernelSpec(2, (-4.0, -4.0), (4.0, 4.0), 1 / 16, 0.0, "log_plus")
    c = clock_from_path(exit_path, sample_field(factor_for(spec, spec.grid(128), "circulant"), 1), 1.0)
    end = lbm_path(exit_path, c, [c.total])
    assert np.allclose(end.positions[0], exit_path.positions[-1])
    knots = lbm_path(exit_path, c, c.values)
    assert np.array_equal(knots.positions, exit_path.positions)
    with pytest.raises(ValueError):
        lbm_path(exit_path, c, [c.total * 2])


def test_mu_minus_measure_mass_is_exit_time(exit_path):
    spec = KernelSpec(2, (-4.0, -4.0), (4.0, 4.0), 1 / 16, 0.0, "log_plus")
    c = clock_from_path(exit_path, sample_field(factor_for(spec, spec.grid(128), "circulant"), 2), 1.0)
    m = mu_minus_measure(c, 256)
    assert m.total_mass == pytest.approx(c.T, rel=1e-9)


def test_lbm_closed_forms():
    assert theoretical_xi_mu(1.0, 1.0) == pytest.approx(1.0)
    assert theoretical_xi_mu(2.0, 1.0) == pytest.approx(1.5)
    lo, hi = lbm_spectrum_support(1.0)
    assert lo == pytest.approx(1 / 4.5) and hi == pytest.approx(2.0)
    assert theoretical_lbm_lower_spectrum(0.5, 1.0) == pytest.approx(0.9375)
    assert theoretical_mu_spectrum(1.0, 1.0) == pytest.approx(0.9375)
    assert theoretical_mu_spectrum(1 + 1 / 4, 1.0) == pytest.approx(1.0)
    assert theoretical_mu_spectrum(3.0, 1.0) == 0.0
    assert mu_spectrum_support(1.0) == pytest.approx((0.25, 2.25))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 1.9), st.floats(0, 1))
def test_lbm_spectrum_chain_identity(gamma, u):
    lo, hi = lbm_spectrum_support(gamma)
    a = lo + u * (hi - lo)
    lhs = theoretical_lbm_lower_spectrum(a, gamma)
    rhs = 2 * a * theoretical_mu_spectrum(1 / (2 * a), gamma)
    assert abs(lhs - rhs) <= 1e-12


def test_exit_config_validation():
    with pytest.raises(ValueError):
        ExitExperimentConfig(2.0, (0.25, 0.125), 1e-5, 2, 0)
    with pytest.raises(ValueError):
        ExitExperimentConfig(1.0, (0.25, 0.125), 1e-3, 2, 0)
    with pytest.raises(ValueError):
        ExitExperimentConfig(1.0, (0.125, 0.25), 1e-5, 2, 0)
    with pytest.raises(ValueError, match="below"):
        exit_moment_slope(ExitExperimentConfig(1.5, (0.25, 0.125), 1e-5, 1, 0), 2.0)


def test_gamma_zero_exit_moments_scale_like_r_to_the_q():
    cfg = ExitExperimentConfig(0.0, (0.25, 0.125, 0.0625), 0.0625**2 / 100, 25, 11, tiles=2, cells_per_unit=16)
    res = exit_moment_experiment(cfg)
    assert res.n_excluded == 0
    assert np.all(res.min_rates == 1.0)
    for q in (0.5, 1.0, 2.0):
        assert abs(res.slope(q).slope - q) <= 0.1


def test_exit_experiment_is_thread_independent():
    cfg = ExitExperimentConfig(1.0, (0.25, 0.0625), 0.0625**2 / 100, 3, 5, tiles=2, cells_per_unit=16)
    a = exit_moment_experiment(cfg, 1)
    b = exit_moment_experiment(cfg, 3)
    assert a.values.tobytes() == b.values.tobytes()


def test_small_refinement_run():
    res = clock_refinement(1.0, [3, 4, 5], replicas=16, paths=2, h=1e-3, seed=0)
    assert res.totals.shape == (16, 2, 3)
    assert np.all(res.totals > 0)
    assert res.differences().shape == (2,)
    assert max(res.clipped_masses) <= 0.02
    mild = clock_refinement(0.5, [3, 5], replicas=64, paths=2, h=1e-3, seed=1)
    z = mild.totals[:, :, -1] / mild.exit_times[None, :]
    assert abs(z.mean() - 1) <= 4 * z.std(ddof=1) / math.sqrt(z.size)
