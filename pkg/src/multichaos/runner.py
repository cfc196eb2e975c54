"""Config-driven experiments with manifests, replay and reports."""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .config import SCHEMAS, ExperimentConfig, build_config
from .fields import Grid, KernelSpec, build_kernel, factor_for, layered_factor, sample_field
from .gmc import (
    GmcParams,
    GridMeasure,
    ball_moments,
    gmc_from_field,
    interior_centers,
    rooted_field,
    rooted_layered,
    sample_points,
    thick_point_box_count,
    thick_point_exponent,
)
from .io import dump_field, fmt, read_csv, write_csv, write_json, write_path_csv, write_curve
from .lbm import (
    ExitExperimentConfig,
    clock_from_path,
    clock_refinement,
    exit_moment_experiment,
    lbm_spectrum_support,
    simulate_brownian_exit,
    theoretical_lbm_lower_spectrum,
    theoretical_mu_spectrum,
    theoretical_xi_mu,
)
from .mfa import (
    alpha_q,
    coarse_spectrum,
    critical_q,
    estimate_tau,
    legendre,
    legendre_inverse,
    local_dimensions,
    partition_table,
    spectrum_support,
    spectrum_theory_curve,
    tau_branches,
    tau_theory_curve,
    theoretical_spectrum,
    theoretical_tau,
    theoretical_xi,
)
from .mrw import (
    mrw_lower_support,
    simulate_brownian,
    simulate_mrw,
    structure_moments,
    theoretical_mrw_lower_spectrum,
)
from .parallel import pmap
from .regression import fit_line
from .rng import derive_seed, replica_seeds, stream

MANIFEST = "manifest.json"
CHECKS = "checks.csv"
CHECK_COLUMNS = ["check", "estimate", "target", "tolerance", "pass"]
CLOCK_CHECK_REPLICAS = 4


@dataclass
class RunContext:
    """Collects outputs, checks and diagnostics of one run."""

    config: ExperimentConfig
    out: Path
    threads: int = 1
    outputs: list[str] = field(default_factory=list)
    checks: list[tuple] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    jitter_events: list[dict] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def p(self) -> dict:
        return self.config.params

    def replica_seeds(self, count: int, label: str | None = None) -> list[int]:
        seeds = replica_seeds(self.config.seed, label or self.config.kind, count)
        self.seeds.extend(seeds)
        return seeds

    def csv(self, name: str, header, rows) -> None:
        write_csv(self.out / name, header, rows)
        self.outputs.append(name)

    def record(self, name: str) -> None:
        self.outputs.append(name)

    def check(self, name: str, estimate: float, target: float, tolerance: float, passed: bool | None = None) -> bool:
        if passed is None:
            passed = bool(abs(estimate - target) <= tolerance)
        self.checks.append((name, float(estimate), float(target), float(tolerance), bool(passed)))
        return passed

    def note_factor(self, label: str, factor) -> None:
        jitter = getattr(factor, "jitter", 0.0)
        clipped = getattr(factor, "clipped_mass", 0.0)
        if jitter or clipped:
            self.jitter_events.append({"factor": label, "jitter": jitter, "clipped_spectral_mass": clipped})


def _unit_spec(d: int, log2_cells: int, profile: str = "log", g: float = 0.0) -> tuple[KernelSpec, Grid]:
    cells = 2**log2_cells
    spec = KernelSpec(d, epsilon=1.0 / cells, g=g, profile=profile)
    return spec, spec.grid(cells)


# experiments


def _field_check(ctx: RunContext) -> None:
    p = ctx.p
    spec = KernelSpec(p["d"], epsilon=p["epsilon"], g=p["g"], profile=p["profile"])
    grid = spec.grid(p["cells"])
    if grid.size > 16:
        raise ValueError("field-check compares full covariances and is limited to 16 grid points")
    target = build_kernel(spec, grid)
    factor = factor_for(spec, grid, "dense")
    ctx.note_factor("kernel", factor)
    seeds = ctx.replica_seeds(p["replicas"])
    samples = np.stack([sample_field(factor, s).values.ravel() for s in seeds])
    dump_field(ctx.out / "field", sample_field(factor, seeds[0]), spec.describe())
    ctx.record("field.bin")
    ctx.record("field.json")
    emp = samples.T @ samples / samples.shape[0]
    sd = np.sqrt(np.diag(target))
    tol = 4 * (np.outer(sd, sd) + np.abs(target)) / math.sqrt(samples.shape[0])
    n = grid.size
    rows = [(i, j, emp[i, j], target[i, j], tol[i, j], abs(emp[i, j] - target[i, j]) <= tol[i, j]) for i in range(n) for j in range(n)]
    ctx.csv("covariance.csv", ["i", "j", "empirical", "target", "tolerance", "pass"], rows)
    worst = float(np.max(np.abs(emp - target) / tol))
    ctx.check("covariance_max_error_over_tolerance", worst, 0.0, 1.0)
    ctx.check("variance_matches_kernel_diagonal", float(np.max(np.abs(factor.diag_variances - np.diag(target)))), 0.0, 0.0)


def _gmc_mass(ctx: RunContext) -> None:
    p = ctx.p
    spec, grid = _unit_spec(p["d"], p["log2_cells"], p["profile"], p["g"])
    factor = factor_for(spec, grid)
    ctx.note_factor("kernel", factor)
    params = GmcParams(p["gamma"], p["d"])
    seeds = ctx.replica_seeds(p["replicas"])

    def one(s):
        fld = sample_field(factor, s)
        return gmc_from_field(fld, params).total_mass, gmc_from_field(fld, GmcParams(0.0, p["d"]))

    res = pmap(one, seeds, ctx.threads)
    masses = np.array([r[0] for r in res])
    ctx.csv("masses.csv", ["replica", "seed", "total_mass"], [(i, s, m) for i, (s, m) in enumerate(zip(seeds, masses))])
    se = masses.std(ddof=1) / math.sqrt(masses.size) if masses.size > 1 else float("inf")
    ctx.check("mean_total_mass", masses.mean(), 1.0, 3 * se)
    leb = GridMeasure.lebesgue(grid)
    exact = all(np.array_equal(r[1].masses, leb.masses) for r in res)
    ctx.check("gamma0_equals_lebesgue", 0.0 if exact else 1.0, 0.0, 0.0, exact)


def _moment_scaling(ctx: RunContext) -> None:
    p = ctx.p
    spec, grid = _unit_spec(1, p["log2_cells"])
    factor = factor_for(spec, grid)
    ctx.note_factor("kernel", factor)
    params = GmcParams(p["gamma"], 1)
    radii = np.asarray(p["radii"])
    qs = p["q"]
    centers = interior_centers(grid, radii.max())
    seeds = ctx.replica_seeds(p["replicas"])

    def one(s):
        meas = gmc_from_field(sample_field(factor, s), params)
        return np.stack([ball_moments(meas, q, radii, centers) for q in qs])

    table = np.stack(pmap(one, seeds, ctx.threads))
    keep = ~np.any(np.isnan(table), axis=2)
    ctx.diagnostics["excluded_replicas"] = {str(q): int((~keep[:, j]).sum()) for j, q in enumerate(qs)}
    rows, mrows = [], []
    for j, q in enumerate(qs):
        mean = table[keep[:, j], j].mean(axis=0)
        fit = fit_line(np.log(radii), np.log(mean), int((~keep[:, j]).sum()))
        target = float(theoretical_xi(q, p["gamma"], 1))
        tol = p["q1_tolerance"] if q == 1 else p["tolerance"]
        ok = ctx.check(f"xi({fmt(q)})", fit.slope, target, tol)
        rows.append((q, fit.slope, fit.stderr, target, tol, ok))
        mrows += [(q, r, m) for r, m in zip(radii, mean)]
    ctx.csv("slopes.csv", ["q", "slope", "stderr", "target", "tolerance", "pass"], rows)
    ctx.csv("moments.csv", ["q", "radius", "mean_moment"], mrows)


def _tau_estimate(ctx: RunContext) -> None:
    p = ctx.p
    spec, grid = _unit_spec(1, p["log2_cells"])
    factor = factor_for(spec, grid)
    ctx.note_factor("kernel", factor)
    params = GmcParams(p["gamma"], 1)
    seeds = ctx.replica_seeds(p["replicas"])
    alpha_bins = np.round(np.arange(0.0, 3.0 + 1e-9, 0.05), 10)

    def one(item):
        i, s = item
        meas = gmc_from_field(sample_field(factor, s), params)
        return partition_table(meas, p["levels"], p["q"], i), meas

    res = pmap(one, list(enumerate(seeds)), ctx.threads)
    tables = [r[0] for r in res]
    rows = [(t.replica, n, q, t.values[a, b]) for t in tables for a, n in enumerate(t.levels) for b, q in enumerate(t.q)]
    ctx.csv("partition_sums.csv", ["replica", "level", "q", "value"], rows)
    curve = estimate_tau(tables)
    theory = theoretical_tau(curve.abscissa, p["gamma"], 1)
    trows = []
    for q, t, se, f, th in zip(curve.abscissa, curve.ordinate, curve.stderr, curve.flags, theory):
        tol = p["negative_q_tolerance"] if q < 0 else p["tolerance"]
        ok = ctx.check(f"τ({fmt(q)})", t, th, tol)
        trows.append((q, t, se, th, tol, ok, f))
    ctx.csv("tau.csv", ["q", "tau_estimated", "stderr", "tau_theory", "tolerance", "pass", "flag"], trows)
    coarse = coarse_spectrum([r[1] for r in res], p["coarse_level"], alpha_bins, p["coarse_delta"])
    f_theory = theoretical_spectrum(alpha_bins, p["gamma"], 1)
    ctx.csv("spectrum.csv", ["alpha", "spectrum_coarse", "spectrum_theory", "flag"], zip(alpha_bins, coarse.ordinate, f_theory, coarse.flags))
    ctx.diagnostics["coarse_spectrum"] = coarse.meta


def _spectrum(ctx: RunContext) -> None:
    p = ctx.p
    g, d = p["gamma"], p["d"]
    qm, qp = critical_q(g, d)
    w = p["q_window"] or max(4.0, 1.5 * qp)
    q = np.linspace(-w, w, p["q_points"])
    tcurve = tau_theory_curve(q, g, d)
    lo, hi = spectrum_support(g, d)
    tau = theoretical_tau(np.array([0.0, 1.0]), g, d)
    ctx.check("τ(1)", tau[1], 0.0, 1e-12)
    ctx.check("τ(0)", tau[0], d, 1e-12)
    gaps = [abs(b[0] - b[1]) for b in [tau_branches(qm, g, d)[:2], tau_branches(qp, g, d)[1:]]]
    ctx.check("tau_continuity_at_breakpoints", max(gaps), 0.0, 1e-12)
    second = np.diff(tcurve.ordinate, 2)
    ctx.check("tau_convexity_min_second_difference", float(second.min()), 0.0, 1e-12, bool(second.min() >= -1e-12))
    a1 = d - g * g / 2
    ctx.check("spectrum(alpha_1)", float(theoretical_spectrum(a1, g, d)), a1, 1e-12)
    a0 = d + g * g / 2
    dense = np.linspace(lo, hi, 100001)
    ctx.check("spectrum_max", float(theoretical_spectrum(dense, g, d).max()), d, 1e-9)
    ctx.check("spectrum(alpha_0)", float(theoretical_spectrum(a0, g, d)), d, 1e-9)
    alpha = np.linspace(lo + p["margin"], hi - p["margin"], p["alpha_points"])
    num = legendre(tcurve, alpha)
    theory = theoretical_spectrum(alpha, g, d)
    diff = np.abs(num.ordinate - theory)
    ctx.csv(
        "spectrum.csv",
        ["alpha", "spectrum_theory", "legendre_of_tau_theory", "abs_diff", "flag"],
        zip(alpha, theory, num.ordinate, diff, num.flags),
    )
    ctx.check("legendre_vs_spectrum_max_abs_diff", float(diff.max()), 0.0, p["tolerance"])
    full = legendre(tcurve, np.linspace(lo, hi, 2 * p["alpha_points"]))
    qi = np.linspace(qm, qp, 1001)[1:-1]
    back = legendre_inverse(full, qi)
    tq = theoretical_tau(qi, g, d)
    bdiff = np.abs(back.ordinate - tq)
    ctx.csv("tau.csv", ["q", "tau_theory", "double_legendre_of_tau_theory", "abs_diff"], zip(qi, tq, back.ordinate, bdiff))
    ctx.check("double_legendre_max_abs_diff", float(bdiff.max()), 0.0, p["dual_tolerance"])
    write_curve(ctx.out / "tau_theory.csv", tau_theory_curve(np.linspace(-w, w, 801), g, d))
    ctx.record("tau_theory.csv")
    ctx.record("tau_theory.json")
    write_curve(ctx.out / "spectrum_theory.csv", spectrum_theory_curve(np.linspace(max(lo - 0.25, 0), hi + 0.25, 801), g, d))
    ctx.record("spectrum_theory.csv")
    ctx.record("spectrum_theory.json")


def _thick_points(ctx: RunContext) -> None:
    p = ctx.p
    spec = KernelSpec(1, epsilon=2.0 ** -p["depth"])
    lf = layered_factor(spec, p["depth"])
    for m, f in enumerate(lf.layers, 1):
        ctx.note_factor(f"layer {m}", f)
    # measured constant in |v_m(x) - m log 2| <= K for this kernel and grid
    scale = np.arange(1, lf.depth + 1).reshape((-1,) + (1,) * lf.grid.d) * math.log(2.0)
    ctx.diagnostics["variance_offset_bound"] = float(np.max(np.abs(lf.variances - scale)))
    seeds = ctx.replica_seeds(p["replicas"])
    levels = np.asarray(p["levels"])
    gamma = p["gamma"]
    res = pmap(lambda s: thick_point_box_count(lf.sample(s), gamma, levels).counts, seeds, ctx.threads)
    counts = np.mean(res, axis=0)
    ctx.csv("counts.csv", ["level", "mean_count"], zip(levels, counts))
    ok = counts > 0
    target = 1 - gamma**2 / 2
    if ok.sum() >= 2:
        fit = fit_line(levels[ok] * math.log(2.0), np.log(counts[ok]))
        passed = ctx.check("thick_dimension", fit.slope, target, p["tolerance"])
        ctx.csv("slopes.csv", ["quantity", "slope", "stderr", "target", "tolerance", "pass"], [("thick_dimension", fit.slope, fit.stderr, target, p["tolerance"], passed)])
    else:
        ctx.diagnostics["thick_dimension"] = "fewer than two levels with thick points"
    if gamma**2 < 2 and p["exponent_samples"] > 0:
        rooted = ctx.replica_seeds(p["exponent_samples"], "thick-rooted")

        def exponent(s):
            x, layered = rooted_layered(lf, gamma, s)
            return thick_point_exponent(layered, x).slope

        est = pmap(exponent, rooted, ctx.threads)
        ctx.csv("exponents.csv", ["sample", "seed", "thick_exponent"], zip(range(len(est)), rooted, est))
        ctx.check("thick_exponent_median", float(np.median(est)), gamma, p["tolerance"])


def _local_dim(ctx: RunContext) -> None:
    p = ctx.p
    spec, grid = _unit_spec(1, p["log2_cells"])
    factor = factor_for(spec, grid)
    ctx.note_factor("kernel", factor)
    g, q = p["gamma"], p["q"]
    radii = np.asarray(p["radii"])
    margin = radii.max()
    c = grid.axes()[0]
    region = (c >= margin) & (c <= 1 - margin)
    seeds = ctx.replica_seeds(p["replicas"])

    def one(s):
        if p["sampling"] == "rooted":
            x, fld = rooted_field(factor, q * g, s, region)
        else:
            fld = sample_field(factor, s)
            x = sample_points(gmc_from_field(fld, GmcParams(q * g, 1)), stream(s, 3), 1, region)[0]
        ld = local_dimensions(gmc_from_field(fld, GmcParams(g, 1)), x, radii)[0]
        return x[0], ld.slope, ld.lower, ld.upper

    rows = [(i, s, *r) for i, (s, r) in enumerate(zip(seeds, pmap(one, seeds, ctx.threads)))]
    ctx.csv("local_dims.csv", ["sample", "seed", "x", "slope", "lower_ratio", "upper_ratio"], rows)
    target = float(alpha_q(q, g, 1))
    ctx.check("median_local_dimension", float(np.median([r[3] for r in rows])), target, p["tolerance"])


def _mrw(ctx: RunContext) -> None:
    p = ctx.p
    spec, grid = _unit_spec(1, p["log2_cells"])
    factor = factor_for(spec, grid)
    ctx.note_factor("kernel", factor)
    params = GmcParams(p["gamma"], 1)
    seeds = ctx.replica_seeds(p["replicas"])
    lags = np.asarray(p["lags"])
    qs = p["q"]

    def one(s):
        clock = gmc_from_field(sample_field(factor, s), params)
        path = simulate_mrw(clock, p["d_target"], derive_seed(s, "walk"))
        return np.stack([structure_moments([path], q, lags) for q in qs]), path

    res = pmap(one, seeds, ctx.threads)
    write_path_csv(ctx.out / "path.csv", res[0][1])
    ctx.record("path.csv")
    mean = np.mean([r[0] for r in res], axis=0)
    rows = []
    for j, q in enumerate(qs):
        fit = fit_line(np.log(lags), np.log(mean[j]))
        target = float(theoretical_xi(q / 2, p["gamma"], 1))
        ok = ctx.check(f"structure_slope({fmt(q)})", fit.slope, target, p["tolerance"])
        rows.append((q, fit.slope, fit.stderr, target, p["tolerance"], ok))
    ctx.csv("slopes.csv", ["q", "slope", "stderr", "target", "tolerance", "pass"], rows)
    widths = np.full(grid.size, grid.spacing[0])
    leb = GridMeasure.lebesgue(grid)
    same = all(
        np.array_equal(simulate_mrw(leb, p["d_target"], s).positions, simulate_brownian(widths, p["d_target"], s).positions)
        for s in seeds[:4]
    )
    ctx.check("gamma0_walk_equals_brownian", 0.0 if same else 1.0, 0.0, 0.0, same)
    lo, hi = mrw_lower_support(p["gamma"])
    a = np.linspace(max(lo - 0.1, 0.0), hi + 0.1, p["spectrum_points"])
    gap = float(np.max(np.abs(theoretical_mrw_lower_spectrum(a, p["gamma"]) - theoretical_spectrum(2 * a, p["gamma"], 1))))
    ctx.check("lower_spectrum_identity", gap, 0.0, 0.0)


def _lbm_exit(ctx: RunContext) -> None:
    p = ctx.p
    radii = tuple(p["radii"])
    h = p["h"] or min(radii) ** 2 / 100
    cfg = ExitExperimentConfig(
        p["gamma"], radii, h, p["replicas"], ctx.config.seed, p["tiles"], p["tile_spacing"], p["cells_per_unit"], p["profile"]
    )
    res = exit_moment_experiment(cfg, ctx.threads)
    ctx.seeds.extend(res.seeds)
    ctx.diagnostics["excluded_paths"] = res.n_excluded
    ctx.diagnostics["samples_per_radius"] = int(res.samples().shape[0])
    rows, mrows = [], []
    for q in p["q"]:
        fit = res.slope(q)
        target = float(theoretical_xi_mu(q, p["gamma"]))
        tol = p["q1_tolerance"] if q == 1 else p["tolerance"]
        ok = ctx.check(f"xi_mu({fmt(q)})", fit.slope, target, tol)
        rows.append((q, fit.slope, fit.stderr, target, tol, ok, res.max_moment(q)))
        mrows += [(q, r, m) for r, m in zip(res.radii, res.moments(q))]
    ctx.csv("slopes.csv", ["q", "slope", "stderr", "target", "tolerance", "pass", "max_replica_moment"], rows)
    ctx.csv("moments.csv", ["q", "radius", "mean_moment"], mrows)
    # the clock along one full exit path of the first tile, on every replica's field
    kernel_factor = factor_for(cfg.kernel(), cfg.grid(), method="circulant")
    ctx.note_factor("kernel", kernel_factor)
    start = cfg.starts()[0]

    def clock_checks(seed):
        fld = sample_field(kernel_factor, derive_seed(seed, "field"))
        path = simulate_brownian_exit((-1, -1), (1, 1), h, derive_seed(seed, "clock-path"))
        shifted = type(path)(path.times, path.positions + start, path.kind, path.seed, path.exit_index)
        c = clock_from_path(shifted, fld, p["gamma"])
        c0 = clock_from_path(shifted, fld, 0.0)
        return c.strictly_increasing, bool(np.array_equal(c0.values, c0.knots))

    checked = res.seeds[:CLOCK_CHECK_REPLICAS]
    ctx.diagnostics["clock_checked_replicas"] = len(checked)
    flags = pmap(clock_checks, checked, ctx.threads)
    inc = all(f[0] for f in flags) and bool(np.all(res.min_rates > 0))
    ctx.diagnostics["min_clock_rate"] = float(res.min_rates.min())
    ident = all(f[1] for f in flags)
    ctx.check("clock_strictly_increasing", 0.0 if inc else 1.0, 0.0, 0.0, inc)
    ctx.check("gamma0_clock_identity", 0.0 if ident else 1.0, 0.0, 0.0, ident)
    lo, hi = lbm_spectrum_support(p["gamma"])
    a = np.linspace(lo, hi, 1001)[1:-1]
    chain = float(np.max(np.abs(theoretical_lbm_lower_spectrum(a, p["gamma"]) - 2 * a * theoretical_mu_spectrum(1 / (2 * a), p["gamma"]))))
    ctx.check("spectrum_chain_identity", chain, 0.0, 1e-12)


def _lbm_refine(ctx: RunContext) -> None:
    p = ctx.p
    res = clock_refinement(p["gamma"], p["levels"], p["replicas"], p["paths"], p["h"], ctx.config.seed, p["half_side"], p["g"], ctx.threads, p["oversample"])
    ctx.seeds.extend(derive_seed(ctx.config.seed, "lbm-refine", i) for i in range(p["replicas"]))
    for m, c in zip(range(1, len(res.clipped_masses) + 1), res.clipped_masses):
        if c:
            ctx.jitter_events.append({"factor": f"layer {m}", "jitter": 0.0, "clipped_spectral_mass": c})
    ctx.csv("refine.csv", ["level", "epsilon", "mean_F_over_T"], [(m, 2.0**-m, v) for m, v in zip(res.levels, res.normalized_means())])
    diffs = res.differences()
    se = res.difference_stderr()
    lv = res.levels
    ctx.csv("differences.csv", ["from_level", "to_level", "mean_abs_difference", "stderr"], zip(lv[:-1], lv[1:], diffs, se))
    for k in range(diffs.size - 1):
        ctx.check(f"difference_decrease({lv[k]}->{lv[k + 1]} vs {lv[k + 1]}->{lv[k + 2]})", diffs[k + 1] - diffs[k], 0.0, 0.0, bool(diffs[k + 1] < diffs[k]))


EXPERIMENTS: dict[str, Callable[[RunContext], None]] = {
    "field-check": _field_check,
    "gmc-mass": _gmc_mass,
    "moment-scaling": _moment_scaling,
    "tau-estimate": _tau_estimate,
    "spectrum": _spectrum,
    "thick-points": _thick_points,
    "local-dim": _local_dim,
    "mrw": _mrw,
    "lbm-exit": _lbm_exit,
    "lbm-refine": _lbm_refine,
}
assert set(EXPERIMENTS) == set(SCHEMAS)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(config: ExperimentConfig, out: str | Path | None = None, threads: int = 1) -> dict:
    """Run one experiment and write its result files plus ``manifest.json``.

    Returns the manifest. Result files depend only on the config (including
    its seed), never on ``threads``.
    """
    out = Path(out or config.out or "")
    if not str(out):
        raise ValueError("no output directory given")
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(config, out, threads)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    EXPERIMENTS[config.kind](ctx)
    elapsed = time.perf_counter() - t0
    ctx.csv(CHECKS, CHECK_COLUMNS, ctx.checks)
    manifest = {
        "toolkit_version": __version__,
        "kind": config.kind,
        "config": {"kind": config.kind, "seed": config.seed, "params": config.params},
        "config_text": config.to_text(),
        "replica_seeds": ctx.seeds,
        "jitter_events": ctx.jitter_events,
        "diagnostics": ctx.diagnostics,
        "outputs": {name: _sha256(out / name) for name in sorted(set(ctx.outputs))},
        "passed": all(c[4] for c in ctx.checks),
        "wall_clock": {"started": started, "seconds": elapsed, "threads": threads},
    }
    write_json(out / MANIFEST, manifest)
    return manifest


def config_from_manifest(manifest: dict | str | Path) -> ExperimentConfig:
    if not isinstance(manifest, dict):
        manifest = json.loads(Path(manifest).read_text(encoding="utf-8"))
    cfg = manifest["config"]
    return build_config({"kind": cfg["kind"], "seed": cfg["seed"], **cfg["params"]})


def replay(manifest_path: str | Path, out: str | Path, threads: int = 1) -> dict:
    """Re-run the experiment recorded in a manifest into ``out``."""
    return run(config_from_manifest(manifest_path), out, threads)


def _fmt_cell(text: str) -> str:
    try:
        v = float(text)
    except ValueError:
        return text
    return format(v, ".6g")


def _report_one(run_dir: Path) -> tuple[str, bool]:
    path = run_dir / CHECKS
    if not path.exists():
        raise FileNotFoundError(f"{run_dir} has no {CHECKS}")
    header, rows = read_csv(path)
    missing = [c for c in CHECK_COLUMNS if c not in header]
    if missing:
        raise ValueError(f"{path} is missing columns {missing}")
    idx = [header.index(c) for c in CHECK_COLUMNS]
    kind = run_dir.name
    man = run_dir / MANIFEST
    if man.exists():
        kind = json.loads(man.read_text(encoding="utf-8")).get("kind", kind)
    table = [["check", "estimate", "target", "tolerance", "result"]]
    ok = True
    for row in rows:
        name, est, tgt, tol, passed = (row[i] for i in idx)
        good = passed == "true"
        ok &= good
        table.append([name, _fmt_cell(est), _fmt_cell(tgt), _fmt_cell(tol), "pass" if good else "FAIL"])
    widths = [max(len(r[k]) for r in table) for k in range(5)]
    lines = [f"== {kind} ({run_dir}) =="]
    for k, r in enumerate(table):
        lines.append(" | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        if k == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines), ok


def report(path: str | Path) -> tuple[str, bool]:
    """Summary tables for a run directory or a directory of run directories."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"{path} is not a directory")
    if (path / CHECKS).exists():
        return _report_one(path)
    runs = sorted(d for d in path.iterdir() if d.is_dir() and (d / CHECKS).exists())
    if not runs:
        raise ValueError(f"no experiment results in {path}")
    parts = [_report_one(d) for d in runs]
    return "\n\n".join(p[0] for p in parts), all(p[1] for p in parts)
