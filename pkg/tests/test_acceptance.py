"""End-to-end acceptance suite: one test per criterion at its stated size and tolerance.

Each test prints (and records for the terminal summary) one line
``criterion N [PASS|FAIL] ...``. The full run takes several minutes.
"""

import json
import math

import pytest
from small_configs import SMALL

from multichaos.config import KINDS, build_config
from multichaos.io import read_csv
from multichaos.runner import MANIFEST, replay, run

pytestmark = pytest.mark.acceptance

SPECTRUM_CASES = [(1, 0.5), (1, 1.0), (1, 1.3), (2, 1.0), (2, 1.8)]
CLOSED_FORM = ["τ(1)", "τ(0)", "tau_continuity_at_breakpoints", "tau_convexity_min_second_difference", "spectrum(alpha_1)", "spectrum_max", "spectrum(alpha_0)"]
DUALITY = ["legendre_vs_spectrum_max_abs_diff", "double_legendre_max_abs_diff"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def _run(workdir, name, kind, **params):
    cfg = build_config({"kind": kind, **{k: str(v) for k, v in params.items()}})
    out = workdir / name
    manifest = run(cfg, out)
    return manifest, _checks(out)


def _checks(out):
    header, rows = read_csv(out / "checks.csv")
    return {r[0]: {"estimate": float(r[1]), "target": float(r[2]), "tolerance": float(r[3]), "pass": r[4] == "true"} for r in rows}


def _summary(checks, names):
    return ", ".join(f"{n}={checks[n]['estimate']:.4g}" for n in names)


def _tol(checks, name, expected):
    assert math.isclose(checks[name]["tolerance"], expected, rel_tol=1e-12), f"{name} uses tolerance {checks[name]['tolerance']}"


@pytest.fixture(scope="module")
def spectrum_runs(workdir):
    return {(d, g): _run(workdir, f"spectrum_d{d}_g{g}", "spectrum", d=d, gamma=g, q_points=100_001)[1] for d, g in SPECTRUM_CASES}


def test_criterion_01_closed_form_identities(spectrum_runs, acceptance_log):
    ok = True
    details = []
    for (d, g), checks in spectrum_runs.items():
        for name in CLOSED_FORM:
            _tol(checks, name, 1e-9 if name.startswith(("spectrum_max", "spectrum(alpha_0)")) else 1e-12)
            ok &= checks[name]["pass"]
        worst = max(abs(checks[n]["estimate"] - checks[n]["target"]) for n in CLOSED_FORM if "convexity" not in n)
        details.append(f"(d={d}, γ={g}) worst |err|={worst:.2g}")
    acceptance_log(1, "closed-form identities", ok, "; ".join(details))
    assert ok


def test_criterion_02_legendre_duality(spectrum_runs, acceptance_log):
    ok = True
    details = []
    for (d, g), checks in spectrum_runs.items():
        _tol(checks, DUALITY[0], 1e-6)
        _tol(checks, DUALITY[1], 1e-5)
        ok &= all(checks[n]["pass"] for n in DUALITY)
        details.append(f"(d={d}, γ={g}) {_summary(checks, DUALITY)}")
    acceptance_log(2, "Legendre duality", ok, "; ".join(details))
    assert ok


def test_criterion_03_gmc_mass(workdir, acceptance_log):
    man, checks = _run(workdir, "gmc-mass", "gmc-mass", d=1, gamma=0.8, log2_cells=14, replicas=64)
    c = checks["mean_total_mass"]
    ok = man["passed"]
    acceptance_log(3, "GMC mass", ok, f"mean={c['estimate']:.4f} ± {c['tolerance']:.4f} (3 s.e.), gamma0 max diff={checks['gamma0_equals_lebesgue']['estimate']:g}")
    assert checks["gamma0_equals_lebesgue"]["estimate"] == 0.0
    assert ok


def test_criterion_04_moment_scaling(workdir, acceptance_log):
    man, checks = _run(
        workdir, "moment-scaling", "moment-scaling", gamma=0.7, replicas=200, q="0.5, 1.0, 1.5", radii=", ".join(str(2.0**-k) for k in range(3, 8))
    )
    names = ["xi(0.5)", "xi(1)", "xi(1.5)"]
    _tol(checks, "xi(0.5)", 0.15)
    _tol(checks, "xi(1)", 0.05)
    _tol(checks, "xi(1.5)", 0.15)
    ok = man["passed"]
    acceptance_log(4, "moment scaling", ok, ", ".join(f"{n}: {checks[n]['estimate']:.3f} vs {checks[n]['target']:.3f}" for n in names))
    assert ok


def test_criterion_05_tau_estimation(workdir, acceptance_log):
    man, checks = _run(workdir, "tau-estimate", "tau-estimate", gamma=0.7, log2_cells=16, replicas=32, levels="8, 9, 10, 11, 12, 13, 14")
    for q in ("0", "0.5", "1", "1.5", "2"):
        _tol(checks, f"τ({q})", 0.2)
    for q in ("-1", "-0.5"):
        _tol(checks, f"τ({q})", 0.25)
    ok = man["passed"]
    acceptance_log(5, "tau estimation", ok, ", ".join(f"{n}: {c['estimate']:.3f} vs {c['target']:.3f}" for n, c in checks.items()))
    assert ok


def test_criterion_06_local_dimension(workdir, acceptance_log):
    radii = ", ".join(str(2.0**-k) for k in range(4, 10))
    cases = [("gamma 1", dict(gamma=1.0, q=1.0, tolerance=0.1)), ("gamma 0.8", dict(gamma=0.8, q=1.0, tolerance=0.1)), ("gamma 0.8, q=-1", dict(gamma=0.8, q=-1.0, tolerance=0.15))]
    ok = True
    details = []
    for label, params in cases:
        man, checks = _run(workdir, f"local-dim {label}", "local-dim", replicas=200, radii=radii, **params)
        c = checks["median_local_dimension"]
        ok &= man["passed"]
        details.append(f"{label}: median {c['estimate']:.3f} vs {c['target']:.3f} ± {c['tolerance']:g}")
    acceptance_log(6, "local dimension at size-biased points", ok, "; ".join(details))
    assert ok


def test_criterion_07_thick_points(workdir, acceptance_log):
    man, checks = _run(workdir, "thick-points", "thick-points", gamma=1.0, depth=14, replicas=16)
    _tol(checks, "thick_dimension", 0.15)
    c = checks["thick_dimension"]
    e = checks["thick_exponent_median"]
    ok = man["passed"]
    acceptance_log(7, "thick points", ok, f"dimension {c['estimate']:.3f} vs 0.5; size-biased exponent median {e['estimate']:.3f} vs 1")
    assert ok


def test_criterion_08_mrw(workdir, acceptance_log):
    man, checks = _run(workdir, "mrw", "mrw", gamma=0.6, q="2.0, 3.0")
    _tol(checks, "structure_slope(2)", 0.15)
    _tol(checks, "structure_slope(3)", 0.15)
    _tol(checks, "lower_spectrum_identity", 0.0)
    assert checks["gamma0_walk_equals_brownian"]["estimate"] == 0.0
    ok = man["passed"]
    acceptance_log(8, "multifractal random walk", ok, _summary(checks, ["structure_slope(2)", "structure_slope(3)", "gamma0_walk_equals_brownian", "lower_spectrum_identity"]))
    assert ok


def test_criterion_09_lbm(workdir, acceptance_log):
    man, checks = _run(workdir, "lbm-exit", "lbm-exit", gamma=1.0, replicas=300, q="0.5, 1.0, 1.5, 2.0", radii="0.25, 0.125, 0.0625, 0.03125")
    _tol(checks, "xi_mu(0.5)", 0.2)
    _tol(checks, "xi_mu(1)", 0.1)
    _tol(checks, "xi_mu(1.5)", 0.2)
    _tol(checks, "xi_mu(2)", 0.2)
    _tol(checks, "spectrum_chain_identity", 1e-12)
    assert checks["gamma0_clock_identity"]["estimate"] == 0.0
    ref_man, ref = _run(workdir, "lbm-refine", "lbm-refine", gamma=1.0, levels="5, 6, 7, 8")
    header, rows = read_csv(workdir / "lbm-refine" / "differences.csv")
    diffs = [float(r[header.index("mean_abs_difference")]) for r in rows]
    ok = man["passed"] and ref_man["passed"]
    detail = ", ".join(f"{n}: {checks[n]['estimate']:.3f} vs {checks[n]['target']:.3f}" for n in ("xi_mu(0.5)", "xi_mu(1)", "xi_mu(1.5)", "xi_mu(2)"))
    detail += f"; strictly increasing={checks['clock_strictly_increasing']['pass']}; refinement differences " + " > ".join(f"{v:.4g}" for v in diffs)
    acceptance_log(9, "Liouville Brownian motion", ok, detail)
    assert ok


def test_criterion_10_reproducibility(workdir, acceptance_log):
    mismatched = []
    for kind in KINDS:
        cfg = build_config({"kind": kind, **SMALL[kind], "seed": "20240601"})
        a, b = workdir / f"repro-{kind}-a", workdir / f"repro-{kind}-b"
        run(cfg, a, threads=1)
        replay(a / MANIFEST, b, threads=4)
        files_a = {p.name: p.read_bytes() for p in a.iterdir() if p.name != MANIFEST}
        files_b = {p.name: p.read_bytes() for p in b.iterdir() if p.name != MANIFEST}
        man_a, man_b = (json.loads((x / MANIFEST).read_text()) for x in (a, b))
        for m in (man_a, man_b):
            m.pop("wall_clock")
        if files_a != files_b or man_a != man_b:
            mismatched.append(kind)
    ok = not mismatched
    acceptance_log(10, "reproducibility across thread counts", ok, f"{len(KINDS)} kinds replayed at 4 threads" + (f"; mismatched: {mismatched}" if mismatched else ", all byte-identical"))
    assert ok
