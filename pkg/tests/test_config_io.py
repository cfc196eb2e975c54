import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multichaos.config import KINDS, SCHEMAS, ConfigError, build_config, describe_schema, load_config, parse_text
from multichaos.fields import KernelSpec, factor_for, sample_field
from multichaos.gmc import GridMeasure
from multichaos.io import dump_field, fmt, read_binary, read_csv, write_csv, write_curve, write_json, write_measure_csv
from multichaos.mfa import tau_theory_curve
from multichaos.fields import Grid


def test_parse_text_comments_and_errors():
    raw = parse_text("# header\nkind = mrw\ngamma = 0.5  # inline\n\n")
    assert raw == {"kind": "mrw", "gamma": "0.5"}
    with pytest.raises(ConfigError) as info:
        parse_text("gamma = 1\ngamma = 2\nnonsense\n")
    assert set(info.value.problems) == {"gamma", "line 3"}


def test_defaults_validate_for_every_kind():
    for kind in KINDS:
        cfg = build_config({"kind": kind})
        assert cfg.params.keys() == SCHEMAS[kind].keys()


def test_unknown_kind_and_key():
    with pytest.raises(ConfigError, match="kind"):
        build_config({"kind": "nope"})
    with pytest.raises(ConfigError) as info:
        build_config({"kind": "mrw", "gama": "1"})
    assert info.value.problems == {"gama": "unknown key"}


def test_problems_are_reported_together():
    with pytest.raises(ConfigError) as info:
        build_config({"kind": "gmc-mass", "gamma": "abc", "replicas": "x"})
    assert set(info.value.problems) == {"gamma", "replicas"}


@pytest.mark.parametrize(
    "raw,key",
    [
        ({"kind": "gmc-mass", "gamma": "1.5"}, "gamma"),
        ({"kind": "gmc-mass", "d": "2", "gamma": "2.0"}, "gamma"),
        ({"kind": "gmc-mass", "replicas": "0"}, "replicas"),
        ({"kind": "moment-scaling", "gamma": "1.2", "q": "1, 1.5"}, "q"),
        ({"kind": "mrw", "lags": "0.1, 0.2"}, "lags"),
        ({"kind": "lbm-exit", "gamma": "2.0"}, "gamma"),
        ({"kind": "lbm-exit", "h": "1"}, "h"),
        ({"kind": "lbm-refine", "levels": "4, 5"}, "levels"),
        ({"kind": "local-dim", "sampling": "annealed"}, "sampling"),
        ({"kind": "field-check", "profile": "cos"}, "profile"),
    ],
)
def test_constraint_violations(raw, key):
    with pytest.raises(ConfigError) as info:
        build_config(raw)
    assert key in info.value.problems


@pytest.mark.parametrize("seed", ["-1", str(2**64), "1.5"])
def test_seed_must_be_u64(seed):
    with pytest.raises(ConfigError, match="seed"):
        build_config({"kind": "mrw", "seed": seed})


def test_seed_accepts_full_range_and_hex():
    assert build_config({"kind": "mrw", "seed": str(2**64 - 1)}).seed == 2**64 - 1
    assert build_config({"kind": "mrw", "seed": "0x10"}).seed == 16


def test_overrides_win_and_none_is_ignored():
    cfg = build_config({"kind": "mrw", "gamma": "0.5"}, {"gamma": "0.7", "seed": None})
    assert cfg.params["gamma"] == 0.7 and cfg.seed == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**64 - 1), st.floats(0.0, 1.4), st.integers(1, 500))
def test_to_text_round_trips(seed, gamma, replicas):
    cfg = build_config({"kind": "mrw", "seed": seed, "gamma": gamma, "replicas": replicas})
    again = build_config(parse_text(cfg.to_text()))
    assert again == cfg


def test_load_config_from_file(tmp_path):
    path = tmp_path / "c.conf"
    path.write_text("kind = tau-estimate\nseed = 3\nq = -1, 0, 1, 2\n")
    cfg = load_config(path)
    assert cfg.params["q"] == [-1.0, 0.0, 1.0, 2.0] and cfg.seed == 3


def test_describe_schema_lists_every_key():
    for kind in KINDS:
        text = describe_schema(kind)
        for key in SCHEMAS[kind]:
            assert f"  {key} (" in text


def test_fmt_round_trips_floats():
    for v in (0.1, 1 / 3, 1e-300, -2.5e17):
        assert float(fmt(v)) == v
    assert fmt(True) == "true" and fmt(np.int64(3)) == "3" and fmt("x") == "x"


def test_csv_round_trip(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["a", "b"], [[1, 0.5], [2, float("nan")]])
    header, rows = read_csv(p)
    assert header == ["a", "b"] and rows == [["1", "0.5"], ["2", "nan"]]
    with pytest.raises(ValueError):
        write_csv(tmp_path / "b.csv", ["a"], [[1, 2]])


def test_csv_bytes_are_stable(tmp_path):
    rows = [[i, i / 7] for i in range(20)]
    a = write_csv(tmp_path / "a.csv", ["i", "v"], rows).read_bytes()
    b = write_csv(tmp_path / "b.csv", ["i", "v"], rows).read_bytes()
    assert a == b


def test_field_dump_round_trip(tmp_path):
    spec = KernelSpec(2, epsilon=1 / 16)
    f = sample_field(factor_for(spec, spec.grid(16)), 42)
    dump_field(tmp_path / "field", f, spec.describe())
    arr, meta = read_binary(tmp_path / "field")
    assert np.array_equal(arr, f.values)
    assert meta["shape"] == [16, 16] and meta["seed"] == "42" and meta["epsilon"] == 1 / 16
    assert meta["kernel"]["profile"] == "log"
    assert (tmp_path / "field.bin").stat().st_size == 16 * 16 * 8


def test_write_json_handles_numpy_and_non_finite(tmp_path):
    p = write_json(tmp_path / "x.json", {"a": np.arange(2), "b": np.float64("inf"), "c": np.bool_(True)})
    assert json.loads(p.read_text()) == {"a": [0, 1], "b": "inf", "c": True}


def test_curve_and_measure_writers(tmp_path):
    csv, meta = write_curve(tmp_path / "tau.csv", tau_theory_curve(np.linspace(-1, 2, 4), 1.0))
    header, rows = read_csv(csv)
    assert header == ["abscissa", "ordinate", "stderr", "flag"] and len(rows) == 4
    assert json.loads(meta.read_text())["kind"] == "tau_theory"
    m = GridMeasure.lebesgue(Grid.uniform((0.0,), (1.0,), 4))
    header, rows = read_csv(write_measure_csv(tmp_path / "m.csv", m))
    assert header == ["cell", "x1", "mass"] and float(rows[0][1]) == 0.125
