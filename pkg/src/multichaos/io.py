"""Binary dumps with JSON sidecars and byte-stable CSV output."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FLOAT_FORMAT = ".17g"


def fmt(value) -> str:
    """Format a cell: floats with 17 significant digits, everything else via ``str``."""
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text:
        raise ValueError(f"{path} is empty")
    header = text[0].split(",")
    return header, [line.split(",") for line in text[1:] if line]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_binary(stem: str | Path, array: np.ndarray, meta: dict | None = None) -> tuple[Path, Path]:
    """Write ``stem.bin`` (little-endian float64, C order) and ``stem.json``."""
    stem = Path(stem)
    arr = np.ascontiguousarray(array, dtype="<f8")
    bin_path = stem.with_suffix(".bin")
    bin_path.write_bytes(arr.tobytes())
    side = {"shape": list(arr.shape), "dtype": "float64", "byte_order": "little"}
    side.update(meta or {})
    return bin_path, write_json(stem.with_suffix(".json"), side)


def read_binary(stem: str | Path) -> tuple[np.ndarray, dict]:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    arr = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8").reshape(meta["shape"])
    return arr.astype(float), meta


def dump_field(stem: str | Path, field, kernel: dict | None = None):
    """Field values plus shape, epsilon, seed and kernel parameters."""
    meta = {"grid": field.grid.describe(), "epsilon": field.epsilon, "seed": str(field.seed), "kernel": kernel or {}}
    return write_binary(stem, field.values, meta)


def dump_measure(stem: str | Path, measure):
    meta = {"lower": list(measure.lower), "upper": list(measure.upper), "gamma": measure.gamma, "total_mass": measure.total_mass}
    return write_binary(stem, measure.masses, meta)


def write_measure_csv(path: str | Path, measure) -> Path:
    pts = measure.grid.points()
    header = ["cell"] + [f"x{k + 1}" for k in range(measure.d)] + ["mass"]
    rows = ([i] + list(p) + [m] for i, (p, m) in enumerate(zip(pts, measure.masses.ravel())))
    return write_csv(path, header, rows)


def write_curve(path: str | Path, curve) -> tuple[Path, Path]:
    """Curve as CSV (abscissa, ordinate, stderr, flag) with a JSON metadata block."""
    path = Path(path)
    se = curve.stderr if curve.stderr is not None else np.full(curve.abscissa.size, np.nan)
    rows = zip(curve.abscissa, curve.ordinate, se, curve.flags)
    csv = write_csv(path, ["abscissa", "ordinate", "stderr", "flag"], rows)
    meta = dict(curve.meta)
    meta["kind"] = curve.kind
    return csv, write_json(path.with_suffix(".json"), meta)


def write_path_csv(path: str | Path, series) -> Path:
    header = ["t"] + [f"x{k + 1}" for k in range(series.d)]
    return write_csv(path, header, ([t] + list(x) for t, x in zip(series.times, series.positions)))


def write_clock_csv(path: str | Path, clock) -> Path:
    return write_csv(path, ["s", "F"], zip(clock.knots, clock.values))
