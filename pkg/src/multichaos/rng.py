"""Counter-based random streams keyed by integer seeds."""

from __future__ import annotations

import zlib

import numpy as np

_U64 = (1 << 64) - 1


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0 or seed > _U64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return a Philox generator keyed by ``seed`` and an optional key path."""
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def kind_key(name: str) -> int:
    """Stable integer key for a string label (CRC32)."""
    return zlib.crc32(name.encode("utf-8"))


def derive_seed(master: int, *keys: int | str) -> int:
    """Derive an independent 64-bit seed from a master seed and a key path."""
    path = tuple(kind_key(k) if isinstance(k, str) else int(k) for k in keys)
    ss = np.random.SeedSequence(_check_seed(master), spawn_key=path)
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def replica_seeds(master: int, kind: str, count: int) -> list[int]:
    """Per-replica seeds for experiment ``kind``; replica ``i`` uses key (kind, i)."""
    return [derive_seed(master, kind, i) for i in range(count)]
