"""Ordered replica scheduling over a thread pool."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


class ReplicaError(RuntimeError):
    """A replica failed; ``index`` and ``item`` identify it, ``__cause__`` is the original error."""

    def __init__(self, index: int, item, exc: BaseException):
        self.index = index
        self.item = item
        super().__init__(f"replica {index} ({item!r}) failed: {type(exc).__name__}: {exc}")


def pmap(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Apply ``fn`` to every item and return results in input order.

    Each call must own its random stream, so the output does not depend on
    ``threads``. Errors are re-raised as :class:`ReplicaError`.
    """
    items = list(items)
    if threads < 1:
        raise ValueError("threads must be at least 1")

    def call(pair):
        i, it = pair
        try:
            return fn(it)
        except Exception as exc:
            raise ReplicaError(i, it, exc) from exc

    if threads == 1 or len(items) <= 1:
        return [call(p) for p in enumerate(items)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(call, enumerate(items)))
