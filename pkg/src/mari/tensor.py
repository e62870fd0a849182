"""Dense tensor kernels.

Tensors are plain numpy arrays: row-major, rank 1 to 3, float64 by default
with float32 selectable by the caller. Every kernel returns a fresh,
read-only array, so values behave as immutable and are safe to share
across threads.

``matmul`` accumulates over the inner dimension strictly left to right
(one rank-1 update per step), which makes results bit-identical to a
naive triple loop and reproducible across runs. ``fast=True`` switches to
the BLAS path for benchmarking; it computes the same product but may
round differently, so regression tests use the default.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import BoundsError, DimensionError, InvalidArgumentError

FLOAT_DTYPES = (np.float64, np.float32)


def _lock(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def as_matrix(x, dtype=np.float64) -> np.ndarray:
    """Validate and convert ``x`` to a read-only 2-D array."""
    a = np.ascontiguousarray(x, dtype=dtype)
    if a.ndim != 2:
        raise DimensionError(f"expected a rank-2 tensor, got rank {a.ndim}")
    return _lock(a)


def _require_rank2(name: str, a: np.ndarray) -> None:
    if a.ndim != 2:
        raise DimensionError(f"{name} must be rank 2, got shape {a.shape}")


def matmul(a: np.ndarray, b: np.ndarray, *, fast: bool = False) -> np.ndarray:
    """Matrix product with deterministic left-to-right accumulation.

    The inner dimension is consumed in index order, one rounded multiply
    and one rounded add per step, so the result matches a scalar triple
    loop bit for bit. With ``fast=True`` the product is delegated to BLAS
    instead; use it only where wall time matters and bit-stability does not.
    """
    _require_rank2("a", a)
    _require_rank2("b", b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    if fast:
        return _lock(a @ b)
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m), dtype=np.result_type(a, b))
    tmp = np.empty_like(out)
    for t in range(k):
        np.multiply(a[:, t : t + 1], b[t], out=tmp)
        np.add(out, tmp, out=out)
    return _lock(out)


def tile_rows(x: np.ndarray, b: int) -> np.ndarray:
    """Replicate a single-row tensor ``b`` times along the batch axis."""
    _require_rank2("x", x)
    if x.shape[0] != 1:
        raise DimensionError(f"tile_rows expects one row, got shape {x.shape}")
    if b < 1:
        raise InvalidArgumentError(f"batch count must be >= 1, got {b}")
    return _lock(np.repeat(x, b, axis=0))


def concat_cols(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate tensors along columns, preserving list order."""
    if not parts:
        raise InvalidArgumentError("concat_cols needs at least one part")
    for p in parts:
        _require_rank2("part", p)
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise DimensionError(
            f"concat_cols row mismatch: {[p.shape for p in parts]}"
        )
    if len(parts) == 1:
        return _lock(parts[0].copy())
    return _lock(np.concatenate(parts, axis=1))


def slice_cols(x: np.ndarray, start: int, width: int) -> np.ndarray:
    """Copy the column window ``[start, start + width)``."""
    _require_rank2("x", x)
    if start < 0 or width < 0 or start + width > x.shape[1]:
        raise BoundsError(
            f"slice [{start}, {start + width}) out of range for width {x.shape[1]}"
        )
    return _lock(x[:, start : start + width].copy())


def add_broadcast(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise sum; a single-row operand broadcasts over the other's rows.

    ``add_broadcast(x, y)`` with a 1-row ``x`` equals
    ``add_broadcast(tile_rows(x, B), y)`` bit for bit.
    """
    _require_rank2("a", a)
    _require_rank2("b", b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"column mismatch: {a.shape} + {b.shape}")
    if a.shape[0] != b.shape[0] and 1 not in (a.shape[0], b.shape[0]):
        raise DimensionError(f"row mismatch: {a.shape} + {b.shape}")
    return _lock(a + b)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax, computed with max subtraction for stability."""
    _require_rank2("x", x)
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return _lock(e / e.sum(axis=1, keepdims=True))
