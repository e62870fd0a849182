"""Closed-form operation-count model and the reference speedup table.

Counts are two times the multiply-adds of the dominant matrix products.
For a feature-fusion product over width ``D = D_u + D_i + D_c`` and output
width ``d`` at batch size ``B``::

    baseline  = 2 * B * d * (D_u + D_i + D_c)
    optimized = 2 * d * (D_u + B * (D_i + D_c))
    saving    = 2 * d * D_u * (B - 1)

The speedup is independent of ``d`` and approaches
``(D_u + D_i + D_c) / (D_i + D_c)`` for large ``B``; the asymptotic saved
fraction is ``D_u / (D_u + D_i + D_c)``.

For single-head cross attention with one query per item, sequence length
``L`` and hidden width ``d``, the projection cost is ``2 B d^2 (1 + 2L)``
when key/value projections run per batch row and ``2 d^2 (B + 2L)`` when
they run once, a ratio of ``(B + 2L) / (B (1 + 2L))``.

The reference speedup table fixes ``D_item = 1000`` and, for the
batch-size block only, a further ``D_cross = 1000``; the other blocks use
``D_cross = 0``. That per-block reading is the only one consistent with
every reference value, so it is kept explicit here rather than unified.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class MatmulDims:
    """Feature-fusion product dimensions."""

    B: int
    d_user: int
    d_item: int
    d_cross: int
    d_out: int

    def __post_init__(self):
        if self.B < 1:
            raise InvalidArgumentError(f"B must be >= 1, got {self.B}")
        if min(self.d_user, self.d_item, self.d_cross) < 0 or self.d_out < 1:
            raise InvalidArgumentError(f"bad dimensions {self}")
        if self.d_user + self.d_item + self.d_cross < 1:
            raise InvalidArgumentError("at least one feature domain must be non-empty")


@dataclass(frozen=True)
class AttnDims:
    """Cross-attention dimensions; query count per item is fixed at one."""

    B: int
    L: int
    d: int

    def __post_init__(self):
        if min(self.B, self.L, self.d) < 1:
            raise InvalidArgumentError(f"all attention dims must be >= 1: {self}")


@dataclass(frozen=True)
class FlopsReport:
    flops_baseline: int
    flops_optimized: int
    speedup: float
    absolute_saving: int
    asymptotic_saving_ratio: float


@dataclass(frozen=True)
class AttnFlopsReport:
    flops_baseline: int
    flops_optimized: int
    speedup: float
    absolute_saving: int
    ratio: float
    limit_ratio_large_L: float
    limit_ratio_large_B: float


def mari_flops(dims: MatmulDims) -> FlopsReport:
    """Baseline versus decomposed cost of one feature-fusion product."""
    d_batched = dims.d_item + dims.d_cross
    total = dims.d_user + d_batched
    baseline = 2 * dims.B * dims.d_out * total
    optimized = 2 * dims.d_out * (dims.d_user + dims.B * d_batched)
    if optimized == 0:
        raise InvalidArgumentError(f"optimized cost is zero for {dims}")
    return FlopsReport(
        flops_baseline=baseline,
        flops_optimized=optimized,
        speedup=baseline / optimized,
        absolute_saving=baseline - optimized,
        asymptotic_saving_ratio=dims.d_user / total,
    )


def exact_speedup(dims: MatmulDims) -> Fraction:
    """The speedup as an exact rational; independent of the output width."""
    return Fraction(
        dims.B * (dims.d_user + dims.d_item + dims.d_cross),
        dims.d_user + dims.B * (dims.d_item + dims.d_cross),
    )


def uoi_attention_flops(dims: AttnDims) -> AttnFlopsReport:
    """Projection cost of cross attention: per-row versus one-shot
    key/value computation."""
    b, l, d = dims.B, dims.L, dims.d
    baseline = 2 * b * d * d * (1 + 2 * l)
    optimized = 2 * d * d * (b + 2 * l)
    return AttnFlopsReport(
        flops_baseline=baseline,
        flops_optimized=optimized,
        speedup=baseline / optimized,
        absolute_saving=baseline - optimized,
        ratio=optimized / baseline,
        limit_ratio_large_L=1.0 / b,
        limit_ratio_large_B=1.0 / (1 + 2 * l),
    )


@dataclass(frozen=True)
class SweepPoint:
    """One configuration in a speedup sweep."""

    axis: str
    value: int
    dims: MatmulDims


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: int
    dims: MatmulDims
    report: FlopsReport


def flops_speedup_table(points: Iterable[SweepPoint]) -> list[SweepRow]:
    points = list(points)
    if not points:
        raise InvalidArgumentError("the sweep grid is empty")
    return [SweepRow(p.axis, p.value, p.dims, mari_flops(p.dims)) for p in points]


# Reference sweep: four blocks varying batch size, user width, item/cross
# width and output width. d_cross is 1000 in the batch block and 0 elsewhere.
TABLE2_BLOCKS: tuple[tuple[str, tuple[int, ...], dict], ...] = (
    (
        "B",
        (100, 500, 1000, 2000, 5000, 8000, 10000),
        dict(d_user=4000, d_item=1000, d_cross=1000, d_out=512),
    ),
    (
        "D_user",
        (500, 1000, 2000, 5000, 8000, 10000),
        dict(B=2000, d_item=1000, d_cross=0, d_out=512),
    ),
    (
        "D_item_cross",
        (500, 1000, 2000, 5000, 8000, 10000),
        dict(B=2000, d_user=4000, d_cross=0, d_out=512),
    ),
    (
        "D_hidden",
        (128, 512, 1024, 2048),
        dict(B=2000, d_user=4000, d_item=1000, d_cross=0),
    ),
)

_AXIS_FIELD = {
    "B": "B",
    "D_user": "d_user",
    "D_item_cross": "d_item",
    "D_hidden": "d_out",
}


def table2_points(axes: Optional[Iterable[str]] = None) -> list[SweepPoint]:
    """The reference grid, optionally restricted to some axes."""
    wanted = None if axes is None else set(axes)
    points = []
    for axis, values, fixed in TABLE2_BLOCKS:
        if wanted is not None and axis not in wanted:
            continue
        for value in values:
            kwargs = dict(fixed)
            kwargs[_AXIS_FIELD[axis]] = value
            points.append(SweepPoint(axis, value, MatmulDims(**kwargs)))
    if not points:
        raise InvalidArgumentError(f"no axes matched {sorted(wanted)}")
    return points


def table2_rows() -> list[SweepRow]:
    """All 23 reference configurations with their theoretical speedups."""
    return flops_speedup_table(table2_points())
