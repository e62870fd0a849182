"""Feature-layout reorganization.

Production feature layouts interleave user, item and cross columns, which
would shatter the decomposed MatMul into many small products. This pass
computes the column permutation that stably groups columns into
[user | item | cross] order, reorders the concat's inputs accordingly,
coalesces the layout down to one segment per domain, and row-permutes the
downstream weights so outputs are unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidArgumentError
from .gca import group_by_concat, run_gca
from .graph import (
    DOMAIN_ORDER,
    FeatureDomain,
    FeatureLayout,
    Graph,
    Node,
    weight,
)


@dataclass(frozen=True)
class ColumnPermutation:
    """Maps new column index to old column index, with the per-domain
    widths of the grouped layout."""

    perm: tuple[int, ...]
    boundaries: tuple[int, int, int]

    @property
    def is_identity(self) -> bool:
        return all(i == p for i, p in enumerate(self.perm))

    def inverse(self) -> "ColumnPermutation":
        inv = [0] * len(self.perm)
        for new, old in enumerate(self.perm):
            inv[old] = new
        return ColumnPermutation(tuple(inv), self.boundaries)


def plan_reorg(layout: FeatureLayout) -> ColumnPermutation:
    """Stable grouping of columns into user, item, cross order.

    Within each domain the original relative column order is preserved.
    ``boundaries`` holds the grouped (user, item, cross) widths; absent
    domains get width zero.
    """
    per_domain: dict[FeatureDomain, list[int]] = {d: [] for d in DOMAIN_ORDER}
    col = 0
    for dom, width in layout.segments:
        per_domain[dom].extend(range(col, col + width))
        col += width
    perm = tuple(
        idx for dom in DOMAIN_ORDER for idx in per_domain[dom]
    )
    boundaries = tuple(len(per_domain[dom]) for dom in DOMAIN_ORDER)
    return ColumnPermutation(perm, boundaries)


def grouped_layout(layout: FeatureLayout) -> FeatureLayout:
    """The layout after grouping: one segment per present domain."""
    du, di, dc = plan_reorg(layout).boundaries
    segments = [
        (dom, width)
        for dom, width in zip(DOMAIN_ORDER, (du, di, dc))
        if width > 0
    ]
    return FeatureLayout(tuple(segments))


def apply_to_weights(w: np.ndarray, p: ColumnPermutation) -> np.ndarray:
    """Row-permute a weight so the permuted pipeline computes the same
    product: row ``i`` of the result is row ``perm[i]`` of ``w``."""
    if w.ndim != 2 or w.shape[0] != len(p.perm):
        raise DimensionError(
            f"weight shape {w.shape} does not match a {len(p.perm)}-column permutation"
        )
    out = np.ascontiguousarray(w[list(p.perm), :])
    out.flags.writeable = False
    return out


def _site_matmuls(g: Graph, concat_id: str) -> list[str]:
    """The detected MatMuls provoked by this concat."""
    return [s.matmul_id for s in run_gca(g) if s.concat_id == concat_id]


def _permuted_inputs(g: Graph, concat: Node) -> tuple[list[str], ColumnPermutation]:
    """Concat inputs stably regrouped by domain, plus the induced column
    permutation (identical to ``plan_reorg`` of the concat's layout)."""
    # Assign each input the domain of the segment covering it.
    input_domains: list[FeatureDomain] = []
    seg_iter = iter(concat.layout.segments)
    dom, remaining = next(seg_iter)
    for ident in concat.inputs:
        width = g.shape(ident)[1]
        while remaining == 0:
            dom, remaining = next(seg_iter)
        input_domains.append(dom)
        remaining -= width
    order = sorted(
        range(len(concat.inputs)),
        key=lambda i: (DOMAIN_ORDER.index(input_domains[i]), i),
    )
    return [concat.inputs[i] for i in order], plan_reorg(concat.layout)


def apply_to_graph(g: Graph, site: str, p: ColumnPermutation) -> Graph:
    """Reorganize one concat site and remap its downstream weights.

    ``site`` must be a concat feeding detected MatMuls, and those MatMuls
    must be the concat's only transitive consumers (a permuted column order
    would change any other consumer's meaning). Returns ``g`` unchanged
    for an already neat site.
    """
    concat = g.nodes.get(site)
    if concat is None or concat.kind != "Concat":
        raise InvalidArgumentError(f"{site!r} is not a Concat node")
    expected = plan_reorg(concat.layout)
    if expected != p:
        raise InvalidArgumentError(
            f"permutation does not match the layout of concat {site}"
        )
    if p.is_identity and concat.layout.is_neat():
        return g

    matmuls = _site_matmuls(g, site)
    if not matmuls:
        raise InvalidArgumentError(
            f"concat {site} has no detected MatMuls to reorganize"
        )
    # Reject sites whose concat output leaks to consumers other than the
    # detected MatMuls (through data-movement nodes).
    frontier = [site]
    seen = set(frontier)
    while frontier:
        cur = frontier.pop()
        for succ in g.successors(cur):
            if succ in seen:
                continue
            seen.add(succ)
            kind = g.node(succ).kind
            if kind == "MatMul" and succ in matmuls:
                continue
            if kind in ("Reshape", "Identity"):
                frontier.append(succ)
                continue
            raise InvalidArgumentError(
                f"concat {site} also feeds {succ} ({kind}); cannot reorganize"
            )

    new_inputs, _ = _permuted_inputs(g, concat)
    replacements: dict[str, Node] = {
        site: Node(
            site,
            "Concat",
            tuple(new_inputs),
            layout=grouped_layout(concat.layout),
        )
    }
    for mm in matmuls:
        mm_node = g.node(mm)
        w_id = mm_node.inputs[1]
        w_node = g.node(w_id)
        if w_node.kind != "Weight":
            raise InvalidArgumentError(
                f"MatMul {mm} right operand {w_id} is not a Weight node"
            )
        if any(consumer not in matmuls for consumer in g.successors(w_id)):
            raise InvalidArgumentError(
                f"weight {w_id} is shared outside site {site}; cannot remap"
            )
        if w_id not in replacements:
            replacements[w_id] = weight(w_id, apply_to_weights(w_node.data, p))
    return g.replace_nodes(replacements)


def reorg_all(g: Graph) -> tuple[Graph, list[str]]:
    """Reorganize every detected site. Returns the new graph and the ids of
    the concats that actually changed."""
    changed = []
    for concat_id in group_by_concat(run_gca(g)):
        plan = plan_reorg(g.node(concat_id).layout)
        before = g
        g = apply_to_graph(g, concat_id, plan)
        if g is not before:
            changed.append(concat_id)
    return g, changed
