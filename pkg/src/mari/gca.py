"""Color-propagation pass that finds re-parameterizable MatMul nodes.

Every node gets one of three colors. Inputs start out colored by feature
domain: user-side Yellow, item/cross-side Blue, everything else Uncolored.
Colors then propagate downstream to a fixed point with Blue dominating:
a Blue parent forces its children Blue (overwriting Yellow), a Yellow
parent colors Uncolored children Yellow. A node's color can therefore
change at most twice (Uncolored to Yellow to Blue), which bounds the
worklist loop.

A concatenation whose direct inputs include both Yellow and Blue nodes
marks a site where batched item/cross data meets replicated user data.
All MatMul nodes reachable from such a concat through purely
data-movement nodes (reshape, identity, tile) are optimizable: a column
block of their input is constant across the batch.

The worklist is a stack with re-push-on-change rather than a literal
one-pass DFS; it prunes repeated traversals and reaches the same fixed
point under any visit order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InvalidArgumentError
from .graph import NONCOMPUTATIONAL_KINDS, FeatureDomain, FeatureLayout, Graph


class Color(Enum):
    YELLOW = "Yellow"
    BLUE = "Blue"
    UNCOLORED = "Uncolored"


@dataclass(frozen=True)
class OptSite:
    """One optimizable MatMul with the concat that provoked its detection."""

    matmul_id: str
    concat_id: str
    layout: FeatureLayout


def initialize_colors(g: Graph) -> dict[str, Color]:
    """Color Input nodes by feature domain; everything else Uncolored."""
    colors = {}
    for node in g:
        if node.kind == "Input":
            colors[node.id] = (
                Color.YELLOW
                if node.domain is FeatureDomain.USER
                else Color.BLUE
            )
        else:
            colors[node.id] = Color.UNCOLORED
    return colors


def propagate_worklist(
    successors: Mapping[str, Sequence[str]],
    colors: Mapping[str, Color],
    *,
    initial_order: Optional[Sequence[str]] = None,
    budget_nodes: Optional[int] = None,
) -> dict[str, Color]:
    """Run color propagation over a raw successor map.

    ``initial_order`` fixes the order colored nodes are pushed, which tests
    use to show the fixed point is order independent. Edge relaxations are
    counted and must stay within 2 * nodes * edges.
    """
    result = dict(colors)
    if initial_order is None:
        stack = sorted(i for i, c in result.items() if c is not Color.UNCOLORED)
    else:
        stack = [i for i in initial_order if result[i] is not Color.UNCOLORED]
    n_nodes = budget_nodes if budget_nodes is not None else len(result)
    n_edges = sum(len(s) for s in successors.values())
    budget = 2 * n_nodes * n_edges
    relaxations = 0
    while stack:
        u = stack.pop()
        cu = result[u]
        for v in successors.get(u, ()):
            relaxations += 1
            if relaxations > budget:
                raise AssertionError(
                    f"propagation exceeded its {budget} edge-relaxation budget"
                )
            updated = False
            if cu is Color.BLUE and result[v] is not Color.BLUE:
                result[v] = Color.BLUE
                updated = True
            elif cu is Color.YELLOW and result[v] is Color.UNCOLORED:
                result[v] = Color.YELLOW
                updated = True
            if updated:
                stack.append(v)
    return result


def propagate(g: Graph, colors: Mapping[str, Color]) -> dict[str, Color]:
    """Propagate colors over a validated graph to the fixed point."""
    return propagate_worklist(
        {i: g.successors(i) for i in g.nodes}, colors, budget_nodes=len(g)
    )


def _reachable_matmuls(
    g: Graph, concat_id: str, noncomputational: frozenset[str]
) -> list[str]:
    """MatMuls reachable from ``concat_id`` via data-movement nodes only."""
    found = []
    seen = {concat_id}
    frontier = [concat_id]
    while frontier:
        cur = frontier.pop()
        for succ in g.successors(cur):
            if succ in seen:
                continue
            seen.add(succ)
            kind = g.node(succ).kind
            if kind == "MatMul":
                found.append(succ)
            elif kind in noncomputational:
                frontier.append(succ)
    return found


def detect_optimizable(
    g: Graph,
    colors: Mapping[str, Color],
    *,
    noncomputational: frozenset[str] = NONCOMPUTATIONAL_KINDS,
) -> tuple[OptSite, ...]:
    """Collect optimizable MatMuls under every mixed concat.

    A concat is mixed when its direct inputs carry at least one Yellow and
    one Blue color. Uncolored inputs count as neither. The result is sorted
    by (concat id, matmul id); each MatMul belongs to exactly one concat.
    """
    sites: dict[str, OptSite] = {}
    for node in g:
        if node.kind != "Concat":
            continue
        input_colors = {colors[i] for i in node.inputs}
        if not (Color.YELLOW in input_colors and Color.BLUE in input_colors):
            continue
        for mm in _reachable_matmuls(g, node.id, noncomputational):
            site = OptSite(mm, node.id, node.layout)
            if mm in sites and sites[mm].concat_id != node.id:
                raise InvalidArgumentError(
                    f"MatMul {mm} is reachable from two mixed concats "
                    f"({sites[mm].concat_id}, {node.id})"
                )
            sites[mm] = site
    return tuple(sorted(sites.values(), key=lambda s: (s.concat_id, s.matmul_id)))


def run_gca(
    g: Graph,
    *,
    noncomputational: frozenset[str] = NONCOMPUTATIONAL_KINDS,
) -> tuple[OptSite, ...]:
    """Initialization, propagation and detection in one call."""
    colors = propagate(g, initialize_colors(g))
    return detect_optimizable(g, colors, noncomputational=noncomputational)


def group_by_concat(sites: Iterable[OptSite]) -> dict[str, list[OptSite]]:
    """Sites grouped by their provoking concat, insertion-ordered."""
    groups: dict[str, list[OptSite]] = {}
    for site in sites:
        groups.setdefault(site.concat_id, []).append(site)
    return groups
