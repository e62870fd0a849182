"""Rewrite detected MatMuls into their decomposed form.

A detected site multiplies ``[tiled user | item | cross]`` columns by one
weight. The rewrite splits the weight rows by domain, computes the user
partial product once on the single-row pre-tile tensor, computes the
item/cross partial product batched, and combines them with a broadcast
add. Tiling is never materialized: broadcasting realizes it for free, and
any downstream bias add still fires once on the combined batched result.

The item and cross blocks stay fused in one batched product; the per-domain
split is kept as node metadata. The operation count is identical either way
and a site with no user columns then degenerates to the original product
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import FragmentedLayoutError, InvalidArgumentError
from .gca import group_by_concat, run_gca
from .graph import (
    FeatureDomain,
    FeatureLayout,
    Graph,
    Node,
    build_graph,
    concat_node,
    matmul_mari_node,
)
from .reorg import apply_to_graph, plan_reorg


@dataclass(frozen=True)
class SiteReport:
    """Dimensions of one rewritten site, for cost accounting."""

    matmul_id: str
    concat_id: str
    d_user: int
    d_item: int
    d_cross: int
    d_out: int
    reorganized: bool

    def flops_saving(self, batch_size: int) -> int:
        """Multiply-add count removed at this site, times two."""
        return 2 * self.d_out * self.d_user * (batch_size - 1)

    def speedup(self, batch_size: int) -> float:
        total = self.d_user + self.d_item + self.d_cross
        return (batch_size * total) / (
            self.d_user + batch_size * (self.d_item + self.d_cross)
        )


@dataclass
class RewriteReport:
    sites: list[SiteReport] = field(default_factory=list)

    @property
    def site_count(self) -> int:
        return len(self.sites)

    @property
    def concat_groups(self) -> int:
        return len({s.concat_id for s in self.sites})

    def total_saving(self, batch_size: int) -> int:
        return sum(s.flops_saving(batch_size) for s in self.sites)


def _trace_to_concat(g: Graph, matmul_id: str) -> str:
    """Walk the left operand back through data-movement nodes to a concat."""
    cur = g.node(matmul_id).inputs[0]
    while g.node(cur).kind in ("Identity", "Reshape", "Tile"):
        cur = g.node(cur).inputs[0]
    if g.node(cur).kind != "Concat":
        raise InvalidArgumentError(
            f"MatMul {matmul_id} does not trace back to a Concat (found {cur})"
        )
    return cur


def rewrite_site(
    g: Graph,
    matmul_id: str,
    layout: FeatureLayout | None = None,
) -> Graph:
    """Replace one MatMul by its decomposed form.

    The provoking concat's layout must be neat (at most one segment per
    domain, user/item/cross order); reorganize the site first otherwise.
    The matmul's id is reused for the decomposed node so downstream edges
    are untouched. User-side concat inputs must be explicit Tile nodes,
    whose single-row sources feed the user branch directly.
    """
    node = g.nodes.get(matmul_id)
    if node is None or node.kind != "MatMul":
        raise InvalidArgumentError(f"{matmul_id!r} is not a MatMul node")
    concat_id = _trace_to_concat(g, matmul_id)
    concat = g.node(concat_id)
    if layout is None:
        layout = concat.layout
    if layout != concat.layout:
        raise InvalidArgumentError(
            f"layout does not match concat {concat_id} at MatMul {matmul_id}"
        )
    if not layout.is_neat():
        raise FragmentedLayoutError(
            f"concat {concat_id} has a fragmented layout "
            f"{[(d.value, w) for d, w in layout.segments]}; "
            "apply the reorganization pass before rewriting"
        )
    if g.shape(matmul_id)[0] == 1:
        raise InvalidArgumentError(
            f"MatMul {matmul_id} is single-row; nothing to decompose"
        )
    w_id = node.inputs[1]
    if g.node(w_id).kind != "Weight":
        raise InvalidArgumentError(
            f"MatMul {matmul_id} right operand {w_id} is not a Weight node"
        )

    du, di, dc = layout.domain_widths()
    if di + dc == 0:
        raise InvalidArgumentError(
            f"site {concat_id} has no batched columns; nothing to decompose"
        )

    # Partition concat inputs into the user prefix and the batched rest.
    user_sources: list[tuple[str, int]] = []
    batch_parts: list[tuple[str, FeatureDomain, int]] = []
    col = 0
    for ident in concat.inputs:
        width = g.shape(ident)[1]
        dom = _domain_at(layout, col)
        if dom is FeatureDomain.USER:
            src = g.node(ident)
            if src.kind != "Tile":
                raise InvalidArgumentError(
                    f"user input {ident} of concat {concat_id} is not a Tile "
                    "node; its pre-tile form is unavailable"
                )
            user_sources.append((src.inputs[0], width))
        else:
            batch_parts.append((ident, dom, width))
        col += width

    new_nodes: dict[str, Node] = {}

    def fresh(suffix: str) -> str:
        name = f"{matmul_id}.{suffix}"
        if name in g.nodes or name in new_nodes:
            raise InvalidArgumentError(f"node id {name} already taken")
        return name

    if du > 0:
        if len(user_sources) == 1:
            user_operand = user_sources[0][0]
        else:
            user_operand = fresh("user_in")
            new_nodes[user_operand] = concat_node(
                user_operand,
                [ident for ident, _ in user_sources],
                FeatureLayout(
                    tuple((FeatureDomain.USER, w) for _, w in user_sources)
                ),
            )
    else:
        user_operand = None
    if len(batch_parts) == 1:
        batch_operand = batch_parts[0][0]
    else:
        batch_operand = fresh("batch_in")
        new_nodes[batch_operand] = concat_node(
            batch_operand,
            [ident for ident, _, _ in batch_parts],
            FeatureLayout(tuple((dom, w) for _, dom, w in batch_parts)),
        )

    replacement = matmul_mari_node(
        matmul_id,
        user=user_operand,
        batch=batch_operand,
        w=w_id,
        split=(du, di, dc),
    )
    nodes = [replacement if n.id == matmul_id else n for n in g.nodes.values()]
    nodes.extend(new_nodes.values())
    return build_graph(nodes)


def _domain_at(layout: FeatureLayout, col: int) -> FeatureDomain:
    """Domain of the segment covering column ``col``."""
    offset = 0
    for dom, width in layout.segments:
        if offset <= col < offset + width:
            return dom
        offset += width
    raise InvalidArgumentError(f"column {col} outside layout")


def prune_dead_nodes(g: Graph) -> Graph:
    """Drop nodes unreachable from the outputs, keeping all Input nodes so
    the graph's input signature is preserved."""
    live = set(g.outputs)
    stack = list(g.outputs)
    while stack:
        for ident in g.node(stack.pop()).inputs:
            if ident not in live:
                live.add(ident)
                stack.append(ident)
    keep = [n for n in g.nodes.values() if n.id in live or n.kind == "Input"]
    if len(keep) == len(g):
        return g
    return build_graph(keep)


def rewrite_all(g: Graph) -> tuple[Graph, RewriteReport]:
    """Detect, reorganize and rewrite every eligible site.

    Already-rewritten graphs come back unchanged: decomposed nodes are a
    different kind and are never re-detected.
    """
    report = RewriteReport()
    sites = run_gca(g)
    if not sites:
        return g, report
    for concat_id, group in group_by_concat(sites).items():
        try:
            layout = g.node(concat_id).layout
            plan = plan_reorg(layout)
            reorganized = not (plan.is_identity and layout.is_neat())
            if reorganized:
                g = apply_to_graph(g, concat_id, plan)
            neat = g.node(concat_id).layout
            du, di, dc = neat.domain_widths()
            for site in group:
                g = rewrite_site(g, site.matmul_id, neat)
                report.sites.append(
                    SiteReport(
                        site.matmul_id,
                        concat_id,
                        du,
                        di,
                        dc,
                        g.shape(site.matmul_id)[1],
                        reorganized,
                    )
                )
        except (InvalidArgumentError, FragmentedLayoutError) as exc:
            raise type(exc)(f"site {concat_id}: {exc}") from exc
    return prune_dead_nodes(g), report


def fragment_site(g: Graph, matmul_id: str, chunk: int) -> Graph:
    """Deliberately pessimized variant of one MatMul.

    Execution splits the inner dimension into ``ceil(D / chunk)`` column
    chunks, each computed as its own product and summed, simulating a
    fragmented feature layout. Results are unchanged up to rounding; a
    chunk spanning the whole width is the original single product.
    """
    if chunk < 1:
        raise InvalidArgumentError(f"chunk must be >= 1, got {chunk}")
    node = g.nodes.get(matmul_id)
    if node is None or node.kind != "MatMul":
        raise InvalidArgumentError(f"{matmul_id!r} is not a MatMul node")
    inner = g.shape(node.inputs[0])[1]
    effective = None if chunk >= inner else chunk
    replacement = Node(matmul_id, "MatMul", node.inputs, chunk=effective)
    return g.replace_nodes({matmul_id: replacement})
