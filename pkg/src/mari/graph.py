"""Computation-graph data model.

A ``Graph`` is an immutable DAG of typed nodes. Inputs are tagged with the
feature domain they come from (user, item or cross), concatenations carry a
``FeatureLayout`` describing which domain owns each column range, and one
symbolic batch dimension ``B`` flows through batched nodes. User-domain
inputs are single-row until an explicit ``Tile`` node replicates them, which
is the shape discipline of one-shot user-side inference.

Shapes are inferred and checked at build time. A static shape is a tuple
whose leading entry is either a literal row count or the :data:`BATCH`
sentinel; the concrete batch size is only known at execution time.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import CycleError, DimensionError, InvalidArgumentError


class FeatureDomain(Enum):
    USER = "User"
    ITEM = "Item"
    CROSS = "Cross"

    def __str__(self) -> str:  # pragma: no cover - trivial
        return self.value


# Canonical domain order for a neat layout: user, then item, then cross.
DOMAIN_ORDER = (FeatureDomain.USER, FeatureDomain.ITEM, FeatureDomain.CROSS)


class _Batch:
    """Sentinel for the symbolic batch dimension."""

    def __repr__(self) -> str:
        return "B"


BATCH = _Batch()

Dim = "int | _Batch"
Shape = tuple


@dataclass(frozen=True)
class FeatureLayout:
    """Ordered (domain, width) segments over the columns of a concatenation."""

    segments: tuple[tuple[FeatureDomain, int], ...]

    def __post_init__(self):
        if not self.segments:
            raise InvalidArgumentError("a layout needs at least one segment")
        for dom, width in self.segments:
            if not isinstance(dom, FeatureDomain):
                raise InvalidArgumentError(f"bad segment domain: {dom!r}")
            if width < 1:
                raise InvalidArgumentError(f"segment width must be >= 1, got {width}")

    @staticmethod
    def of(*segments: tuple[FeatureDomain, int]) -> "FeatureLayout":
        return FeatureLayout(tuple((d, int(w)) for d, w in segments))

    @property
    def total_width(self) -> int:
        return sum(w for _, w in self.segments)

    def domain_width(self, domain: FeatureDomain) -> int:
        return sum(w for d, w in self.segments if d is domain)

    def domain_widths(self) -> tuple[int, int, int]:
        """Per-domain width sums in (user, item, cross) order."""
        return tuple(self.domain_width(d) for d in DOMAIN_ORDER)

    def is_neat(self) -> bool:
        """True when each domain appears at most once, in user/item/cross order."""
        ranks = [DOMAIN_ORDER.index(d) for d, _ in self.segments]
        return ranks == sorted(ranks) and len(ranks) == len(set(ranks))

    def coalesced(self) -> "FeatureLayout":
        """Merge adjacent segments that share a domain."""
        merged: list[tuple[FeatureDomain, int]] = []
        for dom, width in self.segments:
            if merged and merged[-1][0] is dom:
                merged[-1] = (dom, merged[-1][1] + width)
            else:
                merged.append((dom, width))
        return FeatureLayout(tuple(merged))


# Node kinds. MatMulMaRI only ever appears in rewritten graphs.
KINDS = frozenset(
    {
        "Input",
        "Weight",
        "MatMul",
        "MatMulMaRI",
        "Concat",
        "Tile",
        "Add",
        "Relu",
        "Softmax",
        "CrossAttention",
        "Reshape",
        "Identity",
        "Output",
    }
)

# Kinds that move or reshape data without arithmetic. The detection pass
# traverses these when walking from a concatenation to downstream MatMuls.
NONCOMPUTATIONAL_KINDS = frozenset({"Reshape", "Identity", "Tile"})


@dataclass(frozen=True, eq=False)
class Node:
    """One graph node. Kind-specific attributes stay ``None`` elsewhere."""

    id: str
    kind: str
    inputs: tuple[str, ...] = ()
    domain: Optional[FeatureDomain] = None  # Input
    width: Optional[int] = None  # Input
    seq_len: Optional[int] = None  # Input (user sequence)
    batched: Optional[bool] = None  # Input
    rows: Optional[int] = None  # Weight
    cols: Optional[int] = None  # Weight
    data: Optional[np.ndarray] = None  # Weight payload, float64
    layout: Optional[FeatureLayout] = None  # Concat
    split: Optional[tuple[int, int, int]] = None  # MatMulMaRI
    chunk: Optional[int] = None  # MatMul fragmentation
    dims: Optional[tuple[int, ...]] = None  # Reshape per-sample shape
    d_q: Optional[int] = None  # CrossAttention
    d_kv: Optional[int] = None
    d_hidden: Optional[int] = None


def _check_id(node_id: str) -> str:
    if not node_id or not node_id.replace("_", "a").replace(".", "a").isalnum():
        raise InvalidArgumentError(f"bad node id: {node_id!r}")
    if node_id[0].isdigit():
        raise InvalidArgumentError(f"node id may not start with a digit: {node_id!r}")
    return node_id


def input_node(
    node_id: str,
    domain: FeatureDomain,
    width: int,
    *,
    seq_len: Optional[int] = None,
) -> Node:
    """A model input. User inputs are single-row (or an L x width sequence);
    item and cross inputs carry the batch dimension."""
    if width < 1:
        raise InvalidArgumentError(f"input width must be >= 1, got {width}")
    if seq_len is not None:
        if domain is not FeatureDomain.USER:
            raise InvalidArgumentError("sequence inputs must be user-domain")
        if seq_len < 1:
            raise InvalidArgumentError(f"seq_len must be >= 1, got {seq_len}")
    batched = domain is not FeatureDomain.USER
    return Node(
        _check_id(node_id),
        "Input",
        domain=domain,
        width=int(width),
        seq_len=None if seq_len is None else int(seq_len),
        batched=batched,
    )


def weight(node_id: str, values) -> Node:
    """A learnable parameter with an explicit float64 payload."""
    data = np.ascontiguousarray(values, dtype=np.float64)
    if data.ndim != 2:
        raise DimensionError(f"weights must be rank 2, got shape {data.shape}")
    data.flags.writeable = False
    return Node(
        _check_id(node_id),
        "Weight",
        rows=data.shape[0],
        cols=data.shape[1],
        data=data,
    )


def matmul_node(node_id: str, x: str, w: str, *, chunk: Optional[int] = None) -> Node:
    """Product of a data tensor with a non-batched rank-2 operand.

    ``chunk`` splits the inner dimension into column chunks executed as
    separate products and summed; it simulates a fragmented feature layout
    and never changes the result beyond rounding.
    """
    if chunk is not None and chunk < 1:
        raise InvalidArgumentError(f"chunk must be >= 1, got {chunk}")
    return Node(_check_id(node_id), "MatMul", (x, w), chunk=chunk)


def matmul_mari_node(
    node_id: str,
    *,
    user: Optional[str],
    batch: str,
    w: str,
    split: tuple[int, int, int],
) -> Node:
    """Decomposed product: a one-row user branch plus a batched item/cross
    branch, combined by broadcast addition."""
    du, di, dc = (int(v) for v in split)
    if min(du, di, dc) < 0 or di + dc < 1:
        raise InvalidArgumentError(f"bad split {split}: batched widths must be >= 1")
    if (user is None) != (du == 0):
        raise InvalidArgumentError("user operand must be present iff user width > 0")
    inputs = (batch, w) if user is None else (user, batch, w)
    return Node(_check_id(node_id), "MatMulMaRI", inputs, split=(du, di, dc))


def concat_node(node_id: str, parts: Sequence[str], layout: FeatureLayout) -> Node:
    if not parts:
        raise InvalidArgumentError("concat needs at least one input")
    return Node(_check_id(node_id), "Concat", tuple(parts), layout=layout)


def tile_node(node_id: str, x: str) -> Node:
    return Node(_check_id(node_id), "Tile", (x,))


def add_node(node_id: str, a: str, b: str) -> Node:
    return Node(_check_id(node_id), "Add", (a, b))


def relu_node(node_id: str, x: str) -> Node:
    return Node(_check_id(node_id), "Relu", (x,))


def softmax_node(node_id: str, x: str) -> Node:
    return Node(_check_id(node_id), "Softmax", (x,))


def identity_node(node_id: str, x: str) -> Node:
    return Node(_check_id(node_id), "Identity", (x,))


def reshape_node(node_id: str, x: str, dims: Sequence[int]) -> Node:
    dims = tuple(int(d) for d in dims)
    if not dims or len(dims) > 2 or min(dims) < 1:
        raise InvalidArgumentError(f"bad reshape dims {dims}")
    return Node(_check_id(node_id), "Reshape", (x,), dims=dims)


def cross_attention_node(
    node_id: str,
    q: str,
    kv: str,
    w_k: str,
    w_v: str,
    *,
    d_q: int,
    d_kv: int,
    d_hidden: int,
) -> Node:
    """Attention between a projected per-item query and a user sequence.

    The query projection lives upstream as an ordinary MatMul node; this
    node projects keys and values from the sequence and applies scaled
    softmax attention.
    """
    if min(d_q, d_kv, d_hidden) < 1:
        raise InvalidArgumentError("attention dims must be >= 1")
    if d_q != d_hidden:
        raise InvalidArgumentError(
            f"query width {d_q} must equal attention width {d_hidden}"
        )
    return Node(
        _check_id(node_id),
        "CrossAttention",
        (q, kv, w_k, w_v),
        d_q=int(d_q),
        d_kv=int(d_kv),
        d_hidden=int(d_hidden),
    )


def output_node(node_id: str, x: str) -> Node:
    return Node(_check_id(node_id), "Output", (x,))


def _rows_equal(a, b) -> bool:
    return (a is b) or (a == b and not isinstance(a, _Batch) and not isinstance(b, _Batch))


def _fmt_shape(s: Shape) -> str:
    return "x".join(str(d) for d in s)


# Required input count per kind; None means at least one.
_ARITY = {
    "Input": 0,
    "Weight": 0,
    "MatMul": 2,
    "Concat": None,
    "Tile": 1,
    "Add": 2,
    "Relu": 1,
    "Softmax": 1,
    "CrossAttention": 4,
    "Reshape": 1,
    "Identity": 1,
    "Output": 1,
}


def _check_arity(node: Node) -> None:
    if node.kind == "MatMulMaRI":
        expected = 2 if node.split[0] == 0 else 3
        if len(node.inputs) != expected:
            raise InvalidArgumentError(
                f"node {node.id}: expected {expected} inputs, got {len(node.inputs)}"
            )
        return
    arity = _ARITY[node.kind]
    if arity is None:
        if not node.inputs:
            raise InvalidArgumentError(f"node {node.id}: needs at least one input")
    elif len(node.inputs) != arity:
        raise InvalidArgumentError(
            f"node {node.id} ({node.kind}): expected {arity} inputs, "
            f"got {len(node.inputs)}"
        )


def _infer_shape(node: Node, in_shapes: list[Shape]) -> Shape:
    """Static shape of ``node`` given its input shapes. Raises DimensionError
    on any incompatible edge, naming the edge."""
    k = node.kind
    if k == "Input":
        if node.batched and node.domain is FeatureDomain.USER:
            raise DimensionError(
                f"node {node.id}: user inputs are single-row until an explicit Tile"
            )
        if not node.batched and node.domain is not FeatureDomain.USER:
            raise DimensionError(f"node {node.id}: item/cross inputs are batched")
        if node.seq_len is not None:
            if node.domain is not FeatureDomain.USER:
                raise DimensionError(f"node {node.id}: sequences are user-domain")
            return (node.seq_len, node.width)
        return (BATCH, node.width) if node.batched else (1, node.width)
    if k == "Weight":
        return (node.rows, node.cols)

    def err(msg: str):
        raise DimensionError(f"node {node.id} ({k}): {msg}")

    if k == "MatMul":
        (xs, ws) = in_shapes
        if len(xs) != 2 or len(ws) != 2:
            err(f"operands must be rank 2, got {_fmt_shape(xs)} and {_fmt_shape(ws)}")
        if isinstance(ws[0], _Batch):
            err("right operand may not be batched")
        if isinstance(xs[1], _Batch) or xs[1] != ws[0]:
            err(f"inner dims disagree: {_fmt_shape(xs)} x {_fmt_shape(ws)}")
        if node.chunk is not None and node.chunk < 1:
            raise InvalidArgumentError(f"node {node.id}: chunk must be >= 1")
        return (xs[0], ws[1])
    if k == "MatMulMaRI":
        du, di, dc = node.split
        shapes = list(in_shapes)
        ws = shapes.pop()
        bs = shapes.pop()
        us = shapes.pop() if shapes else None
        if du > 0:
            if us is None or us != (1, du):
                err(f"user operand must be 1x{du}")
        if not (len(bs) == 2 and isinstance(bs[0], _Batch) and bs[1] == di + dc):
            err(f"batched operand must be Bx{di + dc}, got {_fmt_shape(bs)}")
        if ws != (du + di + dc, ws[1]):
            err(f"weight must have {du + di + dc} rows, got {_fmt_shape(ws)}")
        return (BATCH, ws[1])
    if k == "Concat":
        if any(len(s) != 2 for s in in_shapes):
            err("all inputs must be rank 2")
        rows = in_shapes[0][0]
        for ident, s in zip(node.inputs, in_shapes):
            if not _rows_equal(s[0], rows) and not (
                isinstance(s[0], _Batch) and isinstance(rows, _Batch)
            ):
                err(f"row mismatch on edge from {ident}")
        widths = [s[1] for s in in_shapes]
        if sum(widths) != node.layout.total_width:
            err(
                f"layout width {node.layout.total_width} != input widths {sum(widths)}"
            )
        # Every input must fall inside exactly one layout segment.
        seg_iter = iter(node.layout.segments)
        dom, remaining = next(seg_iter)
        for ident, w in zip(node.inputs, widths):
            while remaining == 0:
                dom, remaining = next(seg_iter)
            if w > remaining:
                err(f"input {ident} straddles a layout segment boundary")
            remaining -= w
        return (rows, sum(widths))
    if k == "Tile":
        (xs,) = in_shapes
        if len(xs) != 2 or xs[0] != 1:
            err(f"tile input must be a single row, got {_fmt_shape(xs)}")
        return (BATCH, xs[1])
    if k == "Add":
        a, b = in_shapes
        if len(a) != 2 or len(b) != 2 or a[1] != b[1]:
            err(f"column mismatch: {_fmt_shape(a)} + {_fmt_shape(b)}")
        if _rows_equal(a[0], b[0]) or (
            isinstance(a[0], _Batch) and isinstance(b[0], _Batch)
        ):
            return a
        if a[0] == 1:
            return b
        if b[0] == 1:
            return a
        err(f"row mismatch: {_fmt_shape(a)} + {_fmt_shape(b)}")
    if k in ("Relu", "Identity", "Output"):
        return in_shapes[0]
    if k == "Softmax":
        (xs,) = in_shapes
        if len(xs) != 2:
            err("softmax input must be rank 2")
        return xs
    if k == "Reshape":
        (xs,) = in_shapes
        per_sample = 1
        for d in xs[1:]:
            per_sample *= d
        target = 1
        for d in node.dims:
            target *= d
        if per_sample != target:
            err(f"cannot reshape {_fmt_shape(xs)} to per-sample dims {node.dims}")
        return (xs[0], *node.dims)
    if k == "CrossAttention":
        qs, kvs, wks, wvs = in_shapes
        if len(qs) != 2 or qs[1] != node.d_hidden:
            err(f"query must be Bx{node.d_hidden}, got {_fmt_shape(qs)}")
        if len(kvs) != 2 or isinstance(kvs[0], _Batch) or kvs[1] != node.d_kv:
            err(f"key/value source must be Lx{node.d_kv}, got {_fmt_shape(kvs)}")
        for name, s in (("w_k", wks), ("w_v", wvs)):
            if s != (node.d_kv, node.d_hidden):
                err(f"{name} must be {node.d_kv}x{node.d_hidden}, got {_fmt_shape(s)}")
        return (qs[0], node.d_hidden)
    raise InvalidArgumentError(f"unknown node kind {k!r}")


class Graph:
    """Validated, immutable DAG. Construct via :func:`build_graph`."""

    __slots__ = ("nodes", "topo_order", "outputs", "shapes", "_successors")

    def __init__(self, nodes, topo_order, outputs, shapes, successors):
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "topo_order", topo_order)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "shapes", shapes)
        object.__setattr__(self, "_successors", successors)

    def __setattr__(self, *_):  # pragma: no cover - defensive
        raise AttributeError("Graph is immutable")

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[Node]:
        return iter(self.nodes.values())

    def node(self, node_id: str) -> Node:
        return self.nodes[node_id]

    def shape(self, node_id: str) -> Shape:
        return self.shapes[node_id]

    def successors(self, node_id: str) -> tuple[str, ...]:
        return self._successors[node_id]

    @property
    def edge_count(self) -> int:
        return sum(len(n.inputs) for n in self)

    def input_nodes(self) -> list[Node]:
        return [n for n in self if n.kind == "Input"]

    def input_signature(self) -> tuple:
        """Hashable summary of the Input nodes: (id, domain, width, seq_len)."""
        return tuple(
            sorted(
                (n.id, n.domain.value, n.width, n.seq_len)
                for n in self.input_nodes()
            )
        )

    def replace_nodes(self, replacements: Mapping[str, Node]) -> "Graph":
        """New graph with the given nodes swapped in (ids preserved)."""
        return build_graph(
            [replacements.get(n.id, n) for n in self.nodes.values()]
        )


def _find_back_edge(nodes: Mapping[str, Node], unresolved: set) -> tuple[str, str]:
    """Locate one edge on a cycle among ``unresolved`` nodes."""
    start = sorted(unresolved)[0]
    seen: list[str] = []
    cur = start
    while cur not in seen:
        seen.append(cur)
        cur = next(i for i in nodes[cur].inputs if i in unresolved)
    return seen[-1], cur


def build_graph(nodes: Iterable[Node]) -> Graph:
    """Validate a node set and return an immutable graph.

    Checks id uniqueness, reference integrity, acyclicity and per-edge
    shape compatibility. The topological order breaks ties by node id, so
    identical node sets always produce the same order. Graph outputs are
    the Output nodes in declaration order.
    """
    node_map: dict[str, Node] = {}
    for n in nodes:
        if n.kind not in KINDS:
            raise InvalidArgumentError(f"unknown node kind {n.kind!r}")
        if n.id in node_map:
            raise InvalidArgumentError(f"duplicate node id {n.id!r}")
        _check_arity(n)
        node_map[n.id] = n
    for n in node_map.values():
        for ref in n.inputs:
            if ref not in node_map:
                raise InvalidArgumentError(f"node {n.id} references unknown id {ref!r}")

    successors: dict[str, list[str]] = {i: [] for i in node_map}
    indeg = {i: len(n.inputs) for i, n in node_map.items()}
    for n in node_map.values():
        for ref in n.inputs:
            successors[ref].append(n.id)

    ready = [i for i, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    topo: list[str] = []
    remaining = dict(indeg)
    while ready:
        cur = heapq.heappop(ready)
        topo.append(cur)
        for succ in successors[cur]:
            remaining[succ] -= 1
            if remaining[succ] == 0:
                heapq.heappush(ready, succ)
    if len(topo) != len(node_map):
        unresolved = {i for i in node_map if remaining[i] > 0}
        src, dst = _find_back_edge(node_map, unresolved)
        raise CycleError(f"graph has a cycle; back edge {src} -> {dst}")

    shapes: dict[str, Shape] = {}
    for node_id in topo:
        n = node_map[node_id]
        shapes[node_id] = _infer_shape(n, [shapes[i] for i in n.inputs])

    outputs = tuple(i for i, n in node_map.items() if n.kind == "Output")
    succ_frozen = {i: tuple(sorted(s)) for i, s in successors.items()}
    return Graph(dict(node_map), tuple(topo), outputs, shapes, succ_frozen)


def structural_equal(g1: Graph, g2: Graph) -> bool:
    """True when both graphs have the same ids, kinds, edges and attributes.

    Weight payloads are compared exactly when both carry one.
    """
    if set(g1.nodes) != set(g2.nodes) or g1.outputs != g2.outputs:
        return False
    for node_id, a in g1.nodes.items():
        b = g2.nodes[node_id]
        if (a.kind, a.inputs) != (b.kind, b.inputs):
            return False
        for attr in (
            "domain",
            "width",
            "seq_len",
            "batched",
            "rows",
            "cols",
            "layout",
            "split",
            "chunk",
            "dims",
            "d_q",
            "d_kv",
            "d_hidden",
        ):
            if getattr(a, attr) != getattr(b, attr):
                return False
        if (a.data is None) != (b.data is None):
            return False
        if a.data is not None and not np.array_equal(a.data, b.data):
            return False
    return True
