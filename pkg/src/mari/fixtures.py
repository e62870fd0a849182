"""Reference graphs used by tests, the benchmark harness and the CLI.

``fixture_ranking_model`` builds a simplified multi-task ranking model in
one-shot (tile-deferred) form. It contains exactly three structurally
distinct mixed-concat sites that feed MatMuls: the first fully-connected
layer of every expert, the first fully-connected layer of the shared task
tower, and the attention query projection. ``single_site_graph`` builds the
minimal tile-concat-matmul pattern used for parameter sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .graph import (
    FeatureDomain,
    FeatureLayout,
    Graph,
    add_node,
    build_graph,
    concat_node,
    cross_attention_node,
    input_node,
    matmul_node,
    output_node,
    relu_node,
    tile_node,
    weight,
)

USER = FeatureDomain.USER
ITEM = FeatureDomain.ITEM
CROSS = FeatureDomain.CROSS


@dataclass(frozen=True)
class FixtureDims:
    """Dimension bundle for the ranking-model fixture."""

    d_user: int = 12
    d_item: int = 8
    d_cross: int = 6
    d_item_query: int = 6
    seq_len: int = 10
    d_seq: int = 8
    d_attn: int = 8
    d_user_hidden: int = 10
    d_user_tower: int = 6
    n_experts: int = 3
    d_expert: int = 16
    d_tower: int = 12
    n_tasks: int = 2

    def validate(self) -> None:
        for name, value in self.__dict__.items():
            if value < 1:
                raise InvalidArgumentError(f"{name} must be >= 1, got {value}")


def _w(rng: np.random.Generator, node_id: str, rows: int, cols: int):
    return weight(node_id, rng.uniform(-1.0, 1.0, (rows, cols)))


def fixture_ranking_model(
    dims: FixtureDims = FixtureDims(),
    *,
    seed: int = 0,
    fragmented: bool = False,
) -> Graph:
    """Simplified ranking model with a user subnetwork, cross attention,
    a mixture-of-experts block and a shared task tower.

    With ``fragmented=True`` the expert concatenation interleaves domains
    instead of grouping them, exercising the reorganization pass.
    """
    dims.validate()
    rng = np.random.default_rng(seed)
    d = dims
    nodes = [
        input_node("user_feat", USER, d.d_user),
        input_node("user_seq", USER, d.d_seq, seq_len=d.seq_len),
        input_node("item_feat", ITEM, d.d_item),
        input_node("cross_feat", CROSS, d.d_cross),
        input_node("item_query", ITEM, d.d_item_query),
        # User-only subnetwork, computed once per request.
        _w(rng, "w_user", d.d_user, d.d_user_hidden),
        matmul_node("user_fc", "user_feat", "w_user"),
        relu_node("user_act", "user_fc"),
        _w(rng, "w_user_tower", d.d_user, d.d_user_tower),
        matmul_node("tower_user_fc", "user_feat", "w_user_tower"),
        relu_node("tower_user_act", "tower_user_fc"),
        tile_node("user_tiled", "user_act"),
        tile_node("tower_user_tiled", "tower_user_act"),
        # Attention query: mixed concat of tiled user and item features.
        concat_node(
            "query_cat",
            ["user_tiled", "item_query"],
            FeatureLayout.of((USER, d.d_user_hidden), (ITEM, d.d_item_query)),
        ),
        _w(rng, "w_query", d.d_user_hidden + d.d_item_query, d.d_attn),
        matmul_node("query_fc", "query_cat", "w_query"),
        _w(rng, "w_key", d.d_seq, d.d_attn),
        _w(rng, "w_value", d.d_seq, d.d_attn),
        cross_attention_node(
            "attn",
            "query_fc",
            "user_seq",
            "w_key",
            "w_value",
            d_q=d.d_attn,
            d_kv=d.d_seq,
            d_hidden=d.d_attn,
        ),
    ]

    if fragmented:
        expert_parts = ["item_feat", "user_tiled", "attn", "cross_feat"]
        expert_layout = FeatureLayout.of(
            (ITEM, d.d_item),
            (USER, d.d_user_hidden),
            (ITEM, d.d_attn),
            (CROSS, d.d_cross),
        )
    else:
        expert_parts = ["user_tiled", "item_feat", "attn", "cross_feat"]
        expert_layout = FeatureLayout.of(
            (USER, d.d_user_hidden),
            (ITEM, d.d_item),
            (ITEM, d.d_attn),
            (CROSS, d.d_cross),
        )
    nodes.append(concat_node("expert_cat", expert_parts, expert_layout))

    expert_width = d.d_user_hidden + d.d_item + d.d_attn + d.d_cross
    expert_outs = []
    for e in range(d.n_experts):
        nodes += [
            _w(rng, f"w_expert{e}", expert_width, d.d_expert),
            matmul_node(f"expert{e}_fc", "expert_cat", f"w_expert{e}"),
            _w(rng, f"b_expert{e}", 1, d.d_expert),
            add_node(f"expert{e}_bias", f"expert{e}_fc", f"b_expert{e}"),
            relu_node(f"expert{e}_act", f"expert{e}_bias"),
        ]
        expert_outs.append(f"expert{e}_act")
    nodes.append(
        concat_node(
            "experts_cat",
            expert_outs,
            FeatureLayout(tuple((ITEM, d.d_expert) for _ in expert_outs)),
        )
    )

    tower_width = d.d_user_tower + d.n_experts * d.d_expert
    nodes += [
        concat_node(
            "tower_cat",
            ["tower_user_tiled", "experts_cat"],
            FeatureLayout.of(
                (USER, d.d_user_tower), (ITEM, d.n_experts * d.d_expert)
            ),
        ),
        _w(rng, "w_tower", tower_width, d.d_tower),
        matmul_node("tower_fc", "tower_cat", "w_tower"),
        _w(rng, "b_tower", 1, d.d_tower),
        add_node("tower_bias", "tower_fc", "b_tower"),
        relu_node("tower_act", "tower_bias"),
    ]
    for t in range(d.n_tasks):
        nodes += [
            _w(rng, f"w_task{t}", d.d_tower, 1),
            matmul_node(f"task{t}_fc", "tower_act", f"w_task{t}"),
            output_node(f"task{t}_out", f"task{t}_fc"),
        ]
    return build_graph(nodes)


def single_site_graph(
    layout: FeatureLayout,
    d_out: int,
    *,
    seed: int = 0,
) -> Graph:
    """One concat-into-matmul site, one input node per layout segment.

    User segments get a single-row input plus an explicit tile; item and
    cross segments get batched inputs. The concatenation order follows the
    layout, so a fragmented layout yields a fragmented site.
    """
    if d_out < 1:
        raise InvalidArgumentError(f"d_out must be >= 1, got {d_out}")
    rng = np.random.default_rng(seed)
    nodes = []
    parts = []
    for i, (dom, width) in enumerate(layout.segments):
        if dom is USER:
            nodes.append(input_node(f"u{i}", USER, width))
            nodes.append(tile_node(f"u{i}_tiled", f"u{i}"))
            parts.append(f"u{i}_tiled")
        else:
            name = "i" if dom is ITEM else "c"
            nodes.append(input_node(f"{name}{i}", dom, width))
            parts.append(f"{name}{i}")
    nodes.append(concat_node("cat", parts, layout))
    nodes.append(_w(rng, "w", layout.total_width, d_out))
    nodes.append(matmul_node("mm", "cat", "w"))
    nodes.append(output_node("out", "mm"))
    return build_graph(nodes)


def neat_site_graph(
    d_user: int, d_item: int, d_cross: int, d_out: int, *, seed: int = 0
) -> Graph:
    """Neat [user | item | cross] site; zero-width domains are omitted."""
    segments = [
        (dom, width)
        for dom, width in ((USER, d_user), (ITEM, d_item), (CROSS, d_cross))
        if width > 0
    ]
    if not segments:
        raise InvalidArgumentError("at least one domain must have width > 0")
    return single_site_graph(FeatureLayout(tuple(segments)), d_out, seed=seed)


def attention_fixture(seq_len: int, d_hidden: int, *, seed: int = 0) -> Graph:
    """Query projection plus cross attention with square projection dims.

    Query features, sequence features and the attention width all share one
    dimension, matching the single-head, one-query-per-item cost model.
    """
    rng = np.random.default_rng(seed)
    nodes = [
        input_node("item_query", ITEM, d_hidden),
        input_node("user_seq", USER, d_hidden, seq_len=seq_len),
        _w(rng, "w_query", d_hidden, d_hidden),
        matmul_node("query_fc", "item_query", "w_query"),
        _w(rng, "w_key", d_hidden, d_hidden),
        _w(rng, "w_value", d_hidden, d_hidden),
        cross_attention_node(
            "attn",
            "query_fc",
            "user_seq",
            "w_key",
            "w_value",
            d_q=d_hidden,
            d_kv=d_hidden,
            d_hidden=d_hidden,
        ),
        output_node("out", "attn"),
    ]
    return build_graph(nodes)
