"""Matrix re-parameterized inference for ranking-model computation graphs.

Ranking models score one user against a batch of candidate items. Columns
derived from the user are identical across the batch, so feature-fusion
matrix products repeat the user-side work once per item. This package
finds those products in a computation graph by color propagation, groups
fragmented feature layouts into contiguous per-domain blocks, rewrites the
products so the user block is computed once and broadcast, proves the
rewrite changes nothing numerically, and measures the resulting
theoretical and wall-clock speedups.
"""

from .errors import (
    BoundsError,
    CycleError,
    DimensionError,
    FragmentedLayoutError,
    GraphParseError,
    InputBindingError,
    InvalidArgumentError,
    MariError,
    SignatureError,
)
from .estimators import LayoutReorganizer, MariRewriter, SiteDetector
from .executor import (
    ExecReport,
    InputBundle,
    check_equivalence,
    execute,
    random_bundle,
)
from .fixtures import (
    FixtureDims,
    attention_fixture,
    fixture_ranking_model,
    neat_site_graph,
    single_site_graph,
)
from .flops import (
    AttnDims,
    AttnFlopsReport,
    FlopsReport,
    MatmulDims,
    SweepPoint,
    flops_speedup_table,
    mari_flops,
    table2_points,
    table2_rows,
    uoi_attention_flops,
)
from .gca import (
    Color,
    OptSite,
    detect_optimizable,
    group_by_concat,
    initialize_colors,
    propagate,
    run_gca,
)
from .graph import (
    BATCH,
    FeatureDomain,
    FeatureLayout,
    Graph,
    Node,
    add_node,
    build_graph,
    concat_node,
    cross_attention_node,
    identity_node,
    input_node,
    matmul_node,
    output_node,
    relu_node,
    reshape_node,
    softmax_node,
    structural_equal,
    tile_node,
    weight,
)
from .reorg import ColumnPermutation, apply_to_graph, apply_to_weights, plan_reorg, reorg_all
from .rewrite import RewriteReport, SiteReport, fragment_site, rewrite_all, rewrite_site
from .textio import parse, serialize

__version__ = "0.1.0"

__all__ = [
    "BATCH",
    "AttnDims",
    "AttnFlopsReport",
    "BoundsError",
    "Color",
    "ColumnPermutation",
    "CycleError",
    "DimensionError",
    "ExecReport",
    "FeatureDomain",
    "FeatureLayout",
    "FixtureDims",
    "FlopsReport",
    "FragmentedLayoutError",
    "Graph",
    "GraphParseError",
    "InputBindingError",
    "InputBundle",
    "InvalidArgumentError",
    "LayoutReorganizer",
    "MariError",
    "MariRewriter",
    "MatmulDims",
    "Node",
    "OptSite",
    "RewriteReport",
    "SignatureError",
    "SiteDetector",
    "SiteReport",
    "SweepPoint",
    "add_node",
    "apply_to_graph",
    "apply_to_weights",
    "attention_fixture",
    "build_graph",
    "check_equivalence",
    "concat_node",
    "cross_attention_node",
    "detect_optimizable",
    "execute",
    "fixture_ranking_model",
    "flops_speedup_table",
    "fragment_site",
    "group_by_concat",
    "identity_node",
    "initialize_colors",
    "input_node",
    "mari_flops",
    "matmul_node",
    "neat_site_graph",
    "output_node",
    "parse",
    "plan_reorg",
    "propagate",
    "random_bundle",
    "relu_node",
    "reorg_all",
    "reshape_node",
    "rewrite_all",
    "rewrite_site",
    "run_gca",
    "serialize",
    "single_site_graph",
    "softmax_node",
    "structural_equal",
    "table2_points",
    "table2_rows",
    "tile_node",
    "uoi_attention_flops",
    "weight",
]
