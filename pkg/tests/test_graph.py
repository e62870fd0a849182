import numpy as np
import pytest

from mari import (
    BATCH,
    CycleError,
    DimensionError,
    FeatureDomain,
    FeatureLayout,
    FixtureDims,
    InvalidArgumentError,
    Node,
    add_node,
    build_graph,
    concat_node,
    execute,
    fixture_ranking_model,
    input_node,
    matmul_node,
    output_node,
    random_bundle,
    reshape_node,
    run_gca,
    structural_equal,
    tile_node,
    weight,
)

U, I, C = FeatureDomain.USER, FeatureDomain.ITEM, FeatureDomain.CROSS


def test_two_node_graph():
    g = build_graph([input_node("x", I, 4), output_node("out", "x")])
    assert len(g) == 2
    assert g.outputs == ("out",)
    assert g.shape("x") == (BATCH, 4)


def test_self_loop_rejected():
    with pytest.raises(CycleError, match="loop -> loop"):
        build_graph([Node("loop", "Identity", ("loop",))])


def test_cycle_names_back_edge():
    nodes = [
        Node("a", "Identity", ("b",)),
        Node("b", "Identity", ("a",)),
    ]
    with pytest.raises(CycleError, match="back edge"):
        build_graph(nodes)


def test_unknown_reference():
    with pytest.raises(InvalidArgumentError, match="unknown id"):
        build_graph([output_node("out", "ghost")])


def test_duplicate_id():
    with pytest.raises(InvalidArgumentError, match="duplicate"):
        build_graph([input_node("x", I, 2), input_node("x", I, 3)])


def test_shape_mismatch_names_node():
    nodes = [
        input_node("x", I, 4),
        weight("w", np.zeros((5, 2))),
        matmul_node("mm", "x", "w"),
    ]
    with pytest.raises(DimensionError, match="mm"):
        build_graph(nodes)


def test_topo_order_deterministic_under_declaration_order():
    def nodes():
        return [
            input_node("a", I, 2),
            input_node("b", I, 2),
            concat_node("cat", ["a", "b"], FeatureLayout.of((I, 2), (I, 2))),
            output_node("out", "cat"),
        ]
    g1 = build_graph(nodes())
    g2 = build_graph(list(reversed(nodes())))
    assert g1.topo_order == g2.topo_order


def test_batched_and_single_row_cannot_concat():
    nodes = [
        input_node("u", U, 2),
        input_node("i", I, 2),
        concat_node("cat", ["u", "i"], FeatureLayout.of((U, 2), (I, 2))),
    ]
    with pytest.raises(DimensionError, match="row mismatch"):
        build_graph(nodes)


def test_add_broadcasts_single_row_into_batch():
    nodes = [
        input_node("u", U, 3),
        input_node("i", I, 3),
        add_node("sum", "u", "i"),
        output_node("out", "sum"),
    ]
    g = build_graph(nodes)
    assert g.shape("sum") == (BATCH, 3)


def test_tile_requires_single_row():
    nodes = [input_node("i", I, 3), tile_node("t", "i")]
    with pytest.raises(DimensionError, match="single row"):
        build_graph(nodes)


def test_concat_layout_width_must_match():
    nodes = [
        input_node("a", I, 2),
        input_node("b", I, 2),
        concat_node("cat", ["a", "b"], FeatureLayout.of((I, 3), (I, 2))),
    ]
    with pytest.raises(DimensionError, match="layout width"):
        build_graph(nodes)


def test_concat_input_may_not_straddle_segments():
    nodes = [
        input_node("a", I, 3),
        input_node("b", C, 1),
        concat_node("cat", ["a", "b"], FeatureLayout.of((I, 2), (C, 2))),
    ]
    with pytest.raises(DimensionError, match="straddles"):
        build_graph(nodes)


def test_reshape_checks_size():
    nodes = [input_node("a", I, 6), reshape_node("r", "a", (2, 3)), output_node("o", "r")]
    g = build_graph(nodes)
    assert g.shape("r") == (BATCH, 2, 3)
    bad = [input_node("a", I, 6), reshape_node("r", "a", (4, 2))]
    with pytest.raises(DimensionError, match="reshape"):
        build_graph(bad)


def test_sequence_inputs_are_user_only():
    with pytest.raises(InvalidArgumentError, match="user-domain"):
        input_node("s", I, 4, seq_len=7)
    g = build_graph([input_node("s", U, 4, seq_len=7), output_node("o", "s")])
    assert g.shape("s") == (7, 4)


def test_batched_user_input_rejected_at_build():
    # Hand-built (or parsed) nodes can claim any flag combination; the
    # single-row-until-Tile rule is enforced during validation.
    bad = Node("u", "Input", (), domain=U, width=3, batched=True)
    with pytest.raises(DimensionError, match="single-row"):
        build_graph([bad, output_node("o", "u")])
    bad_item = Node("i", "Input", (), domain=I, width=3, batched=False)
    with pytest.raises(DimensionError, match="batched"):
        build_graph([bad_item, output_node("o", "i")])


def test_matmul_right_operand_may_not_be_batched():
    nodes = [
        input_node("a", I, 3),
        input_node("b", I, 2),
        matmul_node("mm", "a", "b"),
    ]
    with pytest.raises(DimensionError, match="batched"):
        build_graph(nodes)


class TestFeatureLayout:
    def test_needs_a_segment(self):
        with pytest.raises(InvalidArgumentError):
            FeatureLayout(())

    def test_widths_positive(self):
        with pytest.raises(InvalidArgumentError):
            FeatureLayout.of((U, 0))

    def test_domain_widths(self):
        layout = FeatureLayout.of((U, 2), (C, 1), (I, 3), (U, 2))
        assert layout.domain_widths() == (4, 3, 1)
        assert layout.total_width == 8

    def test_is_neat(self):
        assert FeatureLayout.of((U, 4), (I, 3), (C, 1)).is_neat()
        assert FeatureLayout.of((I, 5)).is_neat()
        assert not FeatureLayout.of((I, 3), (U, 4)).is_neat()
        assert not FeatureLayout.of((U, 1), (U, 2)).is_neat()

    def test_coalesced(self):
        layout = FeatureLayout.of((U, 1), (U, 2), (I, 3), (I, 1), (C, 2))
        assert layout.coalesced().segments == ((U, 3), (I, 4), (C, 2))


class TestRankingFixture:
    def test_executes_on_random_inputs(self):
        g = fixture_ranking_model()
        bundle = random_bundle(g, 6, seed=1)
        report = execute(g, bundle)
        assert set(report.outputs) == {"task0_out", "task1_out"}
        for out in report.outputs.values():
            assert out.shape == (6, 1)
            assert np.isfinite(out).all()

    def test_three_mixed_concat_groups(self):
        sites = run_gca(fixture_ranking_model())
        assert {s.concat_id for s in sites} == {"expert_cat", "query_cat", "tower_cat"}

    def test_minimal_dims_still_three_sites(self):
        dims = FixtureDims(
            d_user=1, d_item=1, d_cross=1, d_item_query=1, seq_len=1, d_seq=1,
            d_attn=1, d_user_hidden=1, d_user_tower=1, n_experts=1, d_expert=1,
            d_tower=1, n_tasks=1,
        )
        sites = run_gca(fixture_ranking_model(dims))
        assert len({s.concat_id for s in sites}) == 3
        assert len(sites) == 3

    def test_dims_validated(self):
        with pytest.raises(InvalidArgumentError):
            fixture_ranking_model(FixtureDims(n_experts=0))

    def test_seeded_rebuild_is_identical(self):
        assert structural_equal(
            fixture_ranking_model(seed=5), fixture_ranking_model(seed=5)
        )
        assert not structural_equal(
            fixture_ranking_model(seed=5), fixture_ranking_model(seed=6)
        )
