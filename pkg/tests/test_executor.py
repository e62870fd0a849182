import math
from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mari import (
    DimensionError,
    InputBindingError,
    InputBundle,
    SignatureError,
    attention_fixture,
    build_graph,
    check_equivalence,
    execute,
    fixture_ranking_model,
    input_node,
    matmul_node,
    output_node,
    random_bundle,
    rewrite_all,
    weight,
)
from mari.executor import output_deviation
from mari.graph import FeatureDomain

I = FeatureDomain.ITEM


def naive_attention(q, kv, w_k, w_v, scale):
    """Per-element attention oracle with explicit loops."""
    k = kv @ w_k
    v = kv @ w_v
    b, d = q.shape
    out = np.zeros((b, d))
    for i in range(b):
        logits = np.array([float(np.dot(q[i], k[j])) / scale for j in range(len(k))])
        e = np.exp(logits - logits.max())
        w = e / e.sum()
        for j in range(len(k)):
            out[i] += w[j] * v[j]
    return out


class TestStrategies:
    def test_outputs_agree_on_fixture(self):
        g = fixture_ranking_model()
        bundle = random_bundle(g, 7, seed=0)
        uoi = execute(g, bundle, strategy="uoi")
        vani = execute(g, bundle, strategy="vani")
        for key in uoi.outputs:
            assert_allclose(vani.outputs[key], uoi.outputs[key], rtol=1e-12)

    def test_one_shot_costs_less(self):
        g = fixture_ranking_model()
        bundle = random_bundle(g, 32, seed=1)
        uoi = execute(g, bundle, strategy="uoi")
        vani = execute(g, bundle, strategy="vani")
        assert uoi.flops_total < vani.flops_total

    def test_equal_cost_at_batch_one(self):
        g = attention_fixture(seq_len=6, d_hidden=4)
        bundle = random_bundle(g, 1, seed=2)
        assert (
            execute(g, bundle, strategy="uoi").flops_total
            == execute(g, bundle, strategy="vani").flops_total
        )

    def test_attention_flops_ratio(self):
        b, seq, d = 100, 50, 32
        g = attention_fixture(seq_len=seq, d_hidden=d)
        bundle = random_bundle(g, b, seed=3)
        vani = execute(g, bundle, strategy="vani").flops_total
        uoi = execute(g, bundle, strategy="uoi").flops_total
        assert Fraction(vani, uoi) == Fraction(b * (1 + 2 * seq), b + 2 * seq)
        assert math.isclose(vani / uoi, 50.5, abs_tol=1e-9)


class TestCrossAttention:
    def test_single_key_returns_value_row(self):
        g = attention_fixture(seq_len=1, d_hidden=3)
        bundle = random_bundle(g, 5, seed=4)
        out = execute(g, bundle).outputs["out"]
        kv = bundle.tensors["user_seq"]
        w_v = g.node("w_value").data
        expected = np.repeat(kv @ w_v, 5, axis=0)
        assert_allclose(out, expected, rtol=1e-12)

    def test_uniform_logits_average_values(self):
        # A zero query makes every logit zero, so the output is the mean of
        # the projected values.
        g = attention_fixture(seq_len=4, d_hidden=3)
        bundle = random_bundle(g, 2, seed=5)
        tensors = dict(bundle.tensors)
        tensors["item_query"] = np.zeros_like(tensors["item_query"])
        out = execute(g, InputBundle(tensors, 2)).outputs["out"]
        v = tensors["user_seq"] @ g.node("w_value").data
        assert_allclose(out, np.repeat(v.mean(axis=0, keepdims=True), 2, axis=0),
                        rtol=1e-12)

    def test_matches_naive_oracle(self):
        g = attention_fixture(seq_len=9, d_hidden=6, seed=6)
        bundle = random_bundle(g, 11, seed=7)
        out = execute(g, bundle).outputs["out"]
        q = bundle.tensors["item_query"] @ g.node("w_query").data
        expected = naive_attention(
            q,
            bundle.tensors["user_seq"],
            g.node("w_key").data,
            g.node("w_value").data,
            math.sqrt(6),
        )
        assert_allclose(out, expected, rtol=0, atol=1e-12)


class TestBindingAndErrors:
    def test_missing_input_named(self):
        g = fixture_ranking_model()
        bundle = random_bundle(g, 4, seed=8)
        tensors = dict(bundle.tensors)
        tensors.pop("item_feat")
        with pytest.raises(InputBindingError, match="item_feat"):
            execute(g, InputBundle(tensors, 4))

    def test_unknown_input_named(self):
        g = fixture_ranking_model()
        bundle = random_bundle(g, 4, seed=9)
        tensors = dict(bundle.tensors)
        tensors["mystery"] = np.ones((4, 2))
        with pytest.raises(InputBindingError, match="mystery"):
            execute(g, InputBundle(tensors, 4))

    def test_batch_mismatch(self):
        g = fixture_ranking_model()
        bundle = random_bundle(g, 4, seed=10)
        with pytest.raises(DimensionError, match="expected shape"):
            execute(g, InputBundle(bundle.tensors, 5))

    def test_flops_invariant_for_matmul(self):
        g = build_graph(
            [
                input_node("x", I, 6),
                weight("w", np.random.default_rng(0).uniform(-1, 1, (6, 4))),
                matmul_node("mm", "x", "w"),
                output_node("o", "mm"),
            ]
        )
        report = execute(g, random_bundle(g, 9, seed=11))
        assert report.flops_by_node["mm"] == 2 * 9 * 6 * 4

    def test_deterministic(self):
        g = fixture_ranking_model()
        bundle = random_bundle(g, 6, seed=12)
        r1 = execute(g, bundle)
        r2 = execute(g, bundle)
        for key in r1.outputs:
            assert np.array_equal(r1.outputs[key], r2.outputs[key])
        assert r1.flops_by_node == r2.flops_by_node

    def test_dtype_mode(self):
        g = fixture_ranking_model()
        bundle = random_bundle(g, 6, seed=13)
        report = execute(g, bundle, dtype="f32")
        for out in report.outputs.values():
            assert out.dtype == np.float32

    def test_rewritten_graph_under_vanilla_strategy(self):
        # Out of the usual contract, but the outputs must still agree and
        # the user branch must be charged for the replicated rows it used.
        g = fixture_ranking_model()
        rewritten, report = rewrite_all(g)
        bundle = random_bundle(g, 9, seed=14)
        uoi = execute(rewritten, bundle, strategy="uoi")
        vani = execute(rewritten, bundle, strategy="vani")
        for key in uoi.outputs:
            assert_allclose(vani.outputs[key], uoi.outputs[key], rtol=1e-12)
        site = report.sites[0]
        assert (
            vani.flops_breakdown[site.matmul_id]["user_branch"]
            == 9 * uoi.flops_breakdown[site.matmul_id]["user_branch"]
        )


class TestEquivalence:
    def test_graph_vs_itself(self):
        g = fixture_ranking_model()
        verdict = check_equivalence(g, g, trials=3, batch_size=5)
        assert verdict.passed
        assert verdict.max_deviation == 0.0

    def test_rewrite_passes_at_tolerance(self):
        g = fixture_ranking_model()
        rewritten, _ = rewrite_all(g)
        verdict = check_equivalence(g, rewritten, trials=20, tol=1e-12, batch_size=8)
        assert verdict.passed, verdict.max_deviation

    def test_perturbed_weight_fails_and_reports(self):
        g = fixture_ranking_model(seed=1)
        w = np.array(g.node("w_tower").data)
        w[0, 0] += 1e-3
        g2 = g.replace_nodes({"w_tower": weight("w_tower", w)})
        verdict = check_equivalence(g, g2, trials=3, tol=1e-12, batch_size=5)
        assert not verdict.passed
        assert verdict.max_deviation > 1e-9

    def test_signature_mismatch_rejected(self):
        g1 = fixture_ranking_model()
        g2 = attention_fixture(seq_len=3, d_hidden=4)
        with pytest.raises(SignatureError):
            check_equivalence(g1, g2, trials=1)

    def test_f32_tolerance(self):
        g = fixture_ranking_model()
        rewritten, _ = rewrite_all(g)
        verdict = check_equivalence(
            g, rewritten, trials=20, tol=1e-5, batch_size=8, dtype="f32"
        )
        assert verdict.passed, verdict.max_deviation


def test_output_deviation_handles_zero():
    a = {"o": np.zeros((2, 2))}
    assert output_deviation(a, {"o": np.zeros((2, 2))}) == 0.0
