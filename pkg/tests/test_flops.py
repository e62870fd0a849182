import math
from fractions import Fraction

import pytest

from mari import (
    AttnDims,
    InvalidArgumentError,
    MatmulDims,
    execute,
    flops_speedup_table,
    mari_flops,
    neat_site_graph,
    random_bundle,
    rewrite_all,
    table2_points,
    table2_rows,
    uoi_attention_flops,
)
from mari.flops import exact_speedup

# Reference theoretical speedups, one block per swept parameter.
TABLE2_EXPECTED = {
    "B": [2.94, 2.99, 2.99, 3.00, 3.00, 3.00, 3.00],
    "D_user": [1.50, 2.00, 3.00, 5.99, 8.96, 10.95],
    "D_item_cross": [8.96, 4.99, 3.00, 1.80, 1.50, 1.40],
    "D_hidden": [4.99, 4.99, 4.99, 4.99],
}


class TestMariFlops:
    def test_reference_point_three_x(self):
        r = mari_flops(MatmulDims(2000, 2000, 1000, 0, 512))
        assert math.isclose(r.speedup, 3.00, abs_tol=0.01)

    def test_reference_point_six_x(self):
        r = mari_flops(MatmulDims(2000, 5000, 1000, 0, 512))
        assert math.isclose(r.speedup, 5.99, abs_tol=0.01)

    def test_batch_block_needs_cross_width(self):
        r = mari_flops(MatmulDims(100, 4000, 1000, 1000, 512))
        assert math.isclose(r.speedup, 2.94, abs_tol=0.01)

    def test_no_gain_at_batch_one(self):
        r = mari_flops(MatmulDims(1, 37, 11, 5, 8))
        assert r.speedup == 1.0
        assert r.absolute_saving == 0

    def test_saving_identity(self):
        for dims in (
            MatmulDims(17, 5, 3, 2, 4),
            MatmulDims(2, 100, 0, 1, 7),
            MatmulDims(999, 0, 3, 2, 11),
        ):
            r = mari_flops(dims)
            assert r.absolute_saving == 2 * dims.d_out * dims.d_user * (dims.B - 1)
            assert r.flops_baseline == 2 * dims.B * dims.d_out * (
                dims.d_user + dims.d_item + dims.d_cross
            )

    def test_asymptotic_ratio(self):
        r = mari_flops(MatmulDims(10, 6, 3, 1, 2))
        assert r.asymptotic_saving_ratio == 0.6

    def test_dims_validated(self):
        with pytest.raises(InvalidArgumentError):
            MatmulDims(0, 1, 1, 1, 1)
        with pytest.raises(InvalidArgumentError):
            MatmulDims(2, 0, 0, 0, 4)
        with pytest.raises(InvalidArgumentError):
            MatmulDims(2, 1, 1, 1, 0)

    def test_speedup_independent_of_output_width(self):
        for d in (1, 128, 512, 2048):
            r = mari_flops(MatmulDims(321, 40, 10, 5, d))
            assert math.isclose(
                r.speedup, float(exact_speedup(MatmulDims(321, 40, 10, 5, 1)))
            )

    def test_monotonicity(self):
        base = MatmulDims(50, 20, 10, 5, 4)
        up_user = exact_speedup(MatmulDims(50, 21, 10, 5, 4))
        assert up_user > exact_speedup(base)
        up_item = exact_speedup(MatmulDims(50, 20, 11, 5, 4))
        assert up_item < exact_speedup(base)
        up_batch = exact_speedup(MatmulDims(51, 20, 10, 5, 4))
        assert up_batch >= exact_speedup(base)
        limit = Fraction(20 + 10 + 5, 10 + 5)
        assert exact_speedup(MatmulDims(10**9, 20, 10, 5, 4)) < limit


class TestTable2:
    def test_has_23_rows(self):
        assert len(table2_rows()) == 23

    def test_blocks_match_reference_values(self):
        rows = table2_rows()
        for axis, expected in TABLE2_EXPECTED.items():
            got = [r.report.speedup for r in rows if r.axis == axis]
            assert len(got) == len(expected)
            for g, e in zip(got, expected):
                assert math.isclose(g, e, abs_tol=0.01), (axis, g, e)

    def test_axis_restriction(self):
        points = table2_points(axes=["D_user"])
        assert [p.value for p in points] == [500, 1000, 2000, 5000, 8000, 10000]

    def test_unknown_axis_rejected(self):
        with pytest.raises(InvalidArgumentError):
            table2_points(axes=["nope"])

    def test_empty_grid_rejected(self):
        with pytest.raises(InvalidArgumentError):
            flops_speedup_table([])


class TestAttentionFlops:
    def test_batch_one_ratio_is_one(self):
        r = uoi_attention_flops(AttnDims(1, 13, 4))
        assert r.ratio == 1.0
        assert r.speedup == 1.0

    def test_reference_ratio(self):
        r = uoi_attention_flops(AttnDims(100, 50, 4))
        assert math.isclose(r.ratio, 200 / 10100)
        assert Fraction(r.flops_optimized, r.flops_baseline) == Fraction(200, 10100)

    def test_limits(self):
        r = uoi_attention_flops(AttnDims(7, 1, 4))
        assert r.limit_ratio_large_B == pytest.approx(1 / 3)
        assert r.limit_ratio_large_L == pytest.approx(1 / 7)

    def test_dims_validated(self):
        with pytest.raises(InvalidArgumentError):
            AttnDims(0, 1, 1)


class TestAnalyzerAgreesWithExecutor:
    @pytest.mark.parametrize(
        "dims",
        [
            MatmulDims(1, 4, 3, 2, 5),
            MatmulDims(9, 0, 3, 2, 5),
            MatmulDims(9, 4, 3, 0, 5),
            MatmulDims(33, 12, 7, 5, 3),
        ],
    )
    def test_site_counts_exact(self, dims):
        g = neat_site_graph(dims.d_user, dims.d_item, dims.d_cross, dims.d_out)
        expected = mari_flops(dims)
        bundle = random_bundle(g, dims.B, seed=0)
        assert execute(g, bundle).flops_by_node["mm"] == expected.flops_baseline
        rewritten, _ = rewrite_all(g)
        assert (
            execute(rewritten, random_bundle(rewritten, dims.B, seed=0)).flops_by_node[
                "mm"
            ]
            == expected.flops_optimized
        )
