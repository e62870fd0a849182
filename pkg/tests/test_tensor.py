import numpy as np
import pytest
from numpy.testing import assert_allclose

from mari import BoundsError, DimensionError, InvalidArgumentError
from mari.tensor import (
    add_broadcast,
    concat_cols,
    matmul,
    slice_cols,
    softmax_rows,
    tile_rows,
)


def naive_matmul(a, b):
    """Scalar triple loop, accumulating left to right over the inner dim."""
    n, k = a.shape
    m = b.shape[1]
    out = np.empty((n, m), dtype=a.dtype)
    for i in range(n):
        for j in range(m):
            s = a.dtype.type(0)
            for t in range(k):
                s = a.dtype.type(s + a.dtype.type(a[i, t] * b[t, j]))
            out[i, j] = s
    return out


class TestMatmul:
    def test_identity(self):
        out = matmul(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[3.0], [4.0]]))
        assert out.tolist() == [[3.0], [4.0]]

    def test_hand_computed(self):
        out = matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
        assert out.tolist() == [[11.0]]

    def test_matches_triple_loop_exactly(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(-1, 1, (7, 5))
        b = rng.uniform(-1, 1, (5, 3))
        assert np.array_equal(matmul(a, b), naive_matmul(a, b))

    def test_matches_triple_loop_exactly_f32(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(-1, 1, (4, 6)).astype(np.float32)
        b = rng.uniform(-1, 1, (6, 2)).astype(np.float32)
        out = matmul(a, b)
        assert out.dtype == np.float32
        assert np.array_equal(out, naive_matmul(a, b))

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(np.zeros((2, 3)), np.zeros((2, 2)))

    def test_rank_checked(self):
        with pytest.raises(DimensionError):
            matmul(np.zeros(3), np.zeros((3, 2)))

    def test_empty_inner_dim(self):
        out = matmul(np.zeros((3, 0)), np.zeros((0, 2)))
        assert out.shape == (3, 2)
        assert not out.any()

    def test_fast_path_agrees(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(-1, 1, (9, 30))
        b = rng.uniform(-1, 1, (30, 7))
        assert_allclose(matmul(a, b, fast=True), matmul(a, b), rtol=1e-13)

    def test_pure(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(-1, 1, (6, 11))
        b = rng.uniform(-1, 1, (11, 4))
        assert np.array_equal(matmul(a, b), matmul(a, b))

    def test_result_read_only(self):
        out = matmul(np.ones((2, 2)), np.ones((2, 2)))
        with pytest.raises(ValueError):
            out[0, 0] = 5.0


class TestTileRows:
    def test_b1_identity(self):
        assert tile_rows(np.array([[1.0, 2.0]]), 1).tolist() == [[1.0, 2.0]]

    def test_definition(self):
        out = tile_rows(np.array([[1.0, 2.0]]), 3)
        assert out.tolist() == [[1.0, 2.0]] * 3

    def test_row_sum_oracle(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(-1, 1, (1, 9))
        b = 17
        assert_allclose(tile_rows(x, b).sum(axis=0), b * x[0], rtol=1e-14)

    def test_zero_count_rejected(self):
        with pytest.raises(InvalidArgumentError):
            tile_rows(np.ones((1, 2)), 0)

    def test_multi_row_rejected(self):
        with pytest.raises(DimensionError):
            tile_rows(np.ones((2, 2)), 3)

    def test_commutes_with_matmul_exactly(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(-1, 1, (1, 8))
        w = rng.uniform(-1, 1, (8, 5))
        left = matmul(tile_rows(x, 13), w)
        right = tile_rows(matmul(x, w), 13)
        assert np.array_equal(left, right)


class TestConcatSlice:
    def test_pair(self):
        out = concat_cols([np.array([[1.0]]), np.array([[2.0]])])
        assert out.tolist() == [[1.0, 2.0]]

    def test_singleton_identity(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(concat_cols([x]), x)

    def test_round_trip(self):
        rng = np.random.default_rng(6)
        widths = [3, 1, 4, 2]
        parts = [rng.uniform(-1, 1, (5, w)) for w in widths]
        whole = concat_cols(parts)
        offset = 0
        for part, w in zip(parts, widths):
            assert np.array_equal(slice_cols(whole, offset, w), part)
            offset += w

    def test_row_mismatch(self):
        with pytest.raises(DimensionError):
            concat_cols([np.ones((2, 1)), np.ones((3, 1))])

    def test_empty_list(self):
        with pytest.raises(InvalidArgumentError):
            concat_cols([])

    def test_slice_full(self):
        x = np.array([[1.0, 2.0, 3.0]])
        assert np.array_equal(slice_cols(x, 0, 3), x)

    def test_slice_middle(self):
        assert slice_cols(np.array([[1.0, 2.0, 3.0]]), 1, 1).tolist() == [[2.0]]

    def test_slice_out_of_range(self):
        with pytest.raises(BoundsError):
            slice_cols(np.ones((2, 3)), 2, 2)
        with pytest.raises(BoundsError):
            slice_cols(np.ones((2, 3)), -1, 1)


class TestAddBroadcast:
    def test_broadcast_definition(self):
        out = add_broadcast(np.array([[1.0, 1.0]]), np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert out.tolist() == [[2.0, 3.0], [4.0, 5.0]]

    def test_additive_identity(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(-1, 1, (4, 3))
        assert np.array_equal(add_broadcast(a, np.zeros((4, 3))), a)

    def test_broadcast_equals_explicit_tile(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(-1, 1, (1, 6))
        y = rng.uniform(-1, 1, (9, 6))
        assert np.array_equal(add_broadcast(x, y), add_broadcast(tile_rows(x, 9), y))

    def test_incompatible(self):
        with pytest.raises(DimensionError):
            add_broadcast(np.ones((2, 3)), np.ones((2, 4)))
        with pytest.raises(DimensionError):
            add_broadcast(np.ones((2, 3)), np.ones((5, 3)))


class TestSoftmaxRows:
    def test_symmetry(self):
        assert softmax_rows(np.array([[0.0, 0.0]])).tolist() == [[0.5, 0.5]]

    def test_stability(self):
        out = softmax_rows(np.array([[1000.0, 1000.0]]))
        assert np.isfinite(out).all()
        assert_allclose(out, [[0.5, 0.5]], rtol=0, atol=0)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(9)
        x = rng.uniform(-5, 5, (3, 8))
        expected = np.exp(x) / np.exp(x).sum(axis=1, keepdims=True)
        assert_allclose(softmax_rows(x), expected, rtol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(10)
        x = rng.uniform(-50, 50, (20, 6))
        assert_allclose(softmax_rows(x).sum(axis=1), np.ones(20), atol=1e-12)


@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 1e-5)])
def test_block_partition_rule(dtype, tol):
    # Column-partitioned A against row-partitioned B: the full product equals
    # the sum of the block products, up to reordering rounding.
    rng = np.random.default_rng(11)
    for _ in range(25):
        n, k, m = (int(v) for v in rng.integers(1, 12, 3))
        a = rng.uniform(-1, 1, (n, k)).astype(dtype)
        b = rng.uniform(-1, 1, (k, m)).astype(dtype)
        cuts = sorted(rng.integers(0, k + 1, size=int(rng.integers(0, 4))))
        bounds = [0, *cuts, k]
        total = np.zeros((n, m), dtype=dtype)
        for lo, hi in zip(bounds, bounds[1:]):
            total = total + matmul(a[:, lo:hi], b[lo:hi])
        full = matmul(a, b)
        scale = max(np.abs(full).max(), 1.0)
        assert np.abs(total - full).max() <= tol * scale
