"""Unit tests for support families and target matrices."""

import numpy as np
import pytest

from fsmf_tool.analysis import rank_one_supports
from fsmf_tool.generators import (
    gen_full,
    gen_hadamard,
    gen_hodlr,
    gen_kron1,
    gen_kron2,
    gen_lu,
    gen_unattained_lu_instance,
    kron_supports,
    random_hodlr_matrix,
)
from fsmf_tool.objective import loss


class TestSimpleFamilies:
    """Test suite for full and lower-triangular supports."""

    def test_full(self):
        """Test that full supports cover every entry."""
        supports = gen_full(3, 4, 2)

        assert (supports.m, supports.n, supports.r) == (3, 4, 2)
        assert supports.left.nnz == 6
        assert supports.right.nnz == 8

    def test_lu(self):
        """Test the lower-triangular pattern."""
        supports = gen_lu(3)

        assert supports.left.nnz == 6
        assert (0, 1) not in supports.left
        assert (2, 0) in supports.right

    @pytest.mark.parametrize("args", [(0, 2, 2), (2, 2, 0)])
    def test_full_invalid(self, args):
        """Test that empty dimensions are rejected."""
        with pytest.raises(ValueError):
            gen_full(*args)

    def test_lu_invalid(self):
        """Test that a zero size is rejected."""
        with pytest.raises(ValueError):
            gen_lu(0)


class TestKronecker:
    """Test suite for butterfly supports."""

    @pytest.mark.parametrize("family", [gen_kron1, gen_kron2])
    @pytest.mark.parametrize("level", [1, 2, 3, 4])
    def test_shapes(self, family, level):
        """Test that both families are square of side 2^N."""
        supports = family(level)
        size = 2**level

        assert (supports.m, supports.n, supports.r) == (size, size, size)

    def test_kron1_split(self):
        """Test the balanced exponents of kron1."""
        supports = gen_kron1(5)
        reference = kron_supports(3, 2)

        assert supports.left == reference.left
        assert supports.right == reference.right

    def test_kron2_split(self):
        """Test that kron2 keeps a 2x2 outer block."""
        supports = gen_kron2(4)

        assert supports.left == kron_supports(1, 3).left
        assert supports.left.column_counts().tolist() == [2] * 16
        assert supports.right.column_counts().tolist() == [8] * 16

    def test_column_sizes(self):
        """Test that I has 2^a and J has 2^b nonzeros per column."""
        supports = kron_supports(2, 1)

        assert set(supports.left.column_counts().tolist()) == {4}
        assert set(supports.right.column_counts().tolist()) == {2}

    def test_invalid_level(self):
        """Test that N = 0 is rejected."""
        with pytest.raises(ValueError):
            gen_kron1(0)


class TestHodlr:
    """Test suite for HODLR supports and matrices."""

    @pytest.mark.parametrize("level, nnz", [(1, 4), (2, 12), (3, 32)])
    def test_support_sizes(self, level, nnz):
        """Test the inner dimension and the number of nonzeros."""
        supports = gen_hodlr(level)

        assert supports.m == supports.n == 2**level
        assert supports.r == 3 * 2**level - 2
        assert supports.left.nnz == nnz
        assert supports.right.nnz == nnz

    @pytest.mark.parametrize("level", [1, 2, 3, 4, 5, 6])
    def test_rank_one_supports_pairwise_disjoint(self, level):
        """Test that no cell is shared by two columns, by set intersection."""
        cells = [s.cells() for s in rank_one_supports(gen_hodlr(level))]

        for a in range(len(cells)):
            for b in range(a + 1, len(cells)):
                assert not cells[a] & cells[b], (a, b)

    def test_level_one_pattern(self):
        """Test the off-diagonal blocks of the 2x2 case."""
        supports = gen_hodlr(1)
        product = supports.left.to_array().astype(int) @ (
            supports.right.to_array().astype(int).T
        )

        np.testing.assert_array_equal(product, [[1, 1], [1, 1]])

    def test_random_matrix_is_deterministic(self):
        """Test that a seed fixes the random HODLR matrix."""
        first = random_hodlr_matrix(3, seed=11)

        assert first.shape == (8, 8)
        np.testing.assert_array_equal(first, random_hodlr_matrix(3, seed=11))
        assert not np.array_equal(first, random_hodlr_matrix(3, seed=12))

    def test_off_diagonal_blocks_are_rank_one(self):
        """Test the low-rank structure at the top level."""
        matrix = random_hodlr_matrix(3, seed=5)

        assert np.linalg.matrix_rank(matrix[:4, 4:]) == 1
        assert np.linalg.matrix_rank(matrix[4:, :4]) == 1


class TestHadamard:
    """Test suite for Sylvester Hadamard matrices."""

    def test_smallest(self):
        """Test the 2x2 matrix."""
        np.testing.assert_array_equal(gen_hadamard(1), [[1.0, 1.0], [1.0, -1.0]])

    @pytest.mark.parametrize("level", [0, 2, 4])
    def test_orthogonality(self, level):
        """Test H H^T = 2^N Id."""
        h = gen_hadamard(level)
        size = 2**level

        np.testing.assert_array_equal(h @ h.T, size * np.eye(size))


class TestUnattainedInstance:
    """Test suite for the instance without a minimizer."""

    def setup_method(self):
        """Set up test fixtures."""
        self.unattained = gen_unattained_lu_instance()

    def test_instance(self):
        """Test the target and the upper-triangular supports."""
        instance = self.unattained.instance

        np.testing.assert_array_equal(instance.target, [[0.0, 1.0], [1.0, 0.0]])
        assert (1, 0) not in instance.supports.left
        assert (1, 0) not in instance.supports.right

    @pytest.mark.parametrize("k", [1.0, 10.0, 1000.0])
    def test_witness_loss(self, k):
        """Test that the witness sequence has loss 1/k^2 with entries of size k."""
        instance = self.unattained.instance
        factors = self.unattained.witness(k)

        assert instance.is_feasible(factors)
        assert loss(instance, factors) == pytest.approx(1.0 / k**2, rel=1e-9)
        assert np.max(np.abs(factors.X)) == k

    def test_witness_requires_positive_k(self):
        """Test that k must be positive."""
        with pytest.raises(ValueError):
            self.unattained.witness(0.0)
