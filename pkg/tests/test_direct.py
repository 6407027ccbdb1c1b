"""Unit tests for the exact blockwise-SVD solvers."""

import numpy as np
import pytest

from fsmf_tool.analysis import (
    CertificateLevel,
    certify,
    partition_classes,
    rank_one_supports,
    taxonomy_split,
)
from fsmf_tool.errors import CertificateMismatch, PreconditionViolation
from fsmf_tool.generators import (
    gen_full,
    gen_hadamard,
    gen_hodlr,
    gen_kron1,
    gen_kron2,
    gen_lu,
    gen_unattained_lu_instance,
    random_hodlr_matrix,
)
from fsmf_tool.models import (
    FactorPair,
    IterativeConfig,
    Method,
    ProblemInstance,
    SupportPair,
)
from fsmf_tool.objective import loss
from fsmf_tool.solvers import DirectSolver
from fsmf_tool.solvers.direct import (
    check_optimality,
    exact_cec_completion,
    greedy_generic,
    svd_fsmf,
    svd_fsmf2,
    truncated_svd,
)
from fsmf_tool.solvers.iterative import run

from .test_analysis import _critical_point_instance, _reducible_supports


def _tail_energy_oracle(matrix, k):
    eigenvalues = np.clip(np.linalg.eigvalsh(matrix.T @ matrix), 0.0, None)
    return float(np.sum(np.sort(eigenvalues)[: max(0, eigenvalues.size - k)]))


@pytest.mark.direct
class TestTruncatedSVD:
    """Test suite for the truncated SVD."""

    def test_rank_zero(self):
        """Test that k = 0 returns empty factors."""
        result = truncated_svd(np.ones((3, 2)), 0)

        assert result.U.shape == (3, 0)
        assert result.V.shape == (2, 0)
        assert result.tail_energy() == pytest.approx(6.0)

    def test_invalid_rank(self):
        """Test that k above min(m, n) is rejected."""
        with pytest.raises(ValueError):
            truncated_svd(np.ones((3, 2)), 3)

    def test_empty_matrix(self):
        """Test a matrix with a zero dimension."""
        result = truncated_svd(np.zeros((0, 4)), 0)

        assert result.rank == 0
        assert result.singular_values.size == 0

    def test_sign_convention(self):
        """Test that the largest entry of each left vector is positive."""
        rng = np.random.default_rng(1)
        result = truncated_svd(rng.standard_normal((5, 4)), 3)

        for i in range(3):
            column = result.U[:, i]
            assert column[np.argmax(np.abs(column))] > 0

    def test_balanced_split(self):
        """Test that U and V carry the same column norms."""
        rng = np.random.default_rng(2)
        result = truncated_svd(rng.standard_normal((4, 6)), 2)

        np.testing.assert_allclose(
            np.linalg.norm(result.U, axis=0), np.linalg.norm(result.V, axis=0)
        )

    def test_full_rank_reconstruction(self):
        """Test that k = min(m, n) reproduces the matrix."""
        rng = np.random.default_rng(3)
        matrix = rng.standard_normal((3, 5))

        np.testing.assert_allclose(
            truncated_svd(matrix, 3).approximant(), matrix, atol=1e-12
        )


@pytest.mark.direct
class TestSvdFsmf:
    """Test suite for the class-wise SVD solver."""

    def test_eckart_young(self):
        """Test full supports against the eigenvalue oracle on 100 instances."""
        rng = np.random.default_rng(7)
        for _ in range(100):
            m, n = rng.integers(1, 7, size=2)
            r = int(rng.integers(1, 7))
            matrix = rng.standard_normal((m, n))
            supports = gen_full(m, n, r)
            factors = svd_fsmf(matrix, supports)
            instance = ProblemInstance(target=matrix, supports=supports)

            expected = _tail_energy_oracle(matrix, min(r, m, n))
            scale = max(1.0, float(np.vdot(matrix, matrix)))
            assert abs(loss(instance, factors) - expected) <= 1e-9 * scale

    def test_output_respects_supports(self):
        """Test feasibility on supports that are not certified."""
        rng = np.random.default_rng(4)
        supports = gen_lu(4)
        instance = ProblemInstance(
            target=rng.standard_normal((4, 4)), supports=supports
        )

        assert instance.is_feasible(svd_fsmf(instance.target, supports))

    @pytest.mark.parametrize("family", [gen_kron1, gen_kron2])
    @pytest.mark.parametrize("level", [3, 4, 5, 6])
    def test_hadamard_exact(self, family, level):
        """Test exact Hadamard factorization on butterfly supports."""
        instance = ProblemInstance(target=gen_hadamard(level), supports=family(level))
        factors = svd_fsmf(instance.target, instance.supports)

        assert 0.5 * np.log10(max(loss(instance, factors), 1e-300)) <= -10

    @pytest.mark.slow
    @pytest.mark.parametrize("family", [gen_kron1, gen_kron2])
    @pytest.mark.parametrize("level", [7, 8])
    def test_hadamard_exact_large(self, family, level):
        """Test exact Hadamard factorization at the larger sizes."""
        _, report = DirectSolver().solve(
            ProblemInstance(target=gen_hadamard(level), supports=family(level))
        )

        assert report.log10_frobenius_error <= -10

    @pytest.mark.parametrize("level", [1, 2, 3, 4, 5])
    def test_hodlr_reconstruction(self, level):
        """Test that random HODLR matrices are reproduced on HODLR supports."""
        supports = gen_hodlr(level)
        matrix = random_hodlr_matrix(level, seed=level)
        instance = ProblemInstance(target=matrix, supports=supports)

        assert loss(instance, svd_fsmf(matrix, supports)) <= 1e-18

    def test_greedy_matches_on_singleton_classes(self):
        """Test that column-wise greedy fitting equals svd_fsmf on butterflies."""
        rng = np.random.default_rng(9)
        supports = gen_kron1(3)
        matrix = rng.standard_normal((8, 8))
        greedy = greedy_generic(matrix, rank_one_supports(supports))
        direct = svd_fsmf(matrix, supports)

        np.testing.assert_allclose(greedy.product(), direct.product(), atol=1e-12)

    @pytest.mark.parametrize("supports_factory", [gen_kron2, gen_hodlr])
    def test_class_order_does_not_matter(self, supports_factory):
        """Test that visiting disjoint classes in another order gives the same loss."""
        rng = np.random.default_rng(31)
        supports = supports_factory(3)
        instance = ProblemInstance(
            target=rng.standard_normal((8, 8)), supports=supports
        )
        default = loss(instance, svd_fsmf(instance.target, supports))
        reversed_order = loss(
            instance,
            svd_fsmf(instance.target, supports, order_key=lambda c: -c.members[0]),
        )
        largest_first = loss(
            instance,
            svd_fsmf(
                instance.target, supports, order_key=lambda c: -c.representative.size
            ),
        )

        assert abs(reversed_order - default) <= 1e-10
        assert abs(largest_first - default) <= 1e-10

    def test_dimension_mismatch(self):
        """Test that the matrix must match the supports."""
        with pytest.raises(ValueError):
            svd_fsmf(np.zeros((3, 3)), gen_lu(2))


@pytest.mark.direct
class TestExactCecCompletion:
    """Test suite for exact factorization on complete classes."""

    def test_exact_on_cec_union(self):
        """Test that a matrix supported on S_T is reproduced exactly."""
        supports = SupportPair.from_arrays(
            [[1, 1, 0], [1, 1, 0], [0, 0, 1]], [[1, 1, 0], [1, 1, 0], [0, 0, 1]]
        )
        matrix = np.array([[1.0, 2.0, 0.0], [3.0, 4.0, 0.0], [0.0, 0.0, 5.0]])
        factors = exact_cec_completion(matrix, supports)

        np.testing.assert_allclose(factors.product(), matrix, atol=1e-12)

    def test_nested_classes_telescope(self):
        """Test that the inner class fits its block and the outer one the rest."""
        left = np.zeros((3, 4), dtype=bool)
        right = np.zeros((3, 4), dtype=bool)
        left[0, 0] = True
        right[[0, 1], 0] = True
        left[:, 1:] = True
        right[:, 1:] = True
        supports = SupportPair.from_arrays(left, right)
        inner = np.zeros((3, 3), dtype=bool)
        inner[0, [0, 1]] = True
        matrix = np.random.default_rng(8).standard_normal((3, 3))

        factors = exact_cec_completion(matrix, supports)
        inner_product = factors.X[:, :1] @ factors.Y[:, :1].T
        outer_product = factors.X[:, 1:] @ factors.Y[:, 1:].T

        assert all(c.is_cec for c in partition_classes(supports).classes)
        np.testing.assert_allclose(factors.product(), matrix, atol=1e-12)
        np.testing.assert_allclose(
            inner_product, np.where(inner, matrix, 0.0), atol=1e-12
        )
        np.testing.assert_allclose(
            outer_product, np.where(inner, 0.0, matrix), atol=1e-12
        )

    def test_incomplete_class(self):
        """Test that a non-complete class is rejected."""
        with pytest.raises(PreconditionViolation):
            exact_cec_completion(np.eye(2), gen_lu(2))

    def test_entries_outside_union(self):
        """Test that nonzeros outside the class rectangles are rejected."""
        supports = SupportPair.from_arrays([[1], [0]], [[1], [0]])

        with pytest.raises(PreconditionViolation) as exc_info:
            exact_cec_completion(np.eye(2), supports)

        assert "outside S_T" in str(exc_info.value)


@pytest.mark.direct
class TestSvdFsmf2:
    """Test suite for the reducible solver."""

    def setup_method(self):
        """Set up test fixtures."""
        rng = np.random.default_rng(12)
        self.supports = _reducible_supports()
        self.instance = ProblemInstance(
            target=rng.standard_normal((4, 4)), supports=self.supports
        )

    def test_reducible_instance_is_optimal(self):
        """Test that both optimality conditions hold on the output."""
        factors = svd_fsmf2(self.instance.target, self.supports)
        taxonomy = taxonomy_split(self.supports, partition_classes(self.supports))
        verdict = check_optimality(self.instance, factors, taxonomy)

        assert self.instance.is_feasible(factors)
        assert verdict.optimal
        assert verdict.reason is None

    def test_zero_point_is_not_optimal(self):
        """Test that a point with residual on S_T fails the first condition."""
        taxonomy = taxonomy_split(self.supports, partition_classes(self.supports))
        verdict = check_optimality(
            self.instance, FactorPair.zeros(4, 4, 4), taxonomy
        )

        assert not verdict.optimal
        assert verdict.reason == "residual-on-S_T"

    def test_perturbed_optimum_is_not_optimal(self):
        """Test that moving one entry of a complete class breaks optimality."""
        factors = svd_fsmf2(self.instance.target, self.supports)
        x = np.array(factors.X)
        x[0, 1] += 1.0
        taxonomy = taxonomy_split(self.supports, partition_classes(self.supports))
        verdict = check_optimality(
            self.instance, FactorPair(X=x, Y=factors.Y), taxonomy
        )

        assert self.instance.is_feasible(FactorPair(X=x, Y=factors.Y))
        assert not verdict.optimal
        assert verdict.reason == "residual-on-S_T"

    def test_loss_equals_reduced_instance_optimum(self):
        """Test that the full loss is the optimum of the instance outside S_T."""
        factors = svd_fsmf2(self.instance.target, self.supports)
        taxonomy = taxonomy_split(self.supports, partition_classes(self.supports))
        cec_mask = taxonomy.partition.cec_mask()
        reduced = ProblemInstance(
            target=np.where(cec_mask, 0.0, self.instance.target),
            supports=taxonomy.reduced_supports(),
        )
        reduced_loss = loss(reduced, svd_fsmf(reduced.target, reduced.supports))

        assert loss(self.instance, factors) == pytest.approx(reduced_loss, rel=1e-10)
        assert reduced_loss > 0

    def test_critical_point_instance_is_solved_exactly(self):
        """Test that A = diag(10, 1) is factored with zero loss."""
        instance, point = _critical_point_instance()
        factors = svd_fsmf2(instance.target, instance.supports)

        assert instance.is_feasible(factors)
        assert loss(instance, factors) <= 1e-24
        assert loss(instance, point) == 1.0

    def test_uncertified_supports(self):
        """Test refusal and best-effort fallback on LU supports."""
        target = np.arange(9.0).reshape(3, 3)

        with pytest.raises(CertificateMismatch) as exc_info:
            svd_fsmf2(target, gen_lu(3))

        assert exc_info.value.level == "Unknown"
        fallback = svd_fsmf2(target, gen_lu(3), best_effort=True)
        np.testing.assert_array_equal(fallback.X, svd_fsmf(target, gen_lu(3)).X)


@pytest.mark.direct
class TestDirectSolver:
    """Test suite for the DirectSolver class."""

    def test_disjoint_classes_bit_identical(self):
        """Test that the solver returns exactly the svd_fsmf factors."""
        rng = np.random.default_rng(21)
        instance = ProblemInstance(
            target=rng.standard_normal((8, 8)), supports=gen_kron2(3)
        )
        factors, report = DirectSolver().solve(instance)
        reference = svd_fsmf(instance.target, instance.supports)

        np.testing.assert_array_equal(factors.X, reference.X)
        np.testing.assert_array_equal(factors.Y, reference.Y)
        assert report.method_tag == "direct"
        assert report.certificate == "DisjointClasses"
        assert report.iterations == 1
        assert report.converged

    def test_never_worse_than_random_restarts(self):
        """Test small certified instances against many gradient-descent restarts."""
        rng = np.random.default_rng(77)
        checked = 0
        while checked < 25:
            m, n, r = (int(v) for v in rng.integers(1, 4, size=3))
            supports = SupportPair.from_arrays(
                rng.random((m, r)) < 0.6, rng.random((n, r)) < 0.6
            )
            if not certify(supports).is_tractable:
                continue
            instance = ProblemInstance(
                target=rng.standard_normal((m, n)), supports=supports
            )
            factors, _ = DirectSolver().solve(instance)
            direct_loss = loss(instance, factors)

            for seed in range(20):
                config = IterativeConfig(
                    method=Method.GD, learning_rate=0.02, max_iters=400, seed=seed
                )
                restart, _ = run(instance, config)
                assert loss(instance, restart) >= direct_loss - 1e-6
            checked += 1

    def test_refuses_lu(self):
        """Test that LU supports are refused without best effort."""
        instance = ProblemInstance(target=np.eye(3), supports=gen_lu(3))

        with pytest.raises(CertificateMismatch):
            DirectSolver().solve(instance)

    def test_best_effort_flags_uncertified(self):
        """Test that best-effort results are marked not converged."""
        instance = ProblemInstance(target=np.eye(3), supports=gen_lu(3))
        factors, report = DirectSolver(best_effort=True).solve(instance)

        assert instance.is_feasible(factors)
        assert report.certificate == "Unknown"
        assert not report.converged

    def test_unattained_instance_is_refused(self):
        """Test the certificate of the instance without a minimizer."""
        unattained = gen_unattained_lu_instance()
        cert = certify(unattained.instance.supports)

        assert cert.level is CertificateLevel.UNKNOWN
        assert cert.spurious_condition_met
        with pytest.raises(CertificateMismatch):
            DirectSolver().solve(unattained.instance)
