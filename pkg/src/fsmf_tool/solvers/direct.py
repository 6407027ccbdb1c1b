"""Exact blockwise-SVD solvers for tractable support pairs."""

import logging
import time
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import LinAlgError, svd

from ..analysis import (
    CertificateLevel,
    EquivalenceClass,
    Taxonomy,
    TractabilityCertificate,
    certify,
    partition_classes,
)
from ..errors import CertificateMismatch, DimensionMismatch, PreconditionViolation
from ..models import (
    DenseMatrix,
    DenseVector,
    FactorPair,
    FloatArray,
    Method,
    ProblemInstance,
    RankOneSupport,
    SolveReport,
    SupportPair,
)
from ..objective import loss, project_to_support, residual

logger = logging.getLogger(__name__)

# Relative tolerance of both optimality conditions
OPTIMALITY_TOLERANCE = 1e-8


class TruncatedSVDResult(BaseModel):
    """Balanced rank-k factors U, V with U V^T the best rank-k approximant."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    U: DenseMatrix
    V: DenseMatrix
    singular_values: DenseVector = Field(
        ..., description="All singular values, nonincreasing"
    )

    @property
    def rank(self) -> int:
        return int(self.U.shape[1])

    def approximant(self) -> FloatArray:
        return np.asarray(self.U @ self.V.T, dtype=np.float64)

    def tail_energy(self) -> float:
        """Sum of the squared singular values beyond the truncation rank."""
        tail = self.singular_values[self.rank :]
        return float(np.dot(tail, tail))


class OptimalityVerdict(BaseModel):
    """Outcome of the two optimality conditions on a reducible instance."""

    optimal: bool
    reason: Optional[str] = None
    residual_on_cec: float = Field(..., ge=0)
    reduced_loss: float = Field(..., ge=0)
    reduced_optimum: float = Field(..., ge=0)


def _svd(matrix: FloatArray) -> Tuple[FloatArray, FloatArray, FloatArray]:
    try:
        u, s, vt = svd(matrix, full_matrices=False, lapack_driver="gesdd")
    except LinAlgError:
        logger.debug(f"gesdd failed on a {matrix.shape} block, retrying with gesvd")
        u, s, vt = svd(matrix, full_matrices=False, lapack_driver="gesvd")
    return np.asarray(u), np.asarray(s), np.asarray(vt)


def truncated_svd(matrix: Any, k: int) -> TruncatedSVDResult:
    """
    Best rank-k approximation in Frobenius norm.

    The largest-magnitude entry of every kept left singular vector is made
    positive, and the singular values are split evenly between U and V.

    Args:
        matrix: Dense m x n matrix
        k: Truncation rank, 0 <= k <= min(m, n)

    Returns:
        TruncatedSVDResult with U (m x k), V (n x k) and all singular values
    """
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {a.shape}")
    m, n = a.shape
    if not 0 <= k <= min(m, n):
        raise ValueError(f"rank {k} outside [0, {min(m, n)}] for a {m}x{n} matrix")
    if min(m, n) == 0:
        return TruncatedSVDResult(
            U=np.zeros((m, 0)), V=np.zeros((n, 0)), singular_values=np.zeros(0)
        )

    u, s, vt = _svd(a)
    left = u[:, :k].copy()
    right = vt[:k].T.copy()
    for i in range(k):
        pivot = int(np.argmax(np.abs(left[:, i])))
        if left[pivot, i] < 0:
            left[:, i] = -left[:, i]
            right[:, i] = -right[:, i]
    scale = np.sqrt(s[:k])
    return TruncatedSVDResult(U=left * scale, V=right * scale, singular_values=s)


def greedy_generic(matrix: Any, supports_list: Sequence[RankOneSupport]) -> FactorPair:
    """
    Column-by-column rank-one fitting of the running residual.

    Column i receives a best rank-one approximation of the residual restricted
    to S_i, and the residual is updated before moving to column i + 1, so the
    loop is inherently sequential.
    """
    a = np.asarray(matrix, dtype=np.float64)
    m, n = a.shape
    r = len(supports_list)
    x = np.zeros((m, r))
    y = np.zeros((n, r))
    res = a.copy()
    for i, support in enumerate(supports_list):
        if support.is_empty:
            continue
        rows, cols = support.sorted_rows(), support.sorted_cols()
        best = truncated_svd(res[np.ix_(rows, cols)], 1)
        x[rows, i] = best.U[:, 0]
        y[cols, i] = best.V[:, 0]
        res[np.ix_(rows, cols)] -= best.approximant()
    return FactorPair(X=x, Y=y)


def _smallest_member(cls: EquivalenceClass) -> Any:
    return cls.members[0]


def svd_fsmf(
    matrix: Any,
    supports: SupportPair,
    order_key: Optional[Callable[[EquivalenceClass], Any]] = None,
) -> FactorPair:
    """
    Class-wise truncated SVD.

    Each equivalence class P receives a best rank-|P| approximation of the
    running residual on its block (R_P, C_P). Classes are visited by their
    smallest member unless order_key says otherwise. The output always
    respects the supports and is optimal when class representatives are
    pairwise disjoint.

    Args:
        matrix: Target matrix (m x n)
        supports: Support pair (I, J)
        order_key: Sort key over classes

    Returns:
        FactorPair
    """
    a = np.asarray(matrix, dtype=np.float64)
    if a.shape != (supports.m, supports.n):
        raise DimensionMismatch(
            f"matrix is {a.shape} but supports expect {(supports.m, supports.n)}"
        )
    partition = partition_classes(supports)
    classes: List[EquivalenceClass] = sorted(
        partition.classes, key=order_key or _smallest_member
    )

    x = np.zeros((supports.m, supports.r))
    y = np.zeros((supports.n, supports.r))
    res = a.copy()
    for cls in classes:
        if cls.representative.is_empty:
            continue
        rows, cols, members = cls.rows, cls.cols, list(cls.members)
        rank = min(len(members), len(rows), len(cols))
        best = truncated_svd(res[np.ix_(rows, cols)], rank)
        x[np.ix_(rows, members[:rank])] = best.U
        y[np.ix_(cols, members[:rank])] = best.V
        res[np.ix_(rows, cols)] -= best.approximant()
        logger.debug(
            f"Class {cls.members}: {len(rows)}x{len(cols)} block, rank {rank}"
        )
    return FactorPair(X=x, Y=y)


def _by_size_then_member(cls: EquivalenceClass) -> Any:
    return (cls.representative.size, cls.members[0])


def exact_cec_completion(matrix: Any, supports_t: SupportPair) -> FactorPair:
    """
    Exact factorization of a matrix supported on a union of CECs.

    Raises:
        PreconditionViolation: if a class is not complete or the matrix has
            nonzeros outside the union of the class rectangles
    """
    b = np.asarray(matrix, dtype=np.float64)
    partition = partition_classes(supports_t)
    incomplete = [cls.members for cls in partition.classes if not cls.is_cec]
    if incomplete:
        raise PreconditionViolation(
            f"classes {[tuple(k + 1 for k in c) for c in incomplete]} are not complete"
        )
    if b.shape != (supports_t.m, supports_t.n):
        raise DimensionMismatch(
            f"matrix is {b.shape} but supports expect "
            f"{(supports_t.m, supports_t.n)}"
        )
    outside = b[~partition.cec_mask()]
    if outside.size and np.any(outside != 0):
        raise PreconditionViolation(
            f"{int(np.count_nonzero(outside))} nonzero entries lie outside S_T"
        )
    return svd_fsmf(b, supports_t, order_key=_by_size_then_member)


def svd_fsmf2(
    matrix: Any,
    supports: SupportPair,
    best_effort: bool = False,
    certificate: Optional[TractabilityCertificate] = None,
) -> FactorPair:
    """
    Solve the CEC part exactly, then the reduced instance outside S_T.

    Args:
        matrix: Target matrix
        supports: Support pair (I, J)
        best_effort: Fall back to svd_fsmf on uncertified supports
        certificate: Precomputed certificate of supports

    Returns:
        (X_T + X1, Y_T + Y1)

    Raises:
        CertificateMismatch: if supports are not certified and best_effort
            is unset
    """
    a = np.asarray(matrix, dtype=np.float64)
    cert = certificate if certificate is not None else certify(supports)
    taxonomy = cert.taxonomy
    if cert.level is CertificateLevel.UNKNOWN or taxonomy is None:
        if not best_effort:
            raise CertificateMismatch(cert.level.value)
        logger.warning("Supports not certified, running best-effort svd_fsmf")
        return svd_fsmf(a, supports)

    cec_mask = taxonomy.partition.cec_mask()
    on_cec = svd_fsmf(np.where(cec_mask, a, 0.0), taxonomy.cec_supports())
    outside = svd_fsmf(np.where(cec_mask, 0.0, a), taxonomy.reduced_supports())
    return on_cec + outside


def check_optimality(
    instance: ProblemInstance, factors: FactorPair, taxonomy: Taxonomy
) -> OptimalityVerdict:
    """
    Test the two optimality conditions of a reducible instance.

    The residual must vanish on S_T, and the factors restricted to
    (I^1, J^1) must reach the optimum of (A masked off S_T, I^1, J^1).

    Raises:
        CertificateMismatch: if the supports outside the CECs are not
            pairwise equal or disjoint
    """
    if not taxonomy.outside_equal_or_disjoint():
        raise CertificateMismatch(
            CertificateLevel.UNKNOWN.value,
            "supports outside the complete classes overlap; no optimality test",
        )
    a = instance.target
    cec_mask = taxonomy.partition.cec_mask()
    scale = float(np.linalg.norm(a))

    res_on_cec = float(np.linalg.norm(residual(instance, factors)[cec_mask]))

    reduced_supports = taxonomy.reduced_supports()
    reduced_instance = ProblemInstance(
        target=np.where(cec_mask, 0.0, a), supports=reduced_supports
    )
    restricted = FactorPair(
        X=project_to_support(factors.X, reduced_supports.left),
        Y=project_to_support(factors.Y, reduced_supports.right),
    )
    reduced_loss = loss(reduced_instance, restricted)
    reduced_optimum = loss(
        reduced_instance, svd_fsmf(reduced_instance.target, reduced_supports)
    )

    reason: Optional[str] = None
    if res_on_cec > OPTIMALITY_TOLERANCE * scale:
        reason = "residual-on-S_T"
    elif abs(reduced_loss - reduced_optimum) > OPTIMALITY_TOLERANCE * max(
        reduced_optimum, scale**2
    ):
        reason = "reduced-instance-not-optimal"
    return OptimalityVerdict(
        optimal=reason is None,
        reason=reason,
        residual_on_cec=res_on_cec,
        reduced_loss=reduced_loss,
        reduced_optimum=reduced_optimum,
    )


class DirectSolver:
    """Exact solver for supports certified tractable."""

    def __init__(self, best_effort: bool = False) -> None:
        """
        Initialize the direct solver.

        Args:
            best_effort: Return a feasible pair on uncertified supports
                instead of raising CertificateMismatch
        """
        self.best_effort = best_effort

    def solve(self, instance: ProblemInstance) -> Tuple[FactorPair, SolveReport]:
        """
        Certify the supports and factor the target.

        Returns:
            The factors and a single-entry SolveReport
        """
        start = time.perf_counter()
        cert = certify(instance.supports)
        if cert.level is CertificateLevel.DISJOINT_CLASSES:
            factors = svd_fsmf(instance.target, instance.supports)
        else:
            factors = svd_fsmf2(
                instance.target,
                instance.supports,
                best_effort=self.best_effort,
                certificate=cert,
            )
        elapsed = time.perf_counter() - start

        final = loss(instance, factors)
        logger.info(
            f"Direct solve ({cert.level.value}) finished in {elapsed:.4f}s "
            f"with loss {final:.3e}"
        )
        report = SolveReport(
            method_tag=Method.DIRECT.value,
            final_loss=final,
            loss_trace=[(0, final)],
            wall_time=elapsed,
            certificate=cert.level.value,
            iterations=1,
            converged=cert.is_tractable,
        )
        return factors, report
