"""Structured support families and target matrices."""

from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import hadamard

from .models import BoolArray, FactorPair, FloatArray, ProblemInstance, SupportPair


def _check_level(level: int, minimum: int = 1) -> None:
    if level < minimum:
        raise ValueError(f"Invalid level N={level}; expected N >= {minimum}")


def gen_full(m: int, n: int, r: int) -> SupportPair:
    """Unconstrained supports: I = 1_{m x r}, J = 1_{n x r}."""
    if min(m, n, r) < 1:
        raise ValueError(f"Invalid dimensions m={m}, n={n}, r={r}")
    return SupportPair.from_arrays(np.ones((m, r), bool), np.ones((n, r), bool))


def gen_lu(n: int) -> SupportPair:
    """Lower-triangular supports I = J = {(i, j) | j <= i}."""
    if n < 1:
        raise ValueError(f"Invalid size n={n}")
    lower = np.tril(np.ones((n, n), dtype=bool))
    return SupportPair.from_arrays(lower, lower)


def kron_supports(a: int, b: int) -> SupportPair:
    """I = 1_{2^a x 2^a} (x) Id_{2^b}, J = Id_{2^a} (x) 1_{2^b x 2^b}."""
    if a < 0 or b < 0:
        raise ValueError(f"Invalid Kronecker exponents a={a}, b={b}")
    big, small = 2**a, 2**b
    left = np.kron(np.ones((big, big)), np.eye(small))
    right = np.kron(np.eye(big), np.ones((small, small)))
    return SupportPair.from_arrays(left, right)


def gen_kron1(level: int) -> SupportPair:
    """Balanced two-factor butterfly supports with a = ceil(N/2), b = floor(N/2)."""
    _check_level(level)
    return kron_supports((level + 1) // 2, level // 2)


def gen_kron2(level: int) -> SupportPair:
    """Unbalanced supports I = 1_{2x2} (x) Id_{2^(N-1)}, J = Id_2 (x) 1."""
    _check_level(level)
    return kron_supports(1, level - 1)


def _hodlr_masks(level: int) -> Tuple[BoolArray, BoolArray]:
    left = np.ones((1, 1), dtype=bool)
    right = np.ones((1, 1), dtype=bool)
    for current in range(1, level + 1):
        half = 2 ** (current - 1)
        ones = np.ones((half, 1), dtype=bool)
        zeros = np.zeros((half, 1), dtype=bool)
        zl, zr = np.zeros_like(left), np.zeros_like(right)
        left = np.block([[ones, zeros, left, zl], [zeros, ones, zl, left]])
        right = np.block([[zeros, ones, right, zr], [ones, zeros, zr, right]])
    return left, right


def gen_hodlr(level: int) -> SupportPair:
    """
    Supports of a rank-one HODLR factorization of a 2^N x 2^N matrix.

    The first two columns cover the off-diagonal blocks at the top level and
    the remaining columns repeat the construction on each diagonal block, so
    the inner dimension is 3 * 2^N - 2.
    """
    _check_level(level)
    left, right = _hodlr_masks(level)
    return SupportPair.from_arrays(left, right)


def random_hodlr_matrix(level: int, seed: int) -> FloatArray:
    """Random HODLR matrix whose off-diagonal blocks are normal outer products."""
    _check_level(level, minimum=0)
    rng = np.random.default_rng(seed)

    def build(current: int) -> FloatArray:
        if current == 0:
            return rng.standard_normal((1, 1))
        half = 2 ** (current - 1)
        top = build(current - 1)
        bottom = build(current - 1)
        upper = np.outer(rng.standard_normal(half), rng.standard_normal(half))
        lower = np.outer(rng.standard_normal(half), rng.standard_normal(half))
        return np.block([[top, upper], [lower, bottom]])

    return build(level)


def gen_hadamard(level: int) -> FloatArray:
    """Sylvester Hadamard matrix of size 2^N."""
    _check_level(level, minimum=0)
    return np.asarray(hadamard(2**level), dtype=np.float64)


class UnattainedInstance(BaseModel):
    """2x2 LU instance whose infimum 0 is approached but never attained."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    instance: ProblemInstance = Field(..., description="A = [[0,1],[1,0]], LU supports")

    def witness(self, k: float) -> FactorPair:
        """Feasible pair with loss 1/k^2 and largest entry k."""
        if k <= 0:
            raise ValueError("k must be positive")
        return FactorPair(X=[[-k, k], [0.0, 1.0]], Y=[[1.0, 1.0], [0.0, 1.0 / k]])


def gen_unattained_lu_instance() -> UnattainedInstance:
    """Upper-triangular 2x2 supports with the antidiagonal target."""
    upper = np.array([[1, 1], [0, 1]], dtype=bool)
    instance = ProblemInstance(
        target=[[0.0, 1.0], [1.0, 0.0]],
        supports=SupportPair.from_arrays(upper, upper),
    )
    return UnattainedInstance(instance=instance)
