"""Reduction from rank-one matrix completion with noise to FSMF."""

import logging
from typing import Any, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .models import (
    BoolArray,
    DenseMatrix,
    FactorPair,
    FloatArray,
    ProblemInstance,
    SupportPair,
)

logger = logging.getLogger(__name__)


def _binary(weights: Any) -> BoolArray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("weight mask must be 2-D")
    if not np.all((w == 0) | (w == 1)):
        raise ValueError("weight mask entries must be 0 or 1")
    return w == 1


class McpInstance(BaseModel):
    """Weighted low-rank approximation with a binary observation mask."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    target: DenseMatrix
    weights: DenseMatrix
    rank: int = Field(default=1, ge=1, le=1, description="Fixed to 1")

    @field_validator("weights")
    @classmethod
    def _check_binary(cls, value: FloatArray) -> FloatArray:
        _binary(value)
        return value

    def objective(self, x: Any, y: Any) -> float:
        return mcp_objective(self.target, self.weights, x, y)


class McpReduction(BaseModel):
    """Supports built from a weight mask, plus the orientation used."""

    model_config = ConfigDict(frozen=True)

    supports: SupportPair
    transposed: bool = Field(..., description="True when W had fewer rows")

    def oriented(self, matrix: Any) -> FloatArray:
        """Bring an m x n matrix to the orientation of the supports."""
        a = np.asarray(matrix, dtype=np.float64)
        return a.T if self.transposed else a

    def fsmf_instance(self, target: Any) -> ProblemInstance:
        return ProblemInstance(target=self.oriented(target), supports=self.supports)


def mcp_objective(target: Any, weights: Any, x: Any, y: Any) -> float:
    """||(A - x y^T) masked by W||_F^2."""
    a = np.asarray(target, dtype=np.float64)
    res = np.where(_binary(weights), a - np.outer(x, y), 0.0)
    return float(np.vdot(res, res))


def mcp_to_fsmf(weights: Any) -> McpReduction:
    """
    Supports of the FSMF instance equivalent to rank-one MCP with mask W.

    W is transposed first when it has fewer rows than columns. With W of
    shape m x n (m >= n), columns 1..n of I are 1 - W and column n + 1 is all
    ones; J is the identity with an extra all-ones column.
    """
    w = _binary(weights)
    transposed = w.shape[0] < w.shape[1]
    if transposed:
        w = w.T
    m, n = w.shape
    left = np.zeros((m, n + 1), dtype=bool)
    left[:, :n] = ~w
    left[:, n] = True
    right = np.zeros((n, n + 1), dtype=bool)
    right[np.arange(n), np.arange(n)] = True
    right[:, n] = True
    logger.debug(f"Reduced a {m}x{n} mask (transposed={transposed})")
    return McpReduction(
        supports=SupportPair.from_arrays(left, right), transposed=transposed
    )


def mcp_instance_from_weights(
    target: Any, weights: Any
) -> Tuple[ProblemInstance, McpReduction]:
    """FSMF instance of the reduction together with its bookkeeping."""
    reduction = mcp_to_fsmf(weights)
    return reduction.fsmf_instance(target), reduction


def map_mcp_solution_to_fsmf(target: Any, weights: Any, x: Any, y: Any) -> FactorPair:
    """
    Lift an MCP point (x, y) to a feasible FSMF pair with the same objective.

    Entries of X on the unobserved positions absorb A - x y^T so that the
    residual vanishes there; the last columns carry x and y.
    """
    reduction = mcp_to_fsmf(weights)
    a = reduction.oriented(target)
    u = np.asarray(x, dtype=np.float64).reshape(-1)
    v = np.asarray(y, dtype=np.float64).reshape(-1)
    if reduction.transposed:
        u, v = v, u
    m, n = a.shape
    if u.size != m or v.size != n:
        raise ValueError(f"expected vectors of sizes {m} and {n}")

    unobserved = reduction.supports.left.to_array()[:, :n]
    x_fac = np.zeros((m, n + 1))
    x_fac[:, :n] = np.where(unobserved, a - np.outer(u, v), 0.0)
    x_fac[:, n] = u
    y_fac = np.zeros((n, n + 1))
    y_fac[:, :n] = np.eye(n)
    y_fac[:, n] = v
    return FactorPair(X=x_fac, Y=y_fac)


def map_fsmf_solution_to_mcp(
    factors: FactorPair, transposed: bool = False
) -> Tuple[FloatArray, FloatArray]:
    """Read (x, y) off the last columns of X and Y."""
    x = np.array(factors.X[:, -1])
    y = np.array(factors.Y[:, -1])
    if transposed:
        return y, x
    return x, y
