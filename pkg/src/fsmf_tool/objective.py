"""Loss, gradient and projection shared by every solver."""

from typing import Tuple

import numpy as np

from .errors import DimensionMismatch
from .models import FactorPair, FloatArray, ProblemInstance, SupportMask


def _check_shapes(instance: ProblemInstance, factors: FactorPair) -> None:
    if factors.X.shape != instance.supports.left.shape:
        raise DimensionMismatch(
            f"X has shape {factors.X.shape}, expected {instance.supports.left.shape}"
        )
    if factors.Y.shape != instance.supports.right.shape:
        raise DimensionMismatch(
            f"Y has shape {factors.Y.shape}, expected {instance.supports.right.shape}"
        )


def residual(instance: ProblemInstance, factors: FactorPair) -> FloatArray:
    """Return A - X Y^T."""
    _check_shapes(instance, factors)
    return np.asarray(instance.target - factors.X @ factors.Y.T, dtype=np.float64)


def loss(instance: ProblemInstance, factors: FactorPair) -> float:
    """
    Squared Frobenius norm of the residual.

    Args:
        instance: Target and supports
        factors: Factor pair (X, Y)

    Returns:
        ||A - X Y^T||_F^2
    """
    res = residual(instance, factors)
    return float(np.vdot(res, res))


def masked_gradient(
    instance: ProblemInstance, factors: FactorPair
) -> Tuple[FloatArray, FloatArray]:
    """
    Gradient of the loss restricted to the supports.

    Returns:
        (-2 (A - XY^T) Y masked by I, -2 (A - XY^T)^T X masked by J)
    """
    res = residual(instance, factors)
    grad_x = -2.0 * (res @ factors.Y)
    grad_y = -2.0 * (res.T @ factors.X)
    grad_x[~instance.supports.left.to_array()] = 0.0
    grad_y[~instance.supports.right.to_array()] = 0.0
    return grad_x, grad_y


def project_to_support(matrix: FloatArray, support: SupportMask) -> FloatArray:
    """Zero the entries of matrix outside support."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != support.shape:
        raise DimensionMismatch(
            f"matrix has shape {matrix.shape} but support is {support.shape}"
        )
    return np.where(support.to_array(), matrix, 0.0)
