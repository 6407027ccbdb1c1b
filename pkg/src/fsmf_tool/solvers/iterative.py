"""First-order baselines: projected GD, momentum, ADAM and PALM."""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..models import (
    BoolArray,
    FactorPair,
    FloatArray,
    IterativeConfig,
    Method,
    ProblemInstance,
    SolveReport,
    SupportMask,
    SupportPair,
)

logger = logging.getLogger(__name__)

IterationCallback = Callable[[int, FactorPair, float], None]


class GridSearchResult(BaseModel):
    """Best run of a learning-rate sweep plus every report in rate order."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    best_rate: float
    best_factors: FactorPair
    best_report: SolveReport
    reports: List[SolveReport]
    converged: bool


def _random_inside(mask: SupportMask, rng: np.random.Generator) -> FloatArray:
    dense = mask.to_array()
    counts = dense.sum(axis=0)
    std = np.where(counts > 0, 1.0 / np.sqrt(np.maximum(counts, 1)), 0.0)
    values = rng.standard_normal(dense.shape) * std
    return np.where(dense, values, 0.0)


def init_factors(supports: SupportPair, seed: int) -> FactorPair:
    """
    Random factors inside the supports.

    Entries of column k of X are drawn from N(0, 1/|I[:, k]|) and likewise
    for Y; empty columns stay zero. X is drawn before Y from one generator.
    """
    rng = np.random.default_rng(seed)
    x = _random_inside(supports.left, rng)
    y = _random_inside(supports.right, rng)
    return FactorPair(X=x, Y=y)


def hard_threshold(matrix: FloatArray, k: int) -> FloatArray:
    """Keep the k largest magnitudes; ties go to the lower linear index."""
    flat = matrix.ravel()
    if k >= flat.size:
        return matrix.copy()
    out = np.zeros_like(flat)
    if k > 0:
        keep = np.argsort(-np.abs(flat), kind="stable")[:k]
        out[keep] = flat[keep]
    return out.reshape(matrix.shape)


def _lipschitz_step(other: FloatArray, gamma: float, max_step: float) -> float:
    if other.size == 0:
        return max_step
    lipschitz = 2.0 * float(np.linalg.norm(other, 2)) ** 2
    if lipschitz == 0.0:
        return max_step
    return min(1.0 / (gamma * lipschitz), max_step)


def palm_step_sizes(
    factors: FactorPair, gamma: float = 1.01, max_step: float = 1e6
) -> Tuple[float, float]:
    """
    Block step sizes 1 / (gamma * Lip).

    The X block has Lipschitz constant 2 ||Y||_op^2 and the Y block
    2 ||X||_op^2. A zero factor gives the capped step.
    """
    return (
        _lipschitz_step(factors.Y, gamma, max_step),
        _lipschitz_step(factors.X, gamma, max_step),
    )


class _Projector:
    """Fixed-support masking or k-sparse hard thresholding."""

    def __init__(self, mask: BoolArray, sparsity: Optional[int]) -> None:
        self.mask = mask
        self.sparsity = sparsity

    def __call__(self, matrix: FloatArray) -> FloatArray:
        masked = np.where(self.mask, matrix, 0.0)
        if self.sparsity is None:
            return masked
        return hard_threshold(masked, self.sparsity)


def _squared_residual(target: FloatArray, x: FloatArray, y: FloatArray) -> float:
    res = target - x @ y.T
    return float(np.vdot(res, res))


def run(
    instance: ProblemInstance,
    config: IterativeConfig,
    *,
    learning_rate: Optional[float] = None,
    initial: Optional[FactorPair] = None,
    callback: Optional[IterationCallback] = None,
) -> Tuple[FactorPair, SolveReport]:
    """
    Run one first-order method until the threshold or the iteration budget.

    GD, momentum and ADAM update both factors from the same residual; PALM
    updates X then Y with Lipschitz step sizes (learning_rate is unused for
    PALM). Divergence stops the run and is flagged in the report.

    Args:
        instance: Target and supports
        config: Method and hyperparameters
        learning_rate: Overrides config.learning_rate
        initial: Starting point, defaults to init_factors(config.seed)
        callback: Called after each accepted iteration

    Returns:
        Last finite iterate and its SolveReport
    """
    rate = learning_rate if learning_rate is not None else config.learning_rate
    method = config.method
    target = instance.target
    left_mask = instance.supports.left.to_array()
    right_mask = instance.supports.right.to_array()
    k_left, k_right = config.palm_sparsity or (None, None)
    project_x = _Projector(left_mask, k_left)
    project_y = _Projector(right_mask, k_right)

    if initial is None:
        initial = init_factors(instance.supports, config.seed)
    x = project_x(np.array(initial.X))
    y = project_y(np.array(initial.Y))

    stop_loss = 10.0 ** (2.0 * config.stop_log10_loss)
    current = _squared_residual(target, x, y)
    trace: List[Tuple[int, float]] = [(0, current)]
    changes: Optional[List[Tuple[int, int, int]]] = (
        [] if method is Method.PALM else None
    )

    velocity_x, velocity_y = np.zeros_like(x), np.zeros_like(y)
    moment_x, moment_y = np.zeros_like(x), np.zeros_like(y)
    second_x, second_y = np.zeros_like(x), np.zeros_like(y)

    iteration = 0
    converged = current <= stop_loss
    diverged = False
    shown_rate = rate if method is not Method.PALM else "Lipschitz"
    logger.info(
        f"Starting {method.value} (rate {shown_rate}, seed {config.seed}) "
        f"at loss {current:.3e}"
    )
    start = time.perf_counter()
    with np.errstate(over="ignore", invalid="ignore"):
        while not converged and iteration < config.max_iters:
            step = iteration + 1
            if method is Method.PALM:
                res = target - x @ y.T
                step_x = _lipschitz_step(y, config.palm_gamma, config.palm_max_step)
                new_x = project_x(x + step_x * 2.0 * (res @ y))
                res = target - new_x @ y.T
                step_y = _lipschitz_step(
                    new_x, config.palm_gamma, config.palm_max_step
                )
                new_y = project_y(y + step_y * 2.0 * (res.T @ new_x))
            else:
                res = target - x @ y.T
                grad_x = np.where(left_mask, -2.0 * (res @ y), 0.0)
                grad_y = np.where(right_mask, -2.0 * (res.T @ x), 0.0)
                if method is Method.MOMENTUM:
                    velocity_x = config.momentum_beta * velocity_x + grad_x
                    velocity_y = config.momentum_beta * velocity_y + grad_y
                    grad_x, grad_y = velocity_x, velocity_y
                elif method is Method.ADAM:
                    b1, b2 = config.adam_beta1, config.adam_beta2
                    moment_x = b1 * moment_x + (1 - b1) * grad_x
                    moment_y = b1 * moment_y + (1 - b1) * grad_y
                    second_x = b2 * second_x + (1 - b2) * grad_x**2
                    second_y = b2 * second_y + (1 - b2) * grad_y**2
                    grad_x = (moment_x / (1 - b1**step)) / (
                        np.sqrt(second_x / (1 - b2**step)) + config.adam_eps
                    )
                    grad_y = (moment_y / (1 - b1**step)) / (
                        np.sqrt(second_y / (1 - b2**step)) + config.adam_eps
                    )
                new_x = project_x(x - rate * grad_x)
                new_y = project_y(y - rate * grad_y)

            new_loss = _squared_residual(target, new_x, new_y)
            largest = max(
                float(np.max(np.abs(new_x), initial=0.0)),
                float(np.max(np.abs(new_y), initial=0.0)),
            )
            if (
                not np.isfinite(new_loss)
                or not np.isfinite(largest)
                or new_loss > config.divergence_threshold
                or largest > config.divergence_threshold
            ):
                diverged = True
                logger.warning(
                    f"{method.value} diverged at iteration {step} (rate {rate})"
                )
                break

            if changes is not None:
                changes.append(
                    (
                        step,
                        int(np.count_nonzero((x != 0) ^ (new_x != 0))),
                        int(np.count_nonzero((y != 0) ^ (new_y != 0))),
                    )
                )
            x, y, current, iteration = new_x, new_y, new_loss, step
            if iteration % config.trace_every == 0:
                trace.append((iteration, current))
            if callback is not None:
                callback(iteration, FactorPair(X=x, Y=y), current)
            converged = current <= stop_loss
    elapsed = time.perf_counter() - start

    if trace[-1][0] != iteration:
        trace.append((iteration, current))
    outcome = "converged" if converged else ("diverged" if diverged else "budget")
    logger.info(
        f"{method.value} stopped after {iteration} iterations "
        f"at loss {current:.3e} ({outcome})"
    )
    report = SolveReport(
        method_tag=method.value,
        final_loss=current,
        loss_trace=trace,
        wall_time=elapsed,
        support_change_trace=changes,
        iterations=iteration,
        learning_rate=None if method is Method.PALM else rate,
        seed=config.seed,
        converged=converged,
        diverged=diverged,
    )
    return FactorPair(X=x, Y=y), report


def _rank_key(report: SolveReport, index: int) -> Tuple[float, float, int]:
    if report.converged:
        return (0.0, float(report.iterations), index)
    return (1.0 + float(report.diverged), report.final_loss, index)


def grid_search(
    instance: ProblemInstance, config: IterativeConfig, jobs: Optional[int] = None
) -> GridSearchResult:
    """
    Run every learning rate of the grid and keep the best.

    Converged runs are ranked by iteration count, then by grid position.
    When nothing converges, non-divergent runs with the lowest final loss
    win. Runs are executed concurrently; reports keep grid order.
    """
    rates = config.rates()
    workers = max(1, min(len(rates), jobs or os.cpu_count() or 1))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(run, instance, config, learning_rate=rate) for rate in rates
        ]
        outcomes = [future.result() for future in futures]

    reports = [report for _, report in outcomes]
    best = min(range(len(outcomes)), key=lambda i: _rank_key(reports[i], i))
    best_factors, best_report = outcomes[best]
    status = "converged" if best_report.converged else "not converged"
    logger.info(f"Grid search over {len(rates)} rates: best {rates[best]} ({status})")
    return GridSearchResult(
        best_rate=rates[best],
        best_factors=best_factors,
        best_report=best_report,
        reports=reports,
        converged=best_report.converged,
    )


class IterativeSolver:
    """First-order solver, optionally tuned over a learning-rate grid."""

    def __init__(self, config: IterativeConfig, jobs: Optional[int] = None) -> None:
        self.config = config
        self.jobs = jobs

    def solve(self, instance: ProblemInstance) -> Tuple[FactorPair, SolveReport]:
        if self.config.grid is not None:
            result = grid_search(instance, self.config, jobs=self.jobs)
            return result.best_factors, result.best_report
        return run(instance, self.config)
