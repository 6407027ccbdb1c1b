"""Landscape tools: valley curves, spurious constructions and feasible paths."""

import logging
import math
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import svdvals

from .analysis import SpuriousWitness, find_spurious_witness, multiplicity
from .errors import InvalidWitness
from .generators import gen_lu
from .models import FactorPair, FloatArray, ProblemInstance, SupportPair
from .objective import loss
from .solvers.direct import truncated_svd

logger = logging.getLogger(__name__)

# 2x2 targets on lower-triangular supports
VALLEY_TARGET: Tuple[Tuple[float, ...], ...] = ((1.0, 1.0), (1.0, 0.0))
PLATEAU_TARGET: Tuple[Tuple[float, ...], ...] = ((1.0, 0.0), (0.0, 2.0))
NO_LU_TARGET: Tuple[Tuple[float, ...], ...] = ((0.0, 1.0), (1.0, 0.0))

VALLEY_SIGMA = 5.0
DEFAULT_SAMPLE_COUNT = 1024


class FeasiblePath(BaseModel):
    """Continuous map t in [0, 1] to a factor pair, checked by sampling."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    sampler: Callable[[float], FactorPair]
    sample_count: int = Field(default=DEFAULT_SAMPLE_COUNT, ge=2)

    def times(self) -> FloatArray:
        return np.linspace(0.0, 1.0, self.sample_count)

    def samples(self) -> Iterable[Tuple[float, FactorPair]]:
        for t in self.times():
            yield float(t), self.sampler(float(t))


class PathCheck(BaseModel):
    feasible: bool
    monotone: bool
    max_violation: float = Field(..., ge=0)
    infeasible_at: Optional[float] = None
    losses: List[float] = Field(default_factory=list)


class ValleyConstruction(BaseModel):
    """Instance with a spurious valley, a point inside it and an optimum."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    instance: ProblemInstance
    in_valley: FactorPair
    global_opt: FactorPair
    witness: SpuriousWitness
    placement: Dict[str, Tuple[int, int]] = Field(
        ..., description="Original indices of the local rows, cols and columns"
    )


class MinimumConstruction(BaseModel):
    """Instance with a spurious strict local minimum and a global optimum."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    instance: ProblemInstance
    spurious_min: FactorPair
    global_opt: FactorPair
    witness: SpuriousWitness
    placement: Dict[str, Tuple[int, int]]


class BarrierReport(BaseModel):
    """How a sampled path crosses the slice sigma = 1."""

    crossed: bool
    crossing_samples: int = Field(..., ge=0)
    min_crossing_loss: Optional[float] = None
    min_slice_gap: float = Field(
        ..., description="Smallest loss - g(sigma) over all samples"
    )


def g_sigma(sigma: float) -> float:
    """Infimum of the valley-instance loss on the slice with coordinate sigma."""
    trace = sigma**2 + 3.0
    numerator = 2.0 * (sigma + 1.0) ** 2
    discriminant = trace**2 - 4.0 * (sigma + 1.0) ** 2
    denominator = trace + math.sqrt(max(discriminant, 0.0))
    if denominator <= 0:
        raise ArithmeticError(f"non-positive denominator at sigma={sigma}")
    return numerator / denominator


def g_sigma_oracle(sigma: float) -> float:
    """Squared smaller-magnitude eigenvalue of [[1, 1], [1, -sigma]]."""
    eigenvalues = np.linalg.eigvalsh(np.array([[1.0, 1.0], [1.0, -sigma]]))
    return float(np.min(np.abs(eigenvalues)) ** 2)


def slice_loss(target: Any, sigma: float) -> float:
    """
    Slice infimum for any 2x2 target on lower-triangular supports.

    Fixing the second column's contribution sigma at entry (2, 2), the first
    column is free, so the infimum is the squared smallest singular value of
    the target with sigma subtracted at (2, 2).
    """
    shifted = np.array(target, dtype=np.float64)
    if shifted.shape != (2, 2):
        raise ValueError("slice_loss expects a 2x2 target")
    shifted[1, 1] -= sigma
    return float(svdvals(shifted)[-1] ** 2)


def valley_curves(sigmas: Iterable[float]) -> Dict[str, List[float]]:
    """g(sigma) for the valley, plateau and no-LU targets."""
    grid = [float(s) for s in sigmas]
    return {
        "sigma": grid,
        "g1": [g_sigma(s) for s in grid],
        "g2": [slice_loss(PLATEAU_TARGET, s) for s in grid],
        "g3": [slice_loss(NO_LU_TARGET, s) for s in grid],
    }


def validate_witness(supports: SupportPair, witness: SpuriousWitness) -> None:
    """
    Raises:
        InvalidWitness: if the indices do not meet the membership conditions
    """
    w = witness
    if not (
        max(w.i1, w.i2) < supports.m
        and max(w.j1, w.j2) < supports.n
        and max(w.k, w.other) < supports.r
    ):
        raise InvalidWitness(f"witness {w} is out of range")
    if w.i1 == w.i2 or w.j1 == w.j2 or w.k == w.other:
        raise InvalidWitness(f"witness {w} repeats an index")

    rows_k, cols_k = supports.left.column(w.k), supports.right.column(w.k)
    mult = multiplicity(supports)
    for i, j in ((w.i1, w.j1), (w.i2, w.j1), (w.i1, w.j2)):
        if i not in rows_k or j not in cols_k or mult[i, j] != 1:
            raise InvalidWitness(f"({i + 1}, {j + 1}) must belong only to S_k")
    if w.i2 not in rows_k or w.j2 not in cols_k:
        raise InvalidWitness("(i2, j2) must belong to S_k")
    other_rows = supports.left.column(w.other)
    other_cols = supports.right.column(w.other)
    if w.i2 not in other_rows or w.j2 not in other_cols:
        raise InvalidWitness("(i2, j2) must belong to the second support")


def _resolve_witness(
    supports: SupportPair, witness: Optional[SpuriousWitness]
) -> SpuriousWitness:
    if witness is None:
        witness = find_spurious_witness(supports)
        if witness is None:
            raise InvalidWitness("supports admit no spurious-object witness")
    validate_witness(supports, witness)
    return witness


def _placement(witness: SpuriousWitness) -> Dict[str, Tuple[int, int]]:
    return {
        "rows": (witness.i1, witness.i2),
        "cols": (witness.j1, witness.j2),
        "columns": (witness.k, witness.other),
    }


def _embed_target(
    supports: SupportPair, witness: SpuriousWitness, local: Any
) -> FloatArray:
    a = np.zeros((supports.m, supports.n))
    a[np.ix_([witness.i1, witness.i2], [witness.j1, witness.j2])] = local
    return a


def _embed_factors(
    supports: SupportPair, witness: SpuriousWitness, local_x: Any, local_y: Any
) -> FactorPair:
    x = np.zeros((supports.m, supports.r))
    y = np.zeros((supports.n, supports.r))
    columns = [witness.k, witness.other]
    x[np.ix_([witness.i1, witness.i2], columns)] = local_x
    y[np.ix_([witness.j1, witness.j2], columns)] = local_y
    return FactorPair(X=x, Y=y)


def sigma_coordinate(factors: FactorPair, witness: SpuriousWitness) -> float:
    """Sum over p != k of X[i2, p] * Y[j2, p]."""
    row, col, k = witness.i2, witness.j2, witness.k
    full = float(np.dot(factors.X[row], factors.Y[col]))
    return full - float(factors.X[row, k] * factors.Y[col, k])


def _slice_minimizer(
    supports: SupportPair, witness: SpuriousWitness, sigma: float
) -> FactorPair:
    shifted = np.array(VALLEY_TARGET)
    shifted[1, 1] -= sigma
    best = truncated_svd(shifted, 1)
    u, v = best.U[:, 0], best.V[:, 0]
    return _embed_factors(
        supports,
        witness,
        [[u[0], 0.0], [u[1], 1.0]],
        [[v[0], 0.0], [v[1], sigma]],
    )


def build_spurious_valley_instance(
    supports: SupportPair, witness: Optional[SpuriousWitness] = None
) -> ValleyConstruction:
    """
    Embed the valley target [[1, 1], [1, 0]] at the witness indices.

    The in-valley point minimizes the loss on the slice sigma = 5 and has
    loss g(5); the global optimum has loss 0 and sigma = -1.
    """
    witness = _resolve_witness(supports, witness)
    instance = ProblemInstance(
        target=_embed_target(supports, witness, VALLEY_TARGET), supports=supports
    )
    global_opt = _embed_factors(
        supports, witness, [[1.0, 0.0], [1.0, 1.0]], [[1.0, 0.0], [1.0, -1.0]]
    )
    return ValleyConstruction(
        instance=instance,
        in_valley=_slice_minimizer(supports, witness, VALLEY_SIGMA),
        global_opt=global_opt,
        witness=witness,
        placement=_placement(witness),
    )


def valley_point(construction: ValleyConstruction, sigma: float) -> FactorPair:
    """Feasible point of the valley instance attaining g(sigma) on its slice."""
    return _slice_minimizer(construction.instance.supports, construction.witness, sigma)


def sigma_slice_path(
    construction: ValleyConstruction,
    sigma_start: float = VALLEY_SIGMA,
    sigma_end: float = -1.0,
    sample_count: int = DEFAULT_SAMPLE_COUNT,
) -> FeasiblePath:
    """Path of slice minimizers with sigma moving linearly between the ends."""

    def sampler(t: float) -> FactorPair:
        return valley_point(construction, (1.0 - t) * sigma_start + t * sigma_end)

    return FeasiblePath(sampler=sampler, sample_count=sample_count)


def barrier_report(
    path: FeasiblePath, construction: ValleyConstruction, band: float = 0.05
) -> BarrierReport:
    """Compare every sample's loss with g(sigma) and locate the sigma = 1 crossing."""
    crossing: List[float] = []
    gap = math.inf
    for _, factors in path.samples():
        value = loss(construction.instance, factors)
        sigma = sigma_coordinate(factors, construction.witness)
        gap = min(gap, value - g_sigma(sigma))
        if abs(sigma - 1.0) <= band:
            crossing.append(value)
    return BarrierReport(
        crossed=bool(crossing),
        crossing_samples=len(crossing),
        min_crossing_loss=min(crossing) if crossing else None,
        min_slice_gap=gap,
    )


def build_spurious_minimum_instance(
    a: float,
    b: float,
    supports: Optional[SupportPair] = None,
    witness: Optional[SpuriousWitness] = None,
) -> MinimumConstruction:
    """
    Embed [[b, 0], [0, a]] with a > b > 0 at the witness indices.

    The spurious point puts a on (i2, k) and 1 on (j2, k); its loss is b^2
    and its masked gradient vanishes. Defaults to 2x2 LU supports.
    """
    if not a > b > 0:
        raise ValueError(f"expected a > b > 0, got a={a}, b={b}")
    supports = supports or gen_lu(2)
    witness = _resolve_witness(supports, witness)
    instance = ProblemInstance(
        target=_embed_target(supports, witness, [[b, 0.0], [0.0, a]]),
        supports=supports,
    )
    return MinimumConstruction(
        instance=instance,
        spurious_min=_embed_factors(
            supports, witness, [[0.0, 0.0], [a, 0.0]], [[0.0, 0.0], [1.0, 0.0]]
        ),
        global_opt=_embed_factors(
            supports, witness, [[b, 0.0], [0.0, a]], [[1.0, 0.0], [0.0, 1.0]]
        ),
        witness=witness,
        placement=_placement(witness),
    )


def probe_local_minimality(
    instance: ProblemInstance,
    point: FactorPair,
    radius: float = 1e-3,
    samples: int = 200,
    seed: int = 0,
) -> float:
    """Smallest loss over random feasible perturbations of norm radius."""
    rng = np.random.default_rng(seed)
    left = instance.supports.left.to_array()
    right = instance.supports.right.to_array()
    lowest = math.inf
    for _ in range(samples):
        dx = np.where(left, rng.standard_normal(left.shape), 0.0)
        dy = np.where(right, rng.standard_normal(right.shape), 0.0)
        scale = radius / math.sqrt(float(np.vdot(dx, dx) + np.vdot(dy, dy)))
        moved = FactorPair(X=point.X + scale * dx, Y=point.Y + scale * dy)
        lowest = min(lowest, loss(instance, moved))
    return lowest


def smart_init_path(
    instance: ProblemInstance,
    opt: FactorPair,
    start_X: Optional[Any] = None,
    start_Y: Optional[Any] = None,
    sample_count: int = DEFAULT_SAMPLE_COUNT,
) -> FeasiblePath:
    """
    Nonincreasing path from (start_X, 0) to a global minimizer.

    The first half moves X linearly to X* with Y held at zero, so the loss
    stays at ||A||^2; the second half scales Y* from 0 to 1. With start_Y the
    roles of the factors are swapped.
    """
    if (start_X is None) == (start_Y is None):
        raise ValueError("give exactly one of start_X and start_Y")
    x_star, y_star = np.array(opt.X), np.array(opt.Y)

    if start_X is not None:
        x0 = np.asarray(start_X, dtype=np.float64)
        if x0.shape != x_star.shape or np.any(
            (x0 != 0) & ~instance.supports.left.to_array()
        ):
            raise ValueError("start_X must be an m x r matrix supported in I")

        def sampler(t: float) -> FactorPair:
            if t <= 0.5:
                return FactorPair(
                    X=(1 - 2 * t) * x0 + 2 * t * x_star, Y=np.zeros_like(y_star)
                )
            return FactorPair(X=x_star, Y=(2 * t - 1) * y_star)

    else:
        y0 = np.asarray(start_Y, dtype=np.float64)
        if y0.shape != y_star.shape or np.any(
            (y0 != 0) & ~instance.supports.right.to_array()
        ):
            raise ValueError("start_Y must be an n x r matrix supported in J")

        def sampler(t: float) -> FactorPair:
            if t <= 0.5:
                return FactorPair(
                    X=np.zeros_like(x_star), Y=(1 - 2 * t) * y0 + 2 * t * y_star
                )
            return FactorPair(X=(2 * t - 1) * x_star, Y=y_star)

    return FeasiblePath(sampler=sampler, sample_count=sample_count)


def check_path(
    path: FeasiblePath, instance: ProblemInstance, tolerance: float = 1e-10
) -> PathCheck:
    """Sample the path; report support feasibility and loss monotonicity."""
    losses: List[float] = []
    infeasible_at: Optional[float] = None
    max_violation = 0.0
    for t, factors in path.samples():
        if infeasible_at is None and not instance.is_feasible(factors):
            infeasible_at = t
        value = loss(instance, factors)
        if losses:
            max_violation = max(max_violation, value - losses[-1])
        losses.append(value)
    if infeasible_at is not None:
        logger.info(f"Path leaves the supports at t={infeasible_at:.6f}")
    return PathCheck(
        feasible=infeasible_at is None,
        monotone=max_violation <= tolerance,
        max_violation=max_violation,
        infeasible_at=infeasible_at,
        losses=losses,
    )
