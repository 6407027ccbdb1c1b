"""Data models for the FSMF toolkit."""

from enum import Enum
from typing import Annotated, Any, FrozenSet, List, Optional, Tuple

import numpy as np
import numpy.typing as npt
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    PrivateAttr,
    ValidationInfo,
    field_validator,
    model_validator,
)


FloatArray = npt.NDArray[np.float64]
BoolArray = npt.NDArray[np.bool_]


def _as_dense(value: Any) -> FloatArray:
    """Coerce a nested sequence or array into a read-only float64 matrix."""
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got {arr.ndim} dimension(s)")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    arr.setflags(write=False)
    return arr


def _as_vector(value: Any) -> FloatArray:
    arr = np.array(value, dtype=np.float64).reshape(-1)
    arr.setflags(write=False)
    return arr


def _array_to_list(arr: FloatArray) -> List[Any]:
    return list(arr.tolist())


DenseMatrix = Annotated[
    FloatArray,
    BeforeValidator(_as_dense),
    PlainSerializer(_array_to_list, when_used="json"),
]
DenseVector = Annotated[
    FloatArray,
    BeforeValidator(_as_vector),
    PlainSerializer(_array_to_list, when_used="json"),
]


class SupportMask(BaseModel):
    """Binary mask stored as a sorted coordinate list (0-based)."""

    model_config = ConfigDict(frozen=True)

    rows: int = Field(..., ge=0, description="Number of rows of the mask")
    cols: int = Field(..., ge=0, description="Number of columns of the mask")
    members: Tuple[Tuple[int, int], ...] = Field(
        default=(), description="Sorted (row, col) pairs inside the support"
    )

    _dense: BoolArray = PrivateAttr()
    _columns: Tuple[FrozenSet[int], ...] = PrivateAttr()

    @field_validator("members", mode="before")
    @classmethod
    def _normalize_members(cls, value: Any) -> Tuple[Tuple[int, int], ...]:
        return tuple(sorted({(int(i), int(j)) for i, j in value}))

    @field_validator("members")
    @classmethod
    def _check_range(
        cls, value: Tuple[Tuple[int, int], ...], info: ValidationInfo
    ) -> Tuple[Tuple[int, int], ...]:
        rows = info.data.get("rows")
        cols = info.data.get("cols")
        if rows is None or cols is None:
            return value
        for i, j in value:
            if not (0 <= i < rows and 0 <= j < cols):
                raise ValueError(
                    f"index ({i + 1}, {j + 1}) outside a {rows}x{cols} mask"
                )
        return value

    def model_post_init(self, __context: Any) -> None:
        dense = np.zeros((self.rows, self.cols), dtype=bool)
        if self.members:
            idx = np.asarray(self.members, dtype=np.intp)
            dense[idx[:, 0], idx[:, 1]] = True
        dense.setflags(write=False)
        self._dense = dense
        self._columns = tuple(
            frozenset(np.flatnonzero(dense[:, k]).tolist()) for k in range(self.cols)
        )

    @classmethod
    def from_array(cls, arr: Any) -> "SupportMask":
        """Build a mask from any array whose nonzero entries mark the support."""
        dense = np.asarray(arr) != 0
        if dense.ndim != 2:
            raise ValueError("support masks must be 2-D")
        rows, cols = np.nonzero(dense)
        return cls(
            rows=dense.shape[0],
            cols=dense.shape[1],
            members=list(zip(rows.tolist(), cols.tolist())),
        )

    @classmethod
    def full(cls, rows: int, cols: int) -> "SupportMask":
        return cls.from_array(np.ones((rows, cols), dtype=bool))

    @classmethod
    def empty(cls, rows: int, cols: int) -> "SupportMask":
        return cls(rows=rows, cols=cols)

    @property
    def nnz(self) -> int:
        return len(self.members)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    def to_array(self) -> BoolArray:
        """Return a writable boolean copy of the mask."""
        return self._dense.copy()

    def column(self, k: int) -> FrozenSet[int]:
        """Row indices of column k."""
        return self._columns[k]

    def column_counts(self) -> npt.NDArray[np.int64]:
        return self._dense.sum(axis=0).astype(np.int64)

    def __contains__(self, item: object) -> bool:
        if not isinstance(item, tuple) or len(item) != 2:
            return False
        i, j = item
        return bool(0 <= i < self.rows and 0 <= j < self.cols and self._dense[i, j])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SupportMask):
            return NotImplemented
        return (self.rows, self.cols, self.members) == (
            other.rows,
            other.cols,
            other.members,
        )

    def __hash__(self) -> int:
        return hash((self.rows, self.cols, self.members))


class SupportPair(BaseModel):
    """The pair (I, J) constraining the supports of X and Y."""

    model_config = ConfigDict(frozen=True)

    left: SupportMask = Field(..., description="Support I of X (m x r)")
    right: SupportMask = Field(..., description="Support J of Y (n x r)")

    @model_validator(mode="after")
    def _check_inner_dimension(self) -> "SupportPair":
        if self.left.cols != self.right.cols:
            raise ValueError(
                f"left mask has {self.left.cols} columns but right mask has "
                f"{self.right.cols}"
            )
        return self

    @classmethod
    def from_arrays(cls, left: Any, right: Any) -> "SupportPair":
        return cls(
            left=SupportMask.from_array(left), right=SupportMask.from_array(right)
        )

    @property
    def m(self) -> int:
        return self.left.rows

    @property
    def n(self) -> int:
        return self.right.rows

    @property
    def r(self) -> int:
        return self.left.cols


class RankOneSupport(BaseModel):
    """Rectangle supp(I[:, k]) x supp(J[:, k]) touched by one outer product."""

    model_config = ConfigDict(frozen=True)

    row_set: FrozenSet[int] = Field(default_factory=frozenset)
    col_set: FrozenSet[int] = Field(default_factory=frozenset)

    @property
    def is_empty(self) -> bool:
        return not self.row_set or not self.col_set

    @property
    def size(self) -> int:
        return len(self.row_set) * len(self.col_set)

    def cells(self) -> FrozenSet[Tuple[int, int]]:
        return frozenset((i, j) for i in self.row_set for j in self.col_set)

    def intersects(self, other: "RankOneSupport") -> bool:
        return bool(self.row_set & other.row_set) and bool(
            self.col_set & other.col_set
        )

    def sorted_rows(self) -> List[int]:
        return sorted(self.row_set)

    def sorted_cols(self) -> List[int]:
        return sorted(self.col_set)


class FactorPair(BaseModel):
    """The factors (X, Y) with X of shape m x r and Y of shape n x r."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    X: DenseMatrix = Field(..., description="Left factor (m x r)")
    Y: DenseMatrix = Field(..., description="Right factor (n x r)")

    @model_validator(mode="after")
    def _check_rank(self) -> "FactorPair":
        if self.X.shape[1] != self.Y.shape[1]:
            raise ValueError(
                f"X has {self.X.shape[1]} columns but Y has {self.Y.shape[1]}"
            )
        return self

    @classmethod
    def zeros(cls, m: int, n: int, r: int) -> "FactorPair":
        return cls(X=np.zeros((m, r)), Y=np.zeros((n, r)))

    @property
    def r(self) -> int:
        return int(self.X.shape[1])

    def product(self) -> FloatArray:
        """Return X @ Y.T."""
        return np.asarray(self.X @ self.Y.T, dtype=np.float64)

    def __add__(self, other: "FactorPair") -> "FactorPair":
        return FactorPair(X=self.X + other.X, Y=self.Y + other.Y)


class ProblemInstance(BaseModel):
    """Target matrix A together with the supports (I, J)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    target: DenseMatrix = Field(..., description="Target matrix A (m x n)")
    supports: SupportPair = Field(..., description="Support pair (I, J)")

    @model_validator(mode="after")
    def _check_dimensions(self) -> "ProblemInstance":
        m, n = self.target.shape
        if self.supports.m != m or self.supports.n != n:
            raise ValueError(
                f"target is {m}x{n} but supports expect "
                f"{self.supports.m}x{self.supports.n}"
            )
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return (int(self.target.shape[0]), int(self.target.shape[1]))

    def infeasible_entries(
        self, factors: FactorPair
    ) -> Tuple[List[Tuple[int, int]], List[Tuple[int, int]]]:
        """Nonzero factor entries lying outside I (first list) or J (second)."""
        outside_x = (factors.X != 0) & ~self.supports.left.to_array()
        outside_y = (factors.Y != 0) & ~self.supports.right.to_array()
        return (
            [(int(i), int(k)) for i, k in zip(*np.nonzero(outside_x))],
            [(int(j), int(k)) for j, k in zip(*np.nonzero(outside_y))],
        )

    def is_feasible(self, factors: FactorPair) -> bool:
        if factors.X.shape != self.supports.left.shape:
            return False
        if factors.Y.shape != self.supports.right.shape:
            return False
        bad_x, bad_y = self.infeasible_entries(factors)
        return not bad_x and not bad_y


class Method(str, Enum):
    """Solver back ends."""

    DIRECT = "direct"
    GD = "gd"
    MOMENTUM = "momentum"
    ADAM = "adam"
    PALM = "palm"


# {5e-k, 1e-k | k = 1..4}, increasing
DEFAULT_LEARNING_RATE_GRID: Tuple[float, ...] = (
    1e-4,
    5e-4,
    1e-3,
    5e-3,
    1e-2,
    5e-2,
    1e-1,
    5e-1,
)


class IterativeConfig(BaseModel):
    """Configuration of a first-order run."""

    model_config = ConfigDict(validate_assignment=True)

    method: Method = Field(default=Method.GD, description="Update rule")
    learning_rate: float = Field(default=1e-2, gt=0, description="Step size")
    grid: Optional[Tuple[float, ...]] = Field(
        default=None, description="Learning rates tried by grid_search"
    )
    max_iters: int = Field(default=10_000, ge=1, description="Iteration budget")
    stop_log10_loss: float = Field(
        default=-10.0, description="Stop once log10 ||A - XY^T||_F reaches this"
    )
    momentum_beta: float = Field(default=0.9, ge=0, lt=1)
    adam_beta1: float = Field(default=0.9, ge=0, lt=1)
    adam_beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    palm_sparsity: Optional[Tuple[int, int]] = Field(
        default=None, description="Keep the top (k_left, k_right) entries (PALM)"
    )
    palm_gamma: float = Field(default=1.01, gt=1)
    palm_max_step: float = Field(default=1e6, gt=0)
    divergence_threshold: float = Field(default=1e15, gt=0)
    trace_every: int = Field(default=1, ge=1)
    seed: int = Field(default=0, description="Seed of the random initialization")

    @field_validator("grid")
    @classmethod
    def _check_grid(
        cls, value: Optional[Tuple[float, ...]]
    ) -> Optional[Tuple[float, ...]]:
        if value is None:
            return value
        if not value:
            raise ValueError("learning-rate grid must not be empty")
        if any(rate <= 0 for rate in value):
            raise ValueError("learning rates must be positive")
        return value

    @model_validator(mode="after")
    def _check_sparsity(self) -> "IterativeConfig":
        if self.palm_sparsity is not None:
            if self.method is not Method.PALM:
                raise ValueError("palm_sparsity is only valid with method 'palm'")
            if min(self.palm_sparsity) < 0:
                raise ValueError("sparsity levels must be nonnegative")
        if self.method is Method.DIRECT:
            raise ValueError("'direct' is not an iterative method")
        return self

    def rates(self) -> Tuple[float, ...]:
        return self.grid if self.grid is not None else (self.learning_rate,)


class SolveReport(BaseModel):
    """Outcome of a solver run."""

    model_config = ConfigDict(validate_assignment=True)

    method_tag: str = Field(..., description="Solver label")
    final_loss: float = Field(..., ge=0, description="Squared Frobenius residual")
    loss_trace: List[Tuple[int, float]] = Field(default_factory=list)
    wall_time: float = Field(default=0.0, ge=0, description="Seconds")
    certificate: Optional[str] = Field(None, description="Certificate level")
    support_change_trace: Optional[List[Tuple[int, int, int]]] = Field(None)
    iterations: int = Field(default=0, ge=0)
    learning_rate: Optional[float] = Field(None)
    seed: Optional[int] = Field(None)
    converged: bool = Field(default=True)
    diverged: bool = Field(default=False)

    @property
    def log10_frobenius_error(self) -> float:
        if self.final_loss <= 0:
            return float("-inf")
        return 0.5 * float(np.log10(self.final_loss))
