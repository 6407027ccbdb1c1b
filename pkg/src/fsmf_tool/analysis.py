"""Support analysis: rank-one supports, equivalence classes and certificates."""

import logging
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import svdvals

from .errors import NonRectangularOutsideSupport
from .models import (
    BoolArray,
    FactorPair,
    FloatArray,
    ProblemInstance,
    RankOneSupport,
    SupportMask,
    SupportPair,
)

logger = logging.getLogger(__name__)

# Relative singular-value threshold for the CEC-full-rank predicate
RANK_TOLERANCE = 1e-9


class CertificateLevel(str, Enum):
    """Strongest tractability result whose assumptions hold."""

    DISJOINT_CLASSES = "DisjointClasses"
    REDUCIBLE_OUTSIDE_CEC = "ReducibleOutsideCEC"
    UNKNOWN = "Unknown"


class EquivalenceClass(BaseModel):
    """Columns sharing one rank-one support."""

    model_config = ConfigDict(frozen=True)

    members: Tuple[int, ...] = Field(..., description="Sorted member columns")
    representative: RankOneSupport = Field(..., description="Shared (R_P, C_P)")
    is_cec: bool = Field(..., description="Complete equivalence class flag")

    @property
    def rows(self) -> List[int]:
        return self.representative.sorted_rows()

    @property
    def cols(self) -> List[int]:
        return self.representative.sorted_cols()


class ClassPartition(BaseModel):
    """Partition of the factor columns into equivalence classes."""

    model_config = ConfigDict(frozen=True)

    rows: int = Field(..., ge=0, description="m")
    cols: int = Field(..., ge=0, description="n")
    classes: Tuple[EquivalenceClass, ...] = Field(default=())

    @property
    def cec_columns(self) -> FrozenSet[int]:
        """The index set T."""
        return frozenset(k for c in self.classes if c.is_cec for k in c.members)

    @property
    def non_cec_columns(self) -> FrozenSet[int]:
        """The index set T-bar."""
        return frozenset(k for c in self.classes if not c.is_cec for k in c.members)

    def class_of(self, column: int) -> EquivalenceClass:
        for cls in self.classes:
            if column in cls.members:
                return cls
        raise KeyError(column)

    def cec_mask(self) -> BoolArray:
        """Boolean m x n mask of S_T, the union of CEC representatives."""
        mask = np.zeros((self.rows, self.cols), dtype=bool)
        for cls in self.classes:
            if cls.is_cec and not cls.representative.is_empty:
                mask[np.ix_(cls.rows, cls.cols)] = True
        return mask


class OutsideSupport(BaseModel):
    """S'_k = S_k minus S_T for a column k outside the CECs."""

    model_config = ConfigDict(frozen=True)

    column: int
    cells: FrozenSet[Tuple[int, int]] = Field(default_factory=frozenset)
    rectangular: bool
    row_set: FrozenSet[int] = Field(default_factory=frozenset)
    col_set: FrozenSet[int] = Field(default_factory=frozenset)

    def as_rectangle(self) -> RankOneSupport:
        return RankOneSupport(row_set=self.row_set, col_set=self.col_set)


class Taxonomy(BaseModel):
    """Split of I and J into the CEC part and the two parts outside."""

    model_config = ConfigDict(frozen=True)

    i_t: SupportMask
    i_bar1: SupportMask
    i_bar2: SupportMask
    j_t: SupportMask
    j_bar1: SupportMask
    j_bar2: SupportMask
    outside_supports: Dict[int, OutsideSupport] = Field(default_factory=dict)
    partition: ClassPartition

    def cec_supports(self) -> SupportPair:
        """(I_T, J_T)."""
        return SupportPair(left=self.i_t, right=self.j_t)

    def reduced_supports(self) -> SupportPair:
        """(I^1_Tbar, J^1_Tbar)."""
        return SupportPair(left=self.i_bar1, right=self.j_bar1)

    def outside_equal_or_disjoint(self) -> bool:
        """True when any two S'_k are either equal or disjoint."""
        distinct = {
            (s.row_set, s.col_set)
            for s in self.outside_supports.values()
            if s.row_set and s.col_set
        }
        rectangles = [RankOneSupport(row_set=r, col_set=c) for r, c in distinct]
        return rectangles_disjoint(rectangles, self.partition.rows, self.partition.cols)


class SpuriousWitness(BaseModel):
    """Indices (i1, j1, i2, j2, k) plus a second column covering (i2, j2)."""

    model_config = ConfigDict(frozen=True)

    i1: int = Field(..., ge=0)
    j1: int = Field(..., ge=0)
    i2: int = Field(..., ge=0)
    j2: int = Field(..., ge=0)
    k: int = Field(..., ge=0)
    other: int = Field(..., ge=0, description="Column l != k with (i2, j2) in S_l")

    def one_based(self) -> Tuple[int, int, int, int, int]:
        return (self.i1 + 1, self.j1 + 1, self.i2 + 1, self.j2 + 1, self.k + 1)

    def __str__(self) -> str:
        return "(" + ",".join(str(v) for v in self.one_based()) + ")"


class TractabilityCertificate(BaseModel):
    """Which tractability or landscape assumptions a support pair satisfies."""

    model_config = ConfigDict(frozen=True)

    level: CertificateLevel
    partition: ClassPartition
    taxonomy: Optional[Taxonomy] = None
    non_rectangular: Tuple[int, ...] = Field(
        default=(), description="Columns whose S'_k is not a rectangle"
    )
    spurious_witness: Optional[SpuriousWitness] = None

    @property
    def spurious_condition_met(self) -> bool:
        return self.spurious_witness is not None

    @property
    def is_tractable(self) -> bool:
        return self.level is not CertificateLevel.UNKNOWN

    def summary(self) -> str:
        """One-line human readable verdict."""
        if self.spurious_witness is not None:
            return (
                f"{self.level.value}; spurious condition met at "
                f"{self.spurious_witness}"
            )
        nonempty = [c for c in self.partition.classes if not c.representative.is_empty]
        if self.level is CertificateLevel.DISJOINT_CLASSES and len(nonempty) == 1:
            return f"{self.level.value} (single class)"
        return self.level.value


class CecClassRank(BaseModel):
    """Row ranks of the factor blocks of one CEC."""

    members: Tuple[int, ...]
    rows: Tuple[int, ...]
    cols: Tuple[int, ...]
    rank_x: int
    rank_y: int
    full_rank: bool


class CecRankReport(BaseModel):
    full_rank: bool
    classes: List[CecClassRank] = Field(default_factory=list)


def rectangles_disjoint(
    rectangles: Iterable[RankOneSupport], rows: int, cols: int
) -> bool:
    """True when no cell of the m x n grid is covered twice."""
    rects = [r for r in rectangles if not r.is_empty]
    if len(rects) < 2:
        return True
    row_ind = np.zeros((rows, len(rects)))
    col_ind = np.zeros((cols, len(rects)))
    for p, rect in enumerate(rects):
        row_ind[rect.sorted_rows(), p] = 1.0
        col_ind[rect.sorted_cols(), p] = 1.0
    return bool((row_ind @ col_ind.T).max() <= 1.5)


def multiplicity(supports: SupportPair) -> FloatArray:
    """Number of rank-one supports covering each cell of the m x n grid."""
    left = supports.left.to_array().astype(np.float64)
    right = supports.right.to_array().astype(np.float64)
    return np.asarray(np.rint(left @ right.T), dtype=np.float64)


def rank_one_supports(supports: SupportPair) -> List[RankOneSupport]:
    """S_k = supp(I[:, k]) x supp(J[:, k]) for every column k."""
    return [
        RankOneSupport(
            row_set=supports.left.column(k), col_set=supports.right.column(k)
        )
        for k in range(supports.r)
    ]


def partition_classes(supports: SupportPair) -> ClassPartition:
    """
    Group columns whose rank-one supports coincide.

    Columns with an empty rank-one support share one class with an empty
    representative; that class is flagged CEC.

    Args:
        supports: Support pair (I, J)

    Returns:
        ClassPartition with classes ordered by their smallest member
    """
    groups: Dict[Tuple[FrozenSet[int], FrozenSet[int]], List[int]] = {}
    empty: List[int] = []
    for k, support in enumerate(rank_one_supports(supports)):
        if support.is_empty:
            empty.append(k)
        else:
            groups.setdefault((support.row_set, support.col_set), []).append(k)

    classes = [
        EquivalenceClass(
            members=tuple(members),
            representative=RankOneSupport(row_set=rows, col_set=cols),
            is_cec=len(members) >= min(len(rows), len(cols)),
        )
        for (rows, cols), members in groups.items()
    ]
    if empty:
        classes.append(
            EquivalenceClass(
                members=tuple(empty), representative=RankOneSupport(), is_cec=True
            )
        )
    classes.sort(key=lambda c: c.members[0])
    return ClassPartition(rows=supports.m, cols=supports.n, classes=tuple(classes))


def outside_support(
    supports: SupportPair, cec_mask: BoolArray, column: int
) -> OutsideSupport:
    """Compute S'_k for one column and test it for rectangularity."""
    rows = sorted(supports.left.column(column))
    cols = sorted(supports.right.column(column))
    if not rows or not cols:
        return OutsideSupport(column=column, rectangular=True)
    block = ~cec_mask[np.ix_(rows, cols)]
    row_any = block.any(axis=1)
    col_any = block.any(axis=0)
    cells = frozenset(
        (rows[a], cols[b]) for a, b in zip(*np.nonzero(block))
    )
    if not np.array_equal(block, np.outer(row_any, col_any)):
        return OutsideSupport(column=column, cells=cells, rectangular=False)
    return OutsideSupport(
        column=column,
        cells=cells,
        rectangular=True,
        row_set=frozenset(rows[a] for a in np.flatnonzero(row_any)),
        col_set=frozenset(cols[b] for b in np.flatnonzero(col_any)),
    )


def taxonomy_split(supports: SupportPair, partition: ClassPartition) -> Taxonomy:
    """
    Split I and J according to the CECs.

    Raises:
        NonRectangularOutsideSupport: if some S'_k is not a rectangle
    """
    left = supports.left.to_array()
    right = supports.right.to_array()
    cec_mask = partition.cec_mask()
    cec_cols = sorted(partition.cec_columns)

    i_t = np.zeros_like(left)
    j_t = np.zeros_like(right)
    i_t[:, cec_cols] = left[:, cec_cols]
    j_t[:, cec_cols] = right[:, cec_cols]

    i_bar1 = np.zeros_like(left)
    j_bar1 = np.zeros_like(right)
    outside: Dict[int, OutsideSupport] = {}
    for k in sorted(partition.non_cec_columns):
        s_prime = outside_support(supports, cec_mask, k)
        if not s_prime.rectangular:
            raise NonRectangularOutsideSupport(k, s_prime.cells)
        outside[k] = s_prime
        i_bar1[sorted(s_prime.row_set), k] = True
        j_bar1[sorted(s_prime.col_set), k] = True

    return Taxonomy(
        i_t=SupportMask.from_array(i_t),
        i_bar1=SupportMask.from_array(i_bar1),
        i_bar2=SupportMask.from_array(left & ~i_t & ~i_bar1),
        j_t=SupportMask.from_array(j_t),
        j_bar1=SupportMask.from_array(j_bar1),
        j_bar2=SupportMask.from_array(right & ~j_t & ~j_bar1),
        outside_supports=outside,
        partition=partition,
    )


def find_spurious_witness(supports: SupportPair) -> Optional[SpuriousWitness]:
    """
    Scan for (i1, j1, i2, j2, k) such that (i1, j1), (i2, j1) and (i1, j2)
    belong only to S_k while (i2, j2) belongs to S_k and another S_l.
    """
    mult = multiplicity(supports)
    for k in range(supports.r):
        rows = sorted(supports.left.column(k))
        cols = sorted(supports.right.column(k))
        if len(rows) < 2 or len(cols) < 2:
            continue
        block = mult[np.ix_(rows, cols)]
        if not np.any(block >= 2):
            continue
        for a2, b2 in zip(*np.nonzero(block >= 2)):
            for a1 in range(len(rows)):
                if a1 == a2 or block[a1, b2] != 1:
                    continue
                for b1 in range(len(cols)):
                    if b1 == b2 or block[a1, b1] != 1 or block[a2, b1] != 1:
                        continue
                    i2, j2 = rows[a2], cols[b2]
                    other = next(
                        p
                        for p in range(supports.r)
                        if p != k
                        and i2 in supports.left.column(p)
                        and j2 in supports.right.column(p)
                    )
                    return SpuriousWitness(
                        i1=rows[a1], j1=cols[b1], i2=i2, j2=j2, k=k, other=other
                    )
    return None


def certify(supports: SupportPair) -> TractabilityCertificate:
    """
    Decide which tractability assumptions (I, J) satisfies.

    Checks pairwise-disjoint class representatives first, then rectangular
    and pairwise equal-or-disjoint supports outside the CECs. The spurious
    witness scan runs independently of the level.
    """
    partition = partition_classes(supports)
    witness = find_spurious_witness(supports)

    taxonomy: Optional[Taxonomy] = None
    non_rectangular: Tuple[int, ...] = ()
    try:
        taxonomy = taxonomy_split(supports, partition)
    except NonRectangularOutsideSupport:
        cec_mask = partition.cec_mask()
        non_rectangular = tuple(
            k
            for k in sorted(partition.non_cec_columns)
            if not outside_support(supports, cec_mask, k).rectangular
        )

    representatives = [c.representative for c in partition.classes]
    if rectangles_disjoint(representatives, supports.m, supports.n):
        level = CertificateLevel.DISJOINT_CLASSES
    elif taxonomy is not None and taxonomy.outside_equal_or_disjoint():
        level = CertificateLevel.REDUCIBLE_OUTSIDE_CEC
    else:
        level = CertificateLevel.UNKNOWN

    n_cec = sum(1 for c in partition.classes if c.is_cec)
    suffix = f", spurious witness {witness}" if witness is not None else ""
    logger.info(
        f"Certified {len(partition.classes)} classes ({n_cec} CEC): "
        f"{level.value}{suffix}"
    )
    return TractabilityCertificate(
        level=level,
        partition=partition,
        taxonomy=taxonomy,
        non_rectangular=non_rectangular,
        spurious_witness=witness,
    )


def numerical_rank(block: FloatArray, tolerance: float = RANK_TOLERANCE) -> int:
    """Count singular values above tolerance times the largest one."""
    if block.size == 0:
        return 0
    values = svdvals(block)
    if values[0] == 0:
        return 0
    return int(np.count_nonzero(values > tolerance * values[0]))


def is_cec_full_rank(
    instance: ProblemInstance, factors: FactorPair, partition: ClassPartition
) -> CecRankReport:
    """
    Check that every CEC has a full-row-rank factor block.

    For each CEC P, either X[R_P, P] has rank |R_P| or Y[C_P, P] has rank
    |C_P|. Classes with an empty representative pass trivially.
    """
    entries: List[CecClassRank] = []
    for cls in partition.classes:
        if not cls.is_cec or cls.representative.is_empty:
            continue
        members = list(cls.members)
        rank_x = numerical_rank(factors.X[np.ix_(cls.rows, members)])
        rank_y = numerical_rank(factors.Y[np.ix_(cls.cols, members)])
        entries.append(
            CecClassRank(
                members=cls.members,
                rows=tuple(cls.rows),
                cols=tuple(cls.cols),
                rank_x=rank_x,
                rank_y=rank_y,
                full_rank=rank_x == len(cls.rows) or rank_y == len(cls.cols),
            )
        )
    return CecRankReport(
        full_rank=all(e.full_rank for e in entries), classes=entries
    )
