"""Exception hierarchy for the FSMF toolkit."""

from typing import FrozenSet, Optional, Tuple


class FsmfError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(FsmfError, ValueError):
    """Raised when matrices, masks or factors have incoherent shapes."""


class NonRectangularOutsideSupport(FsmfError):
    """Raised when S_k minus the CEC union is not a Cartesian product."""

    def __init__(self, column: int, cells: FrozenSet[Tuple[int, int]]) -> None:
        self.column = column
        self.cells = cells
        super().__init__(
            f"Support of column {column + 1} outside the complete classes "
            f"is not rectangular ({len(cells)} cells)"
        )


class PreconditionViolation(FsmfError, ValueError):
    """Raised when an exact routine is called outside its domain."""


class CertificateMismatch(FsmfError):
    """Raised when the supports do not satisfy the tractability assumptions."""

    def __init__(self, level: str, message: Optional[str] = None) -> None:
        self.level = level
        super().__init__(
            message
            or f"Supports are certified '{level}'; the direct solver needs "
            "DisjointClasses or ReducibleOutsideCEC (use best-effort mode to force)"
        )


class InvalidWitness(FsmfError, ValueError):
    """Raised when a spurious-object witness does not fit the supports."""


class FileFormatError(FsmfError, ValueError):
    """Raised on malformed matrix or support files."""

    def __init__(self, path: str, line: int, message: str) -> None:
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")
