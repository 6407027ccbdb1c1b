"""Plain-text matrix and support file formats (1-based indices on disk)."""

import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterator, List, Set, Tuple, Union

import numpy as np

from .errors import FileFormatError
from .models import FloatArray, SupportMask

PathLike = Union[str, "os.PathLike[str]"]


def atomic_write_text(path: PathLike, text: str) -> None:
    """Write text to a temporary sibling file, then rename it over path."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        dir=str(target.parent), prefix=f".{target.name}.", suffix=".tmp"
    )
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _content_lines(path: PathLike) -> Iterator[Tuple[int, List[str]]]:
    text = Path(path).read_text(encoding="utf-8")
    for number, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if tokens:
            yield number, tokens


def _header(
    path: PathLike, lines: Iterator[Tuple[int, List[str]]], names: Tuple[str, ...]
) -> List[int]:
    try:
        number, tokens = next(lines)
    except StopIteration:
        raise FileFormatError(str(path), 1, "file is empty") from None
    if len(tokens) != len(names):
        raise FileFormatError(
            str(path), number, f"header must be '{' '.join(names)}'"
        )
    try:
        values = [int(tok) for tok in tokens]
    except ValueError:
        raise FileFormatError(
            str(path), number, "header values must be integers"
        ) from None
    if any(v < 0 for v in values):
        raise FileFormatError(str(path), number, "header values must be >= 0")
    return values


def read_matrix(path: PathLike) -> FloatArray:
    """
    Parse a MatrixFile: header "m n", then m rows of n numbers.

    Raises:
        FileFormatError: with the 1-based line number of the problem
    """
    lines = _content_lines(path)
    m, n = _header(path, lines, ("m", "n"))
    matrix = np.zeros((m, n))
    last = 1
    for row in range(m):
        try:
            number, tokens = next(lines)
        except StopIteration:
            raise FileFormatError(
                str(path), last + 1, f"expected {m} rows, found {row}"
            ) from None
        last = number
        if len(tokens) != n:
            raise FileFormatError(
                str(path), number, f"expected {n} values, found {len(tokens)}"
            )
        try:
            values = [float(tok) for tok in tokens]
        except ValueError:
            raise FileFormatError(str(path), number, "invalid number") from None
        if not all(math.isfinite(v) for v in values):
            raise FileFormatError(str(path), number, "values must be finite")
        matrix[row] = values
    for number, _ in lines:
        raise FileFormatError(str(path), number, "unexpected trailing data")
    return matrix


def format_matrix(matrix: Any) -> str:
    a = np.asarray(matrix, dtype=np.float64)
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    lines.extend(" ".join(format(v, ".17g") for v in row) for row in a.tolist())
    return "\n".join(lines) + "\n"


def write_matrix(path: PathLike, matrix: Any) -> None:
    """Write a MatrixFile with 17 significant digits."""
    atomic_write_text(path, format_matrix(matrix))


def read_support(path: PathLike) -> SupportMask:
    """
    Parse a SupportFile: header "rows cols nnz", then nnz lines "i j".

    Raises:
        FileFormatError: on out-of-range or duplicate entries
    """
    lines = _content_lines(path)
    rows, cols, nnz = _header(path, lines, ("rows", "cols", "nnz"))
    seen: Set[Tuple[int, int]] = set()
    for number, tokens in lines:
        if len(seen) == nnz:
            raise FileFormatError(str(path), number, f"more than {nnz} entries")
        if len(tokens) != 2:
            raise FileFormatError(str(path), number, "expected 'i j'")
        try:
            i, j = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise FileFormatError(
                str(path), number, "indices must be integers"
            ) from None
        if not (1 <= i <= rows and 1 <= j <= cols):
            raise FileFormatError(
                str(path), number, f"({i}, {j}) outside {rows}x{cols}"
            )
        if (i - 1, j - 1) in seen:
            raise FileFormatError(str(path), number, f"duplicate entry ({i}, {j})")
        seen.add((i - 1, j - 1))
    if len(seen) != nnz:
        raise FileFormatError(
            str(path), 1, f"header announces {nnz} entries, found {len(seen)}"
        )
    return SupportMask(rows=rows, cols=cols, members=seen)


def format_support(mask: SupportMask) -> str:
    lines = [f"{mask.rows} {mask.cols} {mask.nnz}"]
    lines.extend(f"{i + 1} {j + 1}" for i, j in mask.members)
    return "\n".join(lines) + "\n"


def write_support(path: PathLike, mask: SupportMask) -> None:
    """Write a SupportFile in sorted 1-based coordinates."""
    atomic_write_text(path, format_support(mask))
