"""Common utilities for the FSMF toolkit: parsing, JSON reports and tables."""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .analysis import TractabilityCertificate
from .models import DEFAULT_LEARNING_RATE_GRID, Method, SolveReport


def finite_or_string(value: Optional[float]) -> Union[float, str, None]:
    """
    Make a float JSON-safe.

    Args:
        value: Any float or None

    Returns:
        The float itself when finite, otherwise "inf", "-inf" or "nan"
    """
    if value is None:
        return None
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def report_to_json(report: SolveReport) -> Dict[str, Any]:
    """
    Convert a SolveReport into the ReportJson layout.

    Traces are included only when the solver produced them.
    """
    data: Dict[str, Any] = {
        "method": report.method_tag,
        "certificate": report.certificate,
        "final_loss": finite_or_string(report.final_loss),
        "log10_frobenius_error": finite_or_string(report.log10_frobenius_error),
        "wall_time_s": finite_or_string(report.wall_time),
        "iterations": report.iterations,
        "learning_rate": finite_or_string(report.learning_rate),
        "seed": report.seed,
        "converged": report.converged,
        "diverged": report.diverged,
    }
    if report.loss_trace:
        data["loss_trace"] = [
            [step, finite_or_string(value)] for step, value in report.loss_trace
        ]
    if report.support_change_trace is not None:
        data["support_change_trace"] = [
            list(entry) for entry in report.support_change_trace
        ]
    return data


def certificate_to_json(cert: TractabilityCertificate) -> Dict[str, Any]:
    """Certificate as 1-based indices, one entry per equivalence class."""
    witness = cert.spurious_witness
    return {
        "level": cert.level.value,
        "summary": cert.summary(),
        "tractable": cert.is_tractable,
        "spurious_condition_met": cert.spurious_condition_met,
        "spurious_witness": list(witness.one_based()) if witness else None,
        "non_rectangular_columns": [k + 1 for k in cert.non_rectangular],
        "classes": [
            {
                "members": [k + 1 for k in cls.members],
                "rows": [i + 1 for i in cls.rows],
                "cols": [j + 1 for j in cls.cols],
                "cec": cls.is_cec,
            }
            for cls in cert.partition.classes
        ],
    }


def parse_rate_grid(text: str) -> Tuple[float, ...]:
    """
    Parse a learning-rate grid option.

    Args:
        text: "default" or a comma separated list such as "1e-3,5e-3"

    Returns:
        Tuple of positive rates in the given order

    Raises:
        ValueError: on empty, malformed or non-positive entries
    """
    if text.strip().lower() == "default":
        return DEFAULT_LEARNING_RATE_GRID
    parts = [part.strip() for part in text.split(",") if part.strip()]
    if not parts:
        raise ValueError("learning-rate grid is empty")
    try:
        rates = tuple(float(part) for part in parts)
    except ValueError:
        raise ValueError(f"invalid learning-rate grid '{text}'") from None
    if any(not math.isfinite(rate) or rate <= 0 for rate in rates):
        raise ValueError("learning rates must be positive and finite")
    return rates


def parse_method_list(text: str) -> List[Method]:
    """Parse "direct,gd,adam" (or "all") into methods, keeping order."""
    if text.strip().lower() == "all":
        return list(Method)
    methods: List[Method] = []
    for part in text.split(","):
        name = part.strip().lower()
        if not name:
            continue
        try:
            method = Method(name)
        except ValueError:
            choices = ", ".join(m.value for m in Method)
            raise ValueError(
                f"unknown method '{name}' (choose from {choices})"
            ) from None
        if method not in methods:
            methods.append(method)
    if not methods:
        raise ValueError("no methods given")
    return methods


def parse_sparsity_pair(text: str) -> Tuple[int, int]:
    """Parse "K_LEFT,K_RIGHT" into the PALM hard-thresholding levels."""
    parts = [part.strip() for part in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected K_LEFT,K_RIGHT, got '{text}'")
    try:
        k_left, k_right = int(parts[0]), int(parts[1])
    except ValueError:
        raise ValueError(f"invalid sparsity levels '{text}'") from None
    if k_left < 0 or k_right < 0:
        raise ValueError("sparsity levels must be nonnegative")
    return k_left, k_right


def sigma_grid(start: float, stop: float, step: float) -> List[float]:
    """Evenly spaced grid from start to stop inclusive."""
    if step <= 0:
        raise ValueError("step must be positive")
    if stop < start:
        raise ValueError("stop must not be smaller than start")
    count = int(round((stop - start) / step)) + 1
    return [float(s) for s in np.linspace(start, stop, count)]


def format_table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """
    Render a left-aligned plain-text table.

    Args:
        headers: Column titles
        rows: Cells, converted with str()

    Returns:
        Table text without trailing newline
    """
    cells = [[str(cell) for cell in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        for idx, cell in enumerate(row):
            widths[idx] = max(widths[idx], len(cell))

    def line(values: Sequence[str]) -> str:
        return "  ".join(v.ljust(w) for v, w in zip(values, widths)).rstrip()

    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(row) for row in cells)
    return "\n".join(out)


def format_json_output(data: Any, indent: int = 2) -> str:
    """
    Format data as JSON with proper indentation.

    Args:
        data: Data to serialize
        indent: Number of spaces for indentation

    Returns:
        Formatted JSON string
    """

    def json_serializer(obj: Any) -> Any:
        """JSON serializer for numpy values and paths."""
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.generic):
            if obj.dtype.kind == "f":
                return finite_or_string(float(obj))
            return obj.item()
        if isinstance(obj, Path):
            return str(obj)
        raise TypeError(f"Object of type {type(obj)} is not JSON serializable")

    return json.dumps(
        data,
        indent=indent,
        default=json_serializer,
        ensure_ascii=False,
        allow_nan=False,
    )
