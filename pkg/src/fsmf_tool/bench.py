"""Benchmark of the direct solver against tuned first-order methods."""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from .fileio import atomic_write_text
from .generators import gen_hadamard, gen_kron1, gen_kron2
from .models import (
    DEFAULT_LEARNING_RATE_GRID,
    IterativeConfig,
    Method,
    ProblemInstance,
    SolveReport,
    SupportPair,
)
from .solvers.direct import DirectSolver
from .solvers.iterative import grid_search, run
from .utils import format_json_output, format_table, report_to_json

logger = logging.getLogger(__name__)

FAMILIES: Dict[str, Callable[[int], SupportPair]] = {
    "kron1": gen_kron1,
    "kron2": gen_kron2,
}

TUNING_NOTE = "Hyperparameter-tuning time is excluded from iterative wall times."


class BenchmarkCell(BaseModel):
    """One (size, method) result of the benchmark."""

    family: str
    level: int = Field(..., ge=1, description="N, the matrix is 2^N x 2^N")
    method: Method
    report: SolveReport
    best_rate: Optional[float] = Field(None, description="Winning grid rate")
    path: Optional[str] = Field(None, description="ReportJson written for the cell")

    @property
    def converged(self) -> bool:
        return self.report.converged


class BenchmarkSummary(BaseModel):
    """All cells of a benchmark, in (level, method) order."""

    family: str
    levels: List[int]
    methods: List[Method]
    cells: List[BenchmarkCell] = Field(default_factory=list)

    def cell(self, level: int, method: Method) -> BenchmarkCell:
        for cell in self.cells:
            if cell.level == level and cell.method is method:
                return cell
        raise KeyError((level, method))

    def not_converged(self) -> List[BenchmarkCell]:
        return [cell for cell in self.cells if not cell.converged]

    def direct_fastest(self) -> Dict[int, bool]:
        """
        Per level, whether the direct solver beat every converged iterative run.

        Levels without a direct cell are left out.
        """
        verdict: Dict[int, bool] = {}
        for level in self.levels:
            row = [cell for cell in self.cells if cell.level == level]
            direct = [cell for cell in row if cell.method is Method.DIRECT]
            if not direct:
                continue
            others = [
                cell.report.wall_time
                for cell in row
                if cell.method is not Method.DIRECT and cell.converged
            ]
            verdict[level] = all(
                direct[0].report.wall_time < other for other in others
            )
        return verdict

    def table(self) -> str:
        """Per-method time to threshold and error, with not-converged cells flagged."""
        rows = []
        for cell in self.cells:
            rows.append(
                [
                    cell.level,
                    cell.method.value,
                    f"{cell.report.wall_time:.4g}",
                    f"{cell.report.log10_frobenius_error:.2f}",
                    cell.report.iterations,
                    "-" if cell.best_rate is None else f"{cell.best_rate:g}",
                    "yes" if cell.converged else "NOT CONVERGED",
                ]
            )
        table = format_table(
            ["N", "method", "wall_time_s", "log10_err", "iters", "lr", "converged"],
            rows,
        )
        return f"{table}\n{TUNING_NOTE}"

    def to_json(self) -> Dict[str, object]:
        return {
            "family": self.family,
            "levels": self.levels,
            "methods": [m.value for m in self.methods],
            "note": TUNING_NOTE,
            "cells": [
                {
                    "N": cell.level,
                    "method": cell.method.value,
                    "best_rate": cell.best_rate,
                    "file": cell.path,
                    "report": report_to_json(cell.report),
                }
                for cell in self.cells
            ],
        }


def hadamard_instance(family: str, level: int) -> ProblemInstance:
    """Hadamard target of size 2^N on the family's butterfly supports."""
    if family not in FAMILIES:
        raise ValueError(f"Unknown family '{family}'; expected one of {list(FAMILIES)}")
    return ProblemInstance(target=gen_hadamard(level), supports=FAMILIES[family](level))


def _run_cell(
    family: str,
    level: int,
    method: Method,
    seed: int,
    max_iters: int,
    grid: Sequence[float],
    out_dir: Optional[Path],
) -> BenchmarkCell:
    instance = hadamard_instance(family, level)
    best_rate: Optional[float] = None
    if method is Method.DIRECT:
        _, report = DirectSolver().solve(instance)
    else:
        config = IterativeConfig(
            method=method,
            grid=None if method is Method.PALM else tuple(grid),
            max_iters=max_iters,
            seed=seed,
            trace_every=max(1, max_iters // 1000),
        )
        if method is Method.PALM:
            _, report = run(instance, config)
        else:
            result = grid_search(instance, config, jobs=1)
            report = result.best_report
            best_rate = result.best_rate

    path: Optional[str] = None
    if out_dir is not None:
        target = out_dir / f"N{level}_{method.value}.json"
        atomic_write_text(target, format_json_output(report_to_json(report)) + "\n")
        path = str(target)
    flag = "" if report.converged else " (not converged)"
    logger.info(
        f"N={level} {method.value}: {report.wall_time:.4g}s, "
        f"log10 error {report.log10_frobenius_error:.2f}{flag}"
    )
    return BenchmarkCell(
        family=family,
        level=level,
        method=method,
        report=report,
        best_rate=best_rate,
        path=path,
    )


def run_benchmark(
    family: str,
    n_min: int,
    n_max: int,
    methods: Sequence[Method],
    out_dir: Optional[Path] = None,
    jobs: Optional[int] = None,
    seed: int = 0,
    max_iters: int = 10_000,
    grid: Sequence[float] = DEFAULT_LEARNING_RATE_GRID,
) -> BenchmarkSummary:
    """
    Factor Hadamard matrices of sizes 2^n_min .. 2^n_max with every method.

    Iterative methods are tuned over grid and represented by their best
    rate; the tuning runs themselves are not timed. Cells are independent
    and run on up to jobs threads; with out_dir set, each cell writes its
    report atomically and summary.json is written last.

    Args:
        family: "kron1" or "kron2"
        n_min: Smallest N
        n_max: Largest N
        methods: Methods to compare
        out_dir: Directory receiving N{N}_{method}.json and summary.json
        jobs: Worker threads, defaults to the CPU count
        seed: Initialization seed shared by every iterative run
        max_iters: Iteration budget per run
        grid: Learning rates tried for GD, momentum and ADAM

    Returns:
        BenchmarkSummary with cells in (N, method) order
    """
    if family not in FAMILIES:
        raise ValueError(f"Unknown family '{family}'; expected one of {list(FAMILIES)}")
    if n_min < 1 or n_max < n_min:
        raise ValueError(f"Invalid size range N={n_min}..{n_max}")
    if not methods:
        raise ValueError("no methods given")

    levels = list(range(n_min, n_max + 1))
    order: List[Tuple[int, Method]] = [(n, m) for n in levels for m in methods]
    target_dir = Path(out_dir) if out_dir is not None else None
    if target_dir is not None:
        target_dir.mkdir(parents=True, exist_ok=True)

    workers = max(1, min(len(order), jobs or os.cpu_count() or 1))
    logger.info(
        f"Benchmark {family}, N={n_min}..{n_max}, "
        f"{len(methods)} methods on {workers} workers"
    )
    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(
                _run_cell, family, n, m, seed, max_iters, tuple(grid), target_dir
            )
            for n, m in order
        ]
        cells = [future.result() for future in futures]
    logger.info(f"Benchmark finished in {time.perf_counter() - start:.2f}s")

    summary = BenchmarkSummary(
        family=family, levels=levels, methods=list(methods), cells=cells
    )
    if target_dir is not None:
        atomic_write_text(
            target_dir / "summary.json", format_json_output(summary.to_json()) + "\n"
        )
    return summary
