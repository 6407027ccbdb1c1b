"""CLI interface for the FSMF toolkit."""

import csv
import io
import logging
import sys
import traceback
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Tuple

import click
import numpy as np
from pydantic import ValidationError

from . import __version__
from .analysis import certify
from .bench import run_benchmark
from .errors import CertificateMismatch, FsmfError
from .fileio import (
    atomic_write_text,
    read_matrix,
    read_support,
    write_matrix,
    write_support,
)
from .generators import (
    gen_full,
    gen_hadamard,
    gen_hodlr,
    gen_kron1,
    gen_kron2,
    gen_lu,
    random_hodlr_matrix,
)
from .landscape import (
    DEFAULT_SAMPLE_COUNT,
    VALLEY_SIGMA,
    barrier_report,
    build_spurious_minimum_instance,
    build_spurious_valley_instance,
    check_path,
    g_sigma,
    probe_local_minimality,
    sigma_coordinate,
    sigma_slice_path,
    smart_init_path,
    valley_curves,
)
from .models import (
    FactorPair,
    IterativeConfig,
    Method,
    ProblemInstance,
    SolveReport,
    SupportPair,
)
from .objective import loss, masked_gradient
from .reductions import mcp_to_fsmf
from .solvers import DirectSolver, IterativeSolver
from .solvers.iterative import init_factors
from .utils import (
    certificate_to_json,
    format_json_output,
    format_table,
    parse_method_list,
    parse_rate_grid,
    parse_sparsity_pair,
    report_to_json,
    sigma_grid,
)

EXIT_FAILURE = 1
EXIT_CERTIFICATE = 2
EXIT_DIVERGED = 3

INPUT_ERRORS = (OSError, FsmfError, ValidationError, ValueError)


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _abort(error: BaseException, verbose: bool, code: int = EXIT_FAILURE) -> NoReturn:
    click.echo(f"Error: {error}", err=True)
    if verbose:
        click.echo(traceback.format_exc(), err=True)
    sys.exit(code)


def _emit(text: str, output: Optional[str], what: str) -> None:
    """Print text, or save it atomically when an output path is given."""
    if output:
        atomic_write_text(output, text if text.endswith("\n") else text + "\n")
        click.echo(f"Saved {what} to {output}", err=True)
    else:
        click.echo(text)


def _load_supports(left: str, right: str) -> SupportPair:
    return SupportPair(left=read_support(left), right=read_support(right))


def _index_set(values: List[int]) -> str:
    return "{" + ",".join(str(v + 1) for v in values) + "}"


@click.group()
@click.version_option(version=__version__, prog_name="fsmf-tool")
def cli() -> None:
    """FSMF Tool - Fixed-support matrix factorization solvers and experiments."""
    pass


@cli.command()
@click.option(
    "--left", "-l", type=click.Path(dir_okay=False), required=True, help="Support I"
)
@click.option(
    "--right", "-r", type=click.Path(dir_okay=False), required=True, help="Support J"
)
@click.option(
    "--output", "-o", type=click.Path(), help="Save the certificate JSON to a file"
)
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose output")
def analyze(left: str, right: str, output: Optional[str], verbose: bool) -> None:
    """
    Certify a support pair (I, J).

    Prints the equivalence classes, the certificate level and, when the
    supports admit spurious objects, the witness indices (1-based).

    Examples:
    \b
    fsmf-tool analyze --left I.txt --right J.txt
    fsmf-tool analyze -l I.txt -r J.txt --output certificate.json
    """
    _configure_logging(verbose)
    try:
        supports = _load_supports(left, right)
    except INPUT_ERRORS as e:
        _abort(e, verbose)

    cert = certify(supports)
    rows = [
        [
            idx + 1,
            _index_set(list(cls.members)),
            _index_set(cls.rows),
            _index_set(cls.cols),
            "yes" if cls.is_cec else "no",
        ]
        for idx, cls in enumerate(cert.partition.classes)
    ]
    click.echo(format_table(["class", "members", "R_P", "C_P", "CEC"], rows))
    click.echo(cert.summary())
    _emit(format_json_output(certificate_to_json(cert)), output, "certificate")


def _solve_instance(
    instance: ProblemInstance,
    method: str,
    seed: int,
    max_iters: int,
    lr: Optional[float],
    grid: Optional[str],
    stop_log10: float,
    best_effort: bool,
    jobs: Optional[int],
    palm_sparsity: Optional[str] = None,
) -> Tuple[FactorPair, SolveReport]:
    if method == Method.DIRECT.value:
        return DirectSolver(best_effort=best_effort).solve(instance)
    config = IterativeConfig(
        method=Method(method),
        learning_rate=lr if lr is not None else IterativeConfig().learning_rate,
        grid=parse_rate_grid(grid) if grid is not None else None,
        max_iters=max_iters,
        stop_log10_loss=stop_log10,
        seed=seed,
        palm_sparsity=(
            parse_sparsity_pair(palm_sparsity) if palm_sparsity is not None else None
        ),
    )
    return IterativeSolver(config, jobs=jobs).solve(instance)


@cli.command()
@click.option(
    "--matrix", "-m", type=click.Path(dir_okay=False), required=True, help="Target A"
)
@click.option(
    "--left", "-l", type=click.Path(dir_okay=False), required=True, help="Support I"
)
@click.option(
    "--right", "-r", type=click.Path(dir_okay=False), required=True, help="Support J"
)
@click.option(
    "--method",
    type=click.Choice([m.value for m in Method], case_sensitive=False),
    default=Method.DIRECT.value,
    help="Solver (default: direct)",
)
@click.option("--seed", type=int, default=0, help="Initialization seed (default: 0)")
@click.option(
    "--max-iters",
    type=click.IntRange(min=1),
    default=10_000,
    help="Iteration budget of iterative methods (default: 10000)",
)
@click.option("--lr", type=click.FloatRange(min=0, min_open=True), help="Step size")
@click.option(
    "--grid",
    type=str,
    help="Tune the step size over 'default' or a list such as '1e-3,1e-2'",
)
@click.option(
    "--stop-log10",
    type=float,
    default=-10.0,
    help="Stop once log10 ||A - XY^T||_F reaches this value (default: -10)",
)
@click.option(
    "--best-effort",
    is_flag=True,
    help="Let the direct solver run on uncertified supports",
)
@click.option(
    "--palm-sparsity",
    metavar="K_LEFT,K_RIGHT",
    help="PALM only: keep the K largest entries of each factor",
)
@click.option(
    "--jobs",
    "-j",
    type=click.IntRange(min=1),
    envvar="FSMF_JOBS",
    help="Worker threads for grid search [env: FSMF_JOBS]",
)
@click.option("--out", "-o", type=click.Path(), help="Save the report JSON to a file")
@click.option(
    "--save-factors",
    type=click.Path(file_okay=False),
    help="Directory receiving X.txt and Y.txt",
)
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose output")
def solve(
    matrix: str,
    left: str,
    right: str,
    method: str,
    seed: int,
    max_iters: int,
    lr: Optional[float],
    grid: Optional[str],
    stop_log10: float,
    best_effort: bool,
    palm_sparsity: Optional[str],
    jobs: Optional[int],
    out: Optional[str],
    save_factors: Optional[str],
    verbose: bool,
) -> None:
    """
    Factor a target matrix under fixed supports.

    Exit codes: 0 on success, 1 on I/O or parse errors, 2 when the direct
    solver refuses uncertified supports, 3 when an iterative run diverges.

    Examples:
    \b
    fsmf-tool solve -m A.txt -l I.txt -r J.txt --method direct
    fsmf-tool solve -m A.txt -l I.txt -r J.txt --method adam --grid default
    fsmf-tool solve -m A.txt -l I.txt -r J.txt --method palm --palm-sparsity 8,8
    """
    _configure_logging(verbose)
    method = method.lower()
    if lr is not None and grid is not None:
        click.echo("Error: --lr and --grid are mutually exclusive", err=True)
        sys.exit(EXIT_FAILURE)
    if method == Method.DIRECT.value and (lr is not None or grid is not None):
        click.echo("Warning: --lr/--grid are ignored by the direct solver", err=True)
    if method == Method.DIRECT.value and palm_sparsity is not None:
        click.echo("Warning: --palm-sparsity is ignored by the direct solver", err=True)

    try:
        instance = ProblemInstance(
            target=read_matrix(matrix), supports=_load_supports(left, right)
        )
    except INPUT_ERRORS as e:
        _abort(e, verbose)

    if verbose:
        m, n = instance.shape
        click.echo(
            f"Solving a {m}x{n} instance with r={instance.supports.r} using {method}",
            err=True,
        )

    try:
        factors, report = _solve_instance(
            instance,
            method,
            seed,
            max_iters,
            lr,
            grid,
            stop_log10,
            best_effort,
            jobs,
            palm_sparsity,
        )
    except CertificateMismatch as e:
        _abort(e, verbose, EXIT_CERTIFICATE)
    except KeyboardInterrupt:
        click.echo("\nOperation cancelled by user", err=True)
        sys.exit(EXIT_FAILURE)
    except Exception as e:
        _abort(e, verbose)

    try:
        _emit(format_json_output(report_to_json(report)), out, "report")
        if save_factors:
            directory = Path(save_factors)
            write_matrix(directory / "X.txt", factors.X)
            write_matrix(directory / "Y.txt", factors.Y)
    except OSError as e:
        _abort(e, verbose)

    if report.diverged:
        click.echo(
            f"Error: {report.method_tag} diverged after {report.iterations} iterations",
            err=True,
        )
        sys.exit(EXIT_DIVERGED)


def _require(value: Optional[int], name: str, family: str) -> int:
    if value is None:
        raise click.UsageError(f"--{name} is required for family '{family}'")
    return value


def _generate(
    family: str,
    level: Optional[int],
    m: Optional[int],
    n: Optional[int],
    r: Optional[int],
    weights: Optional[str],
    matrix: Optional[str],
    seed: int,
    random_target: bool,
    out_dir: Path,
) -> List[Path]:
    written: List[Path] = []

    def supports_out(pair: SupportPair) -> None:
        write_support(out_dir / "left.txt", pair.left)
        write_support(out_dir / "right.txt", pair.right)
        written.extend([out_dir / "left.txt", out_dir / "right.txt"])

    def matrix_out(values: Any, name: str = "matrix.txt") -> None:
        write_matrix(out_dir / name, values)
        written.append(out_dir / name)

    if family == "full":
        supports_out(
            gen_full(
                _require(m, "m", family),
                _require(n, "n", family),
                _require(r, "r", family),
            )
        )
    elif family == "lu":
        supports_out(gen_lu(_require(n, "n", family)))
    elif family in ("kron1", "kron2", "hodlr"):
        builders = {"kron1": gen_kron1, "kron2": gen_kron2, "hodlr": gen_hodlr}
        size = _require(level, "level", family)
        supports_out(builders[family](size))
        if family == "hodlr" and random_target:
            matrix_out(random_hodlr_matrix(size, seed))
    elif family == "hadamard":
        matrix_out(gen_hadamard(_require(level, "level", family)))
    elif family == "mcp":
        if weights is None:
            raise click.UsageError("--weights is required for family 'mcp'")
        reduction = mcp_to_fsmf(read_matrix(weights))
        supports_out(reduction.supports)
        if matrix is not None:
            matrix_out(reduction.oriented(read_matrix(matrix)))
        info = out_dir / "reduction.json"
        atomic_write_text(
            info, format_json_output({"transposed": reduction.transposed}) + "\n"
        )
        written.append(info)
    return written


@cli.command()
@click.option(
    "--family",
    "-f",
    type=click.Choice(
        ["full", "lu", "kron1", "kron2", "hodlr", "hadamard", "mcp"],
        case_sensitive=False,
    ),
    required=True,
    help="Support family or target matrix to generate",
)
@click.option(
    "--level",
    "-N",
    type=click.IntRange(min=0),
    help="Size exponent N (kron1, kron2, hodlr, hadamard)",
)
@click.option("--m", "m", type=click.IntRange(min=1), help="Rows (full)")
@click.option(
    "--n", "n", type=click.IntRange(min=1), help="Columns (full) or size (lu)"
)
@click.option("--r", "r", type=click.IntRange(min=1), help="Inner dimension (full)")
@click.option(
    "--weights",
    type=click.Path(dir_okay=False),
    help="Binary weight matrix W as a MatrixFile (mcp)",
)
@click.option(
    "--matrix",
    type=click.Path(dir_okay=False),
    help="Target matrix to orient alongside the reduction (mcp)",
)
@click.option("--seed", type=int, default=0, help="Seed of random targets (default: 0)")
@click.option(
    "--random-target",
    is_flag=True,
    help="Also write a random HODLR matrix (hodlr)",
)
@click.option(
    "--out-dir",
    "-o",
    type=click.Path(file_okay=False),
    required=True,
    help="Directory receiving the generated files",
)
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose output")
def gen(
    family: str,
    level: Optional[int],
    m: Optional[int],
    n: Optional[int],
    r: Optional[int],
    weights: Optional[str],
    matrix: Optional[str],
    seed: int,
    random_target: bool,
    out_dir: str,
    verbose: bool,
) -> None:
    """
    Generate support files and target matrices.

    Examples:
    \b
    fsmf-tool gen --family kron1 --level 3 --out-dir data/
    fsmf-tool gen --family hodlr --level 2 --random-target --seed 7 -o data/
    fsmf-tool gen --family mcp --weights W.txt -o data/
    """
    _configure_logging(verbose)
    family = family.lower()
    try:
        written = _generate(
            family,
            level,
            m,
            n,
            r,
            weights,
            matrix,
            seed,
            random_target,
            Path(out_dir),
        )
    except click.UsageError as e:
        click.echo(f"Error: {e.message}", err=True)
        sys.exit(EXIT_FAILURE)
    except INPUT_ERRORS as e:
        _abort(e, verbose)
    for path in written:
        click.echo(str(path))


@cli.command()
@click.option(
    "--family",
    "-f",
    type=click.Choice(["kron1", "kron2"], case_sensitive=False),
    default="kron1",
    help="Butterfly support family (default: kron1)",
)
@click.option("--n-min", type=click.IntRange(min=1), default=3, help="Smallest N")
@click.option("--n-max", type=click.IntRange(min=1), default=6, help="Largest N")
@click.option(
    "--methods",
    type=str,
    default="direct,gd,momentum,adam",
    help="Comma separated methods or 'all' (default: direct,gd,momentum,adam)",
)
@click.option(
    "--out", "-o", type=click.Path(file_okay=False), help="Directory for reports"
)
@click.option(
    "--jobs",
    "-j",
    type=click.IntRange(min=1),
    envvar="FSMF_JOBS",
    help="Concurrent benchmark cells [env: FSMF_JOBS]",
)
@click.option("--seed", type=int, default=0, help="Initialization seed (default: 0)")
@click.option(
    "--max-iters",
    type=click.IntRange(min=1),
    default=10_000,
    help="Iteration budget per run (default: 10000)",
)
@click.option(
    "--grid",
    type=str,
    default="default",
    help="Learning-rate grid, 'default' or a comma separated list",
)
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose output")
def bench(
    family: str,
    n_min: int,
    n_max: int,
    methods: str,
    out: Optional[str],
    jobs: Optional[int],
    seed: int,
    max_iters: int,
    grid: str,
    verbose: bool,
) -> None:
    """
    Time the direct solver against tuned first-order methods.

    Hadamard matrices of size 2^N are factored on butterfly supports for
    every N in [n-min, n-max]. Only the best learning rate of each method
    is reported; tuning time is excluded.

    Examples:
    \b
    fsmf-tool bench --family kron1 --n-min 3 --n-max 6 --out results/
    FSMF_JOBS=4 fsmf-tool bench --methods all --max-iters 5000
    """
    _configure_logging(verbose)
    try:
        method_list = parse_method_list(methods)
        rates = parse_rate_grid(grid)
        if n_max < n_min:
            raise ValueError("--n-max must not be smaller than --n-min")
    except ValueError as e:
        _abort(e, verbose)

    try:
        summary = run_benchmark(
            family.lower(),
            n_min,
            n_max,
            method_list,
            out_dir=Path(out) if out else None,
            jobs=jobs,
            seed=seed,
            max_iters=max_iters,
            grid=rates,
        )
    except KeyboardInterrupt:
        click.echo("\nOperation cancelled by user", err=True)
        sys.exit(EXIT_FAILURE)
    except Exception as e:
        _abort(e, verbose)

    click.echo(summary.table())
    failed = summary.not_converged()
    if failed:
        click.echo(
            f"{len(failed)} cell(s) did not reach the threshold within "
            f"{max_iters} iterations",
            err=True,
        )
    if out:
        click.echo(f"Reports saved to {out}", err=True)


def _probe_gsigma(sigma_min: float, sigma_max: float, step: float) -> str:
    curves = valley_curves(sigma_grid(sigma_min, sigma_max, step))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["sigma", "g1", "g2", "g3"])
    for row in zip(curves["sigma"], curves["g1"], curves["g2"], curves["g3"]):
        writer.writerow([format(value, ".17g") for value in row])
    return buffer.getvalue()


def _write_instance(out_dir: Path, instance: ProblemInstance, **points: Any) -> None:
    write_matrix(out_dir / "matrix.txt", instance.target)
    write_support(out_dir / "left.txt", instance.supports.left)
    write_support(out_dir / "right.txt", instance.supports.right)
    for name, factors in points.items():
        write_matrix(out_dir / f"{name}_X.txt", factors.X)
        write_matrix(out_dir / f"{name}_Y.txt", factors.Y)


def _probe_valley(
    supports: Optional[SupportPair], sample_count: int, out_dir: Optional[Path]
) -> Dict[str, Any]:
    construction = build_spurious_valley_instance(supports or gen_lu(2))
    instance, witness = construction.instance, construction.witness
    report = barrier_report(
        sigma_slice_path(construction, sample_count=sample_count), construction
    )
    if out_dir is not None:
        _write_instance(
            out_dir,
            instance,
            in_valley=construction.in_valley,
            optimum=construction.global_opt,
        )
    return {
        "witness": list(witness.one_based()),
        "in_valley": {
            "sigma": sigma_coordinate(construction.in_valley, witness),
            "loss": loss(instance, construction.in_valley),
            "g_sigma": g_sigma(VALLEY_SIGMA),
        },
        "optimum": {
            "sigma": sigma_coordinate(construction.global_opt, witness),
            "loss": loss(instance, construction.global_opt),
        },
        "barrier": {
            "g_at_1": g_sigma(1.0),
            "crossed": report.crossed,
            "min_crossing_loss": report.min_crossing_loss,
            "min_slice_gap": report.min_slice_gap,
        },
    }


def _probe_minimum(
    a: float, b: float, radius: float, samples: int, seed: int, out_dir: Optional[Path]
) -> Dict[str, Any]:
    construction = build_spurious_minimum_instance(a, b)
    instance, point = construction.instance, construction.spurious_min
    grad_x, grad_y = masked_gradient(instance, point)
    if out_dir is not None:
        _write_instance(
            out_dir, instance, spurious=point, optimum=construction.global_opt
        )
    return {
        "a": a,
        "b": b,
        "witness": list(construction.witness.one_based()),
        "spurious_loss": loss(instance, point),
        "gradient_norm": float(
            np.sqrt(np.vdot(grad_x, grad_x) + np.vdot(grad_y, grad_y))
        ),
        "perturbation_radius": radius,
        "perturbation_samples": samples,
        "min_perturbed_loss": probe_local_minimality(
            instance, point, radius=radius, samples=samples, seed=seed
        ),
        "optimum_loss": loss(instance, construction.global_opt),
    }


def _probe_smartinit(
    supports: SupportPair, seed: int, sample_count: int
) -> Dict[str, Any]:
    rng = np.random.default_rng(seed)
    instance = ProblemInstance(
        target=rng.standard_normal((supports.m, supports.n)), supports=supports
    )
    opt, report = DirectSolver().solve(instance)
    start = init_factors(supports, seed)
    checks = {
        "start_X": check_path(
            smart_init_path(instance, opt, start_X=start.X, sample_count=sample_count),
            instance,
        ),
        "start_Y": check_path(
            smart_init_path(instance, opt, start_Y=start.Y, sample_count=sample_count),
            instance,
        ),
    }
    return {
        "certificate": report.certificate,
        "optimum_loss": report.final_loss,
        "paths": {
            name: {
                "feasible": check.feasible,
                "monotone": check.monotone,
                "max_violation": check.max_violation,
                "start_loss": check.losses[0],
                "end_loss": check.losses[-1],
            }
            for name, check in checks.items()
        },
    }


@cli.command()
@click.option(
    "--what",
    type=click.Choice(
        ["gsigma", "valley", "minimum", "smartinit"], case_sensitive=False
    ),
    required=True,
    help="Experiment to run",
)
@click.option("--sigma-min", type=float, default=-10.0, help="gsigma grid start")
@click.option("--sigma-max", type=float, default=10.0, help="gsigma grid end")
@click.option(
    "--step",
    type=click.FloatRange(min=0, min_open=True),
    default=0.01,
    help="gsigma step",
)
@click.option("--a", "a", type=float, default=2.0, help="Larger entry (minimum)")
@click.option("--b", "b", type=float, default=1.0, help="Smaller entry (minimum)")
@click.option(
    "--radius",
    type=click.FloatRange(min=0, min_open=True),
    default=1e-3,
    help="Perturbation norm (minimum)",
)
@click.option(
    "--samples",
    type=click.IntRange(min=1),
    default=200,
    help="Random perturbations (minimum)",
)
@click.option(
    "--left",
    "-l",
    type=click.Path(dir_okay=False),
    help="Support I (valley, smartinit)",
)
@click.option(
    "--right",
    "-r",
    type=click.Path(dir_okay=False),
    help="Support J (valley, smartinit)",
)
@click.option(
    "--sample-count",
    type=click.IntRange(min=2),
    default=DEFAULT_SAMPLE_COUNT,
    help="Samples along feasible paths",
)
@click.option("--seed", type=int, default=0, help="Random seed (default: 0)")
@click.option("--out", "-o", type=click.Path(), help="Save the CSV/JSON to a file")
@click.option(
    "--out-dir",
    type=click.Path(file_okay=False),
    help="Write instance and point files (valley, minimum)",
)
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose output")
def probe(
    what: str,
    sigma_min: float,
    sigma_max: float,
    step: float,
    a: float,
    b: float,
    radius: float,
    samples: int,
    left: Optional[str],
    right: Optional[str],
    sample_count: int,
    seed: int,
    out: Optional[str],
    out_dir: Optional[str],
    verbose: bool,
) -> None:
    """
    Landscape experiments: valley curves and spurious constructions.

    gsigma emits CSV columns sigma,g1,g2,g3; the other probes emit JSON.

    Examples:
    \b
    fsmf-tool probe --what gsigma --sigma-min -10 --sigma-max 10 --step 0.01
    fsmf-tool probe --what valley --out-dir valley/
    fsmf-tool probe --what minimum --a 2 --b 1
    fsmf-tool probe --what smartinit -l I.txt -r J.txt --seed 3
    """
    _configure_logging(verbose)
    what = what.lower()
    directory = Path(out_dir) if out_dir else None
    try:
        supports: Optional[SupportPair] = None
        if (left is None) != (right is None):
            raise ValueError("--left and --right must be given together")
        if left is not None and right is not None:
            supports = _load_supports(left, right)

        if what == "gsigma":
            _emit(_probe_gsigma(sigma_min, sigma_max, step), out, "curves")
            return
        if what == "valley":
            data = _probe_valley(supports, sample_count, directory)
        elif what == "minimum":
            data = _probe_minimum(a, b, radius, samples, seed, directory)
        else:
            if supports is None:
                raise ValueError("smartinit needs --left and --right")
            data = _probe_smartinit(supports, seed, sample_count)
    except CertificateMismatch as e:
        _abort(e, verbose, EXIT_CERTIFICATE)
    except INPUT_ERRORS as e:
        _abort(e, verbose)
    _emit(format_json_output(data), out, "probe results")


if __name__ == "__main__":
    cli()
