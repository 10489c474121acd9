#!/usr/bin/env python3
"""
Krylov Lab Experiment Runner

Thin orchestration layer over the gallery, the solvers and the structural
diagnostics. Every task writes a versioned JSON report (or the task's primary
table as CSV) and exits 0 on success, 2 on invalid input, 3 on a numerical
failure.
"""

import gc
import json
import time
import warnings

import pandas as pd
import psutil
import typer

from cg import METHOD_PSD, METHOD_SELFADJOINT, cg_solve, minimal_norm_oracle, solve_selfadjoint, solve_skewadjoint
from gallery import GALLERY, accepted_params, build_problem, check_facts, gallery_table
from krylov import build_krylov_basis, diagnose
from lab_reporting import (
    build_report,
    print_gallery,
    print_task_results,
    primary_frame,
    write_csv,
    write_json,
)
from lab_utils import (
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    ExperimentConfig,
    KrylovLabError,
    UnsupportedOperationError,
    WrongOperatorClassError,
    build_config,
    exit_code_for,
    load_config_file,
)
from linop import HVector, apply, embed
from spectral import krylov_solution_via_spectrum

app = typer.Typer(help="Krylov solvability experiments on finite truncations of the operator gallery.")


def load_problem(config: ExperimentConfig):
    """Build the configured gallery problem, warning about parameters it does not take."""
    params = config.problem_params()
    accepted = accepted_params(config.problem)
    for name in params:
        if name not in accepted:
            typer.echo(f"Warning: parameter {name} is not used by problem '{config.problem}'", err=True)
    return build_problem(config.problem, **{k: v for k, v in params.items() if k in accepted})


def _direct_solve(op, g: HVector, method: str) -> dict:
    if method == "spectral":
        solution = krylov_solution_via_spectrum(op, g)
        stop_reason = "spectral reciprocal"
    else:
        solution = minimal_norm_oracle(op, g)
        stop_reason = "dense pseudoinverse"
    mismatch = (apply(op, solution) - g).norm()
    return {
        "solution": solution,
        "iterations": 0,
        "residual_norms": [mismatch],
        "final_mismatch": mismatch,
        "stop_reason": stop_reason,
    }


def solve_task(config: ExperimentConfig) -> tuple[dict, int]:
    """
    Solve Af = g for the configured problem.

    Returns:
        Tuple (results, exit status); non-convergence is EXIT_NUMERICAL
    """
    problem = load_problem(config)
    op, g = problem.op, problem.g
    known = None if problem.known_solution is None else embed(op, problem.known_solution)
    options = {"max_iter": config.max_iter, "rtol": config.rtol}

    if config.method in ("spectral", "oracle"):
        run = _direct_solve(op, g, config.method)
        converged = run["final_mismatch"] <= config.rtol * max(g.norm(), 1.0)
        solution = run.pop("solution")
        results = {"method": config.method, "converged": converged, **run}
    else:
        if config.method == METHOD_PSD:
            report = cg_solve(op, g, known_solution=known, **options)
        elif config.method == METHOD_SELFADJOINT:
            report = solve_selfadjoint(op, g, known_solution=known, **options)
        else:
            report = solve_skewadjoint(op, g, known_solution=known, **options)
        solution = report.solution
        results = report.to_dict()
        results.pop("solution")

    results.update(
        {
            "problem": problem.problem_id,
            "params": problem.params,
            "solution": solution.coords,
            "solution_error": None if known is None else (solution - known).norm(),
        }
    )
    return results, EXIT_OK if results["converged"] else EXIT_NUMERICAL


def diagnose_task(config: ExperimentConfig) -> tuple[dict, int]:
    """
    Structural diagnostics of the configured problem at the orders config.Ns.

    Returns:
        Tuple (results, exit status); an inconclusive escape indicator is EXIT_NUMERICAL
    """
    problem = load_problem(config)
    report = diagnose(
        problem.op,
        problem.g,
        config.Ns,
        solution=problem.known_solution,
        escape_candidate=problem.extras.get("escape_candidate"),
        core_vector=problem.extras.get("core_vector"),
        tol=config.tol,
        boundary_margin=config.boundary_margin,
        seed=config.seed,
    )
    results = {"problem": problem.problem_id, "params": problem.params, **report.to_dict()}
    return results, EXIT_NUMERICAL if report.inconclusive else EXIT_OK


def get_memory_usage_mb() -> float:
    """Current resident set size in MB."""
    return psutil.Process().memory_info().rss / 1024 / 1024


def _measure(func, *args, **kwargs) -> tuple[float, float, object]:
    gc.collect()
    baseline = get_memory_usage_mb()
    start = time.perf_counter()
    result = func(*args, **kwargs)
    elapsed = time.perf_counter() - start
    return elapsed, get_memory_usage_mb() - baseline, result


def profile_task(config: ExperimentConfig) -> tuple[dict, int]:
    """
    Wall time and RSS delta of problem construction, basis, solve and diagnostics.

    A solve method that does not fit the operator class is skipped and noted.
    """
    stages = []
    elapsed, rss, problem = _measure(load_problem, config)
    stages.append({"stage": "build_problem", "wall_seconds": elapsed, "rss_delta_mb": rss})

    elapsed, rss, _ = _measure(build_krylov_basis, problem.op, problem.g, max(config.Ns))
    stages.append({"stage": "krylov_basis", "wall_seconds": elapsed, "rss_delta_mb": rss})

    skipped = []
    try:
        elapsed, rss, _ = _measure(solve_task, config)
        stages.append({"stage": "solve", "wall_seconds": elapsed, "rss_delta_mb": rss})
    except (WrongOperatorClassError, UnsupportedOperationError) as e:
        skipped.append(f"solve ({config.method}): {e}")

    elapsed, rss, _ = _measure(diagnose_task, config)
    stages.append({"stage": "diagnose", "wall_seconds": elapsed, "rss_delta_mb": rss})

    results = {
        "problem": problem.problem_id,
        "params": problem.params,
        "dim": problem.op.dim,
        "stages": stages,
        "skipped": skipped,
    }
    return results, EXIT_OK


def reproduce_task(config: ExperimentConfig) -> tuple[dict, int]:
    """
    Check every gallery fact at default truncations, one problem after another.

    Returns:
        Tuple (results with one row per fact, exit status); any FAIL is EXIT_NUMERICAL
    """
    frames = [check_facts(build_problem(problem_id)) for problem_id in GALLERY]
    facts = pd.concat(frames, ignore_index=True)
    failed = int((facts["status"] == "FAIL").sum())
    results = {
        "facts": facts.to_dict(orient="records"),
        "passed": len(facts) - failed,
        "failed": failed,
    }
    return results, EXIT_NUMERICAL if failed else EXIT_OK


TASK_RUNNERS = {
    "solve": solve_task,
    "diagnose": diagnose_task,
    "profile": profile_task,
    "reproduce-examples": reproduce_task,
}


def run_experiment(config: ExperimentConfig) -> tuple[dict, int]:
    """
    Core entry point that can be called programmatically.

    Args:
        config: Validated experiment config

    Returns:
        Tuple (report dictionary, exit status)
    """
    start = time.time()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        results, status = TASK_RUNNERS[config.task](config)

    messages = []
    for warning in caught:
        message = str(warning.message)
        if message not in messages:
            messages.append(message)
            typer.echo(f"Warning: {message}", err=True)
    results["warnings"] = messages

    report = build_report(config.task, results, config.to_dict(), config.seed, time.time() - start)
    return report, status


def emit_report(config: ExperimentConfig, report: dict):
    """Write the report to config.output, or print a text summary to stdout."""
    if config.output is None:
        print_task_results(config.task, report["results"])
        return
    if config.format == "csv":
        write_csv(primary_frame(config.task, report["results"]), config.output)
    else:
        write_json(report, config.output)
    typer.echo(f"Report written to {config.output}", err=True)


def execute(config_file: str | None, flags: dict):
    """Merge config sources, run the task, emit the report and exit with its status."""
    try:
        file_values = load_config_file(config_file) if config_file else {}
        config = build_config(file_values, flags)
        report, status = run_experiment(config)
    except KrylovLabError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(exit_code_for(e)) from e

    emit_report(config, report)
    if status != EXIT_OK:
        typer.echo(f"Error: task '{config.task}' finished with a numerical failure", err=True)
        raise typer.Exit(status)


# Shared options. Every default is None so that config-file values are only
# overridden by flags that were actually given.
PROBLEM_OPTION = typer.Option(None, "--problem", help=f"Gallery problem id ({', '.join(GALLERY)})")
M_OPTION = typer.Option(None, "--M", help="Truncation size for shift, creation, escape, direct-sum, rotations")
N_GRID_OPTION = typer.Option(None, "--n-grid", help="Radial nodes of the disk quadrature (multiplication)")
N_QUAD_OPTION = typer.Option(None, "--n-quad", help="Quadrature nodes, multiple of 8 (volterra)")
DECAY_OPTION = typer.Option(None, "--decay", help="Geometric ratio of the escape datum, in (0, 1)")
CONFIG_OPTION = typer.Option(None, "--config", help="Flat YAML/JSON config file; flags override its values")
OUTPUT_OPTION = typer.Option(None, "--output", help="Report file; a text summary is printed when omitted")
FORMAT_OPTION = typer.Option(None, "--format", help="Report format: 'json' (default) or 'csv'")
SEED_OPTION = typer.Option(None, "--seed", help="RNG seed (default: $KRYLOVLAB_SEED, else 0)")
NS_OPTION = typer.Option(None, "--Ns", help="Comma-separated Krylov orders (default: 5,10,20)")


@app.command()
def solve(
    problem: str | None = PROBLEM_OPTION,
    M: int | None = M_OPTION,
    n_grid: int | None = N_GRID_OPTION,
    n_quad: int | None = N_QUAD_OPTION,
    decay: float | None = DECAY_OPTION,
    method: str | None = typer.Option(
        None,
        "--method",
        help="cg-psd, selfadjoint-square (default), skewadjoint-square, spectral or oracle",
    ),
    max_iter: int | None = typer.Option(None, "--max-iter", help="Iteration cap (default: 4·dim)"),
    rtol: float | None = typer.Option(None, "--rtol", help="Relative residual target (default: 1e-10)"),
    config: str | None = CONFIG_OPTION,
    output: str | None = OUTPUT_OPTION,
    output_format: str | None = FORMAT_OPTION,
    seed: int | None = SEED_OPTION,
):
    """Solve Af = g for a gallery problem with a Krylov driver or a dense oracle."""
    flags = {
        "task": "solve",
        "problem": problem,
        "M": M,
        "n_grid": n_grid,
        "n_quad": n_quad,
        "decay": decay,
        "method": method,
        "max_iter": max_iter,
        "rtol": rtol,
        "output": output,
        "format": output_format,
        "seed": seed,
    }
    execute(config, flags)


@app.command(name="diagnose")
def diagnose_command(
    problem: str | None = PROBLEM_OPTION,
    M: int | None = M_OPTION,
    n_grid: int | None = N_GRID_OPTION,
    n_quad: int | None = N_QUAD_OPTION,
    decay: float | None = DECAY_OPTION,
    Ns: str | None = NS_OPTION,
    tol: float | None = typer.Option(None, "--tol", help="Intersection tolerance on 1 − cos θ (default: 1e-8)"),
    boundary_margin: int | None = typer.Option(
        None, "--boundary-margin", help="Window-edge coordinates excluded from K^⊥ (default: 8)"
    ),
    config: str | None = CONFIG_OPTION,
    output: str | None = OUTPUT_OPTION,
    output_format: str | None = FORMAT_OPTION,
    seed: int | None = SEED_OPTION,
):
    """Distances, Krylov intersection, reducibility defects, escape and core-condition decay."""
    flags = {
        "task": "diagnose",
        "problem": problem,
        "M": M,
        "n_grid": n_grid,
        "n_quad": n_quad,
        "decay": decay,
        "Ns": Ns,
        "tol": tol,
        "boundary_margin": boundary_margin,
        "output": output,
        "format": output_format,
        "seed": seed,
    }
    execute(config, flags)


@app.command()
def profile(
    problem: str | None = PROBLEM_OPTION,
    M: int | None = M_OPTION,
    n_grid: int | None = N_GRID_OPTION,
    n_quad: int | None = N_QUAD_OPTION,
    decay: float | None = DECAY_OPTION,
    Ns: str | None = NS_OPTION,
    method: str | None = typer.Option(None, "--method", help="Solve method to time"),
    config: str | None = CONFIG_OPTION,
    output: str | None = OUTPUT_OPTION,
    output_format: str | None = FORMAT_OPTION,
    seed: int | None = SEED_OPTION,
):
    """Wall time and memory of each stage on one gallery problem."""
    flags = {
        "task": "profile",
        "problem": problem,
        "M": M,
        "n_grid": n_grid,
        "n_quad": n_quad,
        "decay": decay,
        "Ns": Ns,
        "method": method,
        "output": output,
        "format": output_format,
        "seed": seed,
    }
    execute(config, flags)


@app.command(name="reproduce-examples")
def reproduce_examples(
    config: str | None = CONFIG_OPTION,
    output: str | None = OUTPUT_OPTION,
    output_format: str | None = FORMAT_OPTION,
    seed: int | None = SEED_OPTION,
):
    """Check every gallery fact; one PASS/FAIL row per fact."""
    execute(config, {"task": "reproduce-examples", "output": output, "format": output_format, "seed": seed})


@app.command(name="list-gallery")
def list_gallery(
    output_format: str = typer.Option("text", "--format", help="Output format: 'text' or 'json'"),
):
    """List gallery problem ids with their parameters and references."""
    table = gallery_table()
    if output_format == "json":
        typer.echo(json.dumps(table.to_dict(orient="records"), indent=2, ensure_ascii=False))
    elif output_format == "text":
        print_gallery(table)
    else:
        typer.echo("Error: --format must be 'text' or 'json'", err=True)
        raise typer.Exit(EXIT_VALIDATION)


@app.command()
def run(config: str = typer.Option(..., "--config", help="Config file; its 'task' key selects the task")):
    """Run the task named in a config file."""
    execute(config, {})


if __name__ == "__main__":
    app()
