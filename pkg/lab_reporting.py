#!/usr/bin/env python3
"""
Krylov Lab - Reporting Functions

JSON report assembly, CSV export of the primary table of each task, and the
formatted text summaries printed when no output file is given.
"""

import datetime
import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from lab_utils import SCHEMA_VERSION

VOLATILE_METADATA = ("generated_at", "runtime_seconds")


def to_jsonable(value):
    """
    Convert numpy / pandas values into plain JSON types.

    Complex numbers become [re, im] pairs, non-finite floats become None and
    DataFrames become lists of records.
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [to_jsonable(v) for v in value]
    if isinstance(value, pd.DataFrame):
        return to_jsonable(value.to_dict(orient="records"))
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_ | bool):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, complex | np.complexfloating):
        return [to_jsonable(float(value.real)), to_jsonable(float(value.imag))]
    if isinstance(value, float | np.floating):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def build_report(task: str, results: dict, config: dict, seed: int, runtime_seconds: float) -> dict:
    """
    Assemble the versioned JSON report of one task.

    Args:
        task: Task name
        results: Task-specific results
        config: Resolved experiment config as a dict
        seed: Resolved RNG seed
        runtime_seconds: Wall time of the task

    Returns:
        Report dictionary with schema_version, metadata and results
    """
    return {
        "schema_version": SCHEMA_VERSION,
        "metadata": {
            "generated_at": datetime.datetime.now().isoformat(),
            "runtime_seconds": round(runtime_seconds, 3),
            "seed": seed,
            "task": task,
            "config": to_jsonable(config),
        },
        "results": to_jsonable(results),
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def strip_volatile(report: dict) -> dict:
    """Copy of a report without the fields that change between identical runs."""
    stripped = json.loads(json.dumps(report))
    for key in VOLATILE_METADATA:
        stripped.get("metadata", {}).pop(key, None)
    return stripped


def write_json(report: dict, output_file: str):
    Path(output_file).write_text(dumps_report(report), encoding="utf-8")


def write_csv(frame: pd.DataFrame, output_file: str):
    frame.to_csv(output_file, index=False, encoding="utf-8")


def primary_frame(task: str, results: dict) -> pd.DataFrame:
    """
    The table a task exports as CSV.

    Args:
        task: Task name
        results: Task results as stored in the report

    Returns:
        Residual history for solve, distance / core-decay series for diagnose,
        stage rows for profile, fact rows for reproduce-examples
    """
    if task == "solve":
        frame = pd.DataFrame({"iteration": range(len(results["residual_norms"])), "residual": results["residual_norms"]})
        return frame
    if task == "diagnose":
        frame = pd.DataFrame(results["distances"] or [], columns=["N", "distance"])
        frame = frame.astype({"N": "int64", "distance": "float64"})
        if results.get("core_decay"):
            frame = frame.merge(pd.DataFrame(results["core_decay"]), on="N", how="outer")
        return frame
    if task == "profile":
        return pd.DataFrame(results["stages"], columns=["stage", "wall_seconds", "rss_delta_mb"])
    return pd.DataFrame(results["facts"])


def print_solve_results(results: dict):
    """Print a solve summary.

    Args:
        results: Results of the solve task
    """
    print("\nKrylov Solve")
    print("=" * 80)
    print(f"Problem: {results['problem']}  Parameters: {results['params']}")
    print(f"Method: {results['method']}  Converged: {results['converged']}  Stop: {results['stop_reason']}")
    print(f"Iterations: {results['iterations']}")
    print(f"Final residual ‖Af − g‖: {results['final_mismatch']:.3e}")
    if results.get("solution_error") is not None:
        print(f"Distance to known solution: {results['solution_error']:.3e}")

    norms = results["residual_norms"]
    if len(norms) > 1:
        print("\nResidual history")
        print("-" * 40)
        step = max(1, len(norms) // 10)
        for i in range(0, len(norms), step):
            print(f"  {i:>6}  {norms[i]:.6e}")
        if (len(norms) - 1) % step:
            print(f"  {len(norms) - 1:>6}  {norms[-1]:.6e}")


def print_diagnostics(results: dict):
    """Print a diagnostics summary.

    Args:
        results: Results of the diagnose task
    """
    print("\nKrylov Structure Diagnostics")
    print("=" * 80)
    print(f"Problem: {results['problem']}  Parameters: {results['params']}")
    print(f"Basis size: {results['basis_size']}  Breakdown at: {results['breakdown_at']}")

    if results["distances"]:
        print(f"\n{'N':>6}  {'dist(f, K_N)':>14}")
        print("-" * 40)
        for row in results["distances"]:
            print(f"{row['N']:>6}  {row['distance']:>14.6e}")

    print(f"\nIntersection dimension: {results['intersection_dim']}")
    angles = results["principal_angles"]
    if angles:
        print(f"Smallest principal angle: {min(angles):.3e}")
    defects = results["reducibility_defects"]
    print(f"Reducibility defects: d1 = {defects['d1']:.3e}, d2 = {defects['d2']:.3e} (reduced: {defects['reduced']})")
    if results["image_distance"] is not None:
        print(f"dist(f, span A K_N): {results['image_distance']:.3e}")
    if results["escape"] is not None:
        escape = results["escape"]
        print(
            f"Escape indicator: {escape['indicator']:.6f}  "
            f"membership distance: {escape['membership_distance']:.3e}  inconclusive: {escape['inconclusive']}"
        )
    if results["core_decay"]:
        print(f"\n{'N':>6}  {'graph distance':>14}")
        print("-" * 40)
        for row in results["core_decay"]:
            print(f"{row['N']:>6}  {row['graph_distance']:>14.6e}")

    if results["notes"]:
        print("\nNotes:")
        for note in results["notes"]:
            print(f"  - {note}")


def print_profile(results: dict):
    """Print profile stages."""
    print("\nKrylov Lab Profile")
    print("=" * 80)
    print(f"Problem: {results['problem']}  Dimension: {results['dim']}")
    print(f"{'Stage':<20} {'Wall (s)':>12} {'RSS delta (MB)':>16}")
    print("-" * 50)
    for stage in results["stages"]:
        print(f"{stage['stage']:<20} {stage['wall_seconds']:>12.4f} {stage['rss_delta_mb']:>16.2f}")


def print_fact_table(results: dict):
    """Print one PASS/FAIL row per gallery fact.

    Args:
        results: Results of the reproduce-examples task
    """
    print("\nGallery Facts")
    print("=" * 80)
    current = None
    for row in results["facts"]:
        if row["problem"] != current:
            current = row["problem"]
            print(f"\n{current}")
            print("-" * 60)
        print(f"  [{row['status']}] {row['fact_id']:<28} {row['claim']}")
        observed = "n/a" if row["observed"] is None else f"{row['observed']:.6g}"
        print(f"         observed {observed}, expected {row['expected']}")
    print(f"\nPassed: {results['passed']}  Failed: {results['failed']}")


def print_gallery(table: pd.DataFrame):
    print("\nOperator Gallery")
    print("=" * 80)
    for row in table.itertuples(index=False):
        print(f"{row.id:<16} {row.description}")
        print(f"{'':<16} parameters: {row.parameters}")
        print(f"{'':<16} {row.reference}")


def print_task_results(task: str, results: dict):
    """Print the text summary of a task."""
    if task == "solve":
        print_solve_results(results)
    elif task == "diagnose":
        print_diagnostics(results)
    elif task == "profile":
        print_profile(results)
    else:
        print_fact_table(results)
