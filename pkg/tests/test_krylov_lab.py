#!/usr/bin/env python3
"""
Integration tests for the krylov_lab command-line interface

Tests each command end to end through typer's CliRunner: report contents,
config-file precedence, CSV export, exit codes and deterministic reports.
"""

import json
import os
import sys

import pandas as pd
import pytest
from typer.testing import CliRunner

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from krylov_lab import app, run_experiment
from lab_reporting import strip_volatile
from lab_utils import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, SCHEMA_VERSION, SEED_ENV_VAR, build_config


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def report_path(tmp_path):
    return str(tmp_path / "report.json")


def read_report(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


class TestListGallery:
    """Test the list-gallery command."""

    def test_json_listing(self, runner):
        """The JSON listing names at least eight problems with references."""
        result = runner.invoke(app, ["list-gallery", "--format", "json"])
        assert result.exit_code == EXIT_OK
        rows = json.loads(result.stdout)
        ids = {row["id"]: row for row in rows}
        assert len(ids) >= 8
        assert "Krylov escape" in ids["escape"]["reference"]
        assert "Krylov escape" in ids["creation"]["reference"]

    def test_text_listing(self, runner):
        result = runner.invoke(app, ["list-gallery"])
        assert result.exit_code == EXIT_OK
        assert "Operator Gallery" in result.stdout
        assert "weighted-shift" in result.stdout

    def test_bad_format(self, runner):
        result = runner.invoke(app, ["list-gallery", "--format", "yaml"])
        assert result.exit_code == EXIT_VALIDATION


class TestDiagnose:
    """Test the diagnose command."""

    def test_right_shift_report(self, runner, report_path):
        """Distances are constant 1 and the intersection has dimension 1."""
        result = runner.invoke(
            app,
            ["diagnose", "--problem", "right-shift", "--M", "256", "--Ns", "5,10,20", "--output", report_path],
        )
        assert result.exit_code == EXIT_OK, result.output
        report = read_report(report_path)
        assert report["schema_version"] == SCHEMA_VERSION
        results = report["results"]
        assert [row["N"] for row in results["distances"]] == [5, 10, 20]
        assert all(abs(row["distance"] - 1.0) <= 1e-12 for row in results["distances"])
        assert results["intersection_dim"] == 1
        assert report["metadata"]["config"]["M"] == 256

    def test_csv_export(self, runner, tmp_path):
        """CSV output holds the distance series and the core-condition decay."""
        output = str(tmp_path / "decay.csv")
        result = runner.invoke(
            app,
            ["diagnose", "--problem", "weighted-shift", "--Ns", "5,10,35", "--output", output, "--format", "csv"],
        )
        assert result.exit_code == EXIT_OK, result.output
        frame = pd.read_csv(output)
        assert list(frame.columns) == ["N", "distance", "graph_distance"]
        assert list(frame["N"]) == [5, 10, 35]
        assert frame["distance"].isna().all()
        assert frame["graph_distance"].is_monotonic_decreasing
        assert frame["graph_distance"].iloc[-1] > 1e-2

    def test_text_summary(self, runner):
        """Without --output a text summary is printed."""
        result = runner.invoke(app, ["diagnose", "--problem", "creation", "--M", "32", "--Ns", "5,10"])
        assert result.exit_code == EXIT_OK, result.output
        assert "Krylov Structure Diagnostics" in result.stdout
        assert "Intersection dimension: 1" in result.stdout

    def test_escape_notes(self, runner, report_path):
        """Domain-extension problems report the model-artifact note."""
        result = runner.invoke(app, ["diagnose", "--problem", "escape", "--Ns", "10,30", "--output", report_path])
        assert result.exit_code == EXIT_OK, result.output
        results = read_report(report_path)["results"]
        assert abs(results["escape"]["indicator"] - 1.0) <= 1e-12
        assert any("model artifact" in note for note in results["notes"])


class TestSolve:
    """Test the solve command and its exit codes."""

    def test_volterra_not_symmetric(self, runner):
        """The self-adjoint driver rejects the Volterra operator."""
        result = runner.invoke(
            app, ["solve", "--problem", "volterra", "--n-quad", "256", "--method", "selfadjoint-square"]
        )
        assert result.exit_code == EXIT_VALIDATION
        assert "Error" in result.output

    def test_direct_sum_krylov_solution(self, runner, report_path):
        """The self-adjoint driver returns the Krylov solution of the direct sum."""
        result = runner.invoke(
            app,
            ["solve", "--problem", "direct-sum", "--method", "selfadjoint-square", "--output", report_path],
        )
        assert result.exit_code == EXIT_OK, result.output
        results = read_report(report_path)["results"]
        assert results["converged"]
        assert results["solution_error"] <= 1e-8
        assert len(results["solution"]) == 32
        assert all(len(pair) == 2 for pair in results["solution"])

    def test_skew_driver(self, runner, report_path):
        result = runner.invoke(
            app, ["solve", "--problem", "rotations", "--method", "skewadjoint-square", "--output", report_path]
        )
        assert result.exit_code == EXIT_OK, result.output
        assert read_report(report_path)["results"]["method"] == "skewadjoint-square"

    def test_non_convergence_exit_code(self, runner, report_path):
        """An iteration cap that is too small exits 3 and still writes the report."""
        result = runner.invoke(
            app, ["solve", "--problem", "direct-sum", "--max-iter", "1", "--output", report_path]
        )
        assert result.exit_code == EXIT_NUMERICAL
        results = read_report(report_path)["results"]
        assert not results["converged"]
        assert results["stop_reason"] == "max_iter"

    def test_dense_methods(self, runner, report_path):
        """Spectral and oracle methods solve the direct sum."""
        for method in ("spectral", "oracle"):
            result = runner.invoke(
                app, ["solve", "--problem", "direct-sum", "--method", method, "--output", report_path]
            )
            assert result.exit_code == EXIT_OK, result.output
            assert read_report(report_path)["results"]["solution_error"] <= 1e-8

    def test_unused_parameter_warning(self, runner):
        """Parameters the problem does not take are ignored with a warning."""
        result = runner.invoke(app, ["solve", "--problem", "direct-sum", "--n-grid", "12", "--method", "oracle"])
        assert result.exit_code == EXIT_OK, result.output
        assert "not used" in result.output

    def test_unknown_problem(self, runner):
        result = runner.invoke(app, ["solve", "--problem", "no-such-problem"])
        assert result.exit_code == EXIT_VALIDATION
        assert "Error" in result.output


class TestConfigAndRun:
    """Test config files, the run command and the seed fallback."""

    def test_run_with_config(self, runner, tmp_path, report_path):
        """The config file selects the task and its options."""
        config = tmp_path / "experiment.yaml"
        config.write_text(
            f"problem: creation\nM: 32\ntask: diagnose\nNs: [5, 10]\noutput: {report_path}\n", encoding="utf-8"
        )
        result = runner.invoke(app, ["run", "--config", str(config)])
        assert result.exit_code == EXIT_OK, result.output
        report = read_report(report_path)
        assert report["metadata"]["task"] == "diagnose"
        assert report["results"]["params"] == {"M": 32}

    def test_flags_override_config(self, runner, tmp_path, report_path):
        config = tmp_path / "experiment.json"
        config.write_text(json.dumps({"problem": "creation", "M": 32, "Ns": [5]}), encoding="utf-8")
        result = runner.invoke(
            app, ["diagnose", "--config", str(config), "--M", "48", "--output", report_path]
        )
        assert result.exit_code == EXIT_OK, result.output
        assert read_report(report_path)["results"]["params"] == {"M": 48}

    def test_bad_config(self, runner, tmp_path):
        """Unknown config keys exit 2 with a message."""
        config = tmp_path / "bad.yaml"
        config.write_text("problem: creation\nwindow: 3\n", encoding="utf-8")
        result = runner.invoke(app, ["run", "--config", str(config)])
        assert result.exit_code == EXIT_VALIDATION
        assert "window" in result.output

    def test_seed_from_environment(self, runner, report_path):
        """KRYLOVLAB_SEED is recorded when --seed is not given."""
        result = runner.invoke(
            app,
            ["diagnose", "--problem", "creation", "--M", "16", "--Ns", "5", "--output", report_path],
            env={SEED_ENV_VAR: "17"},
        )
        assert result.exit_code == EXIT_OK, result.output
        assert read_report(report_path)["metadata"]["seed"] == 17


class TestProfileAndReproduce:
    """Test the profile and reproduce-examples commands."""

    def test_profile_stages(self, runner, report_path):
        """Profiling records every stage and skips a mismatched solver."""
        result = runner.invoke(
            app,
            ["profile", "--problem", "creation", "--M", "32", "--method", "selfadjoint-square", "--output", report_path],
        )
        assert result.exit_code == EXIT_OK, result.output
        results = read_report(report_path)["results"]
        stages = [stage["stage"] for stage in results["stages"]]
        assert stages == ["build_problem", "krylov_basis", "diagnose"]
        assert len(results["skipped"]) == 1
        assert results["dim"] == 32

    @pytest.mark.slow
    def test_reproduce_examples_deterministic(self, runner, report_path):
        """Every fact passes and two runs give the same report up to timestamps."""
        first = runner.invoke(app, ["reproduce-examples", "--seed", "0", "--output", report_path])
        assert first.exit_code == EXIT_OK, first.output
        first_report = read_report(report_path)

        second = runner.invoke(app, ["reproduce-examples", "--seed", "0", "--output", report_path])
        assert second.exit_code == EXIT_OK, second.output
        second_report = read_report(report_path)

        assert first_report["results"]["failed"] == 0
        assert first_report["results"]["passed"] == len(first_report["results"]["facts"])
        assert strip_volatile(first_report) == strip_volatile(second_report)

    def test_run_experiment_programmatic(self):
        """run_experiment returns the report and status without the CLI."""
        config = build_config({"problem": "rotations", "task": "solve", "method": "skewadjoint-square", "seed": 1})
        report, status = run_experiment(config)
        assert status == EXIT_OK
        assert report["metadata"]["seed"] == 1
        assert report["results"]["warnings"] == []
