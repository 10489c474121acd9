#!/usr/bin/env python3
"""
Unit tests for the operator gallery

Tests that every gallery problem builds, validates its parameters and passes
its attached facts at the default truncation.
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from gallery import (
    GALLERY,
    Fact,
    GalleryProblem,
    accepted_params,
    build_problem,
    check_facts,
    core_orders,
    creation_orders,
    disk_quadrature,
    gallery_table,
    right_shift_orders,
    volterra_distance_formula,
    volterra_nystrom,
)
from lab_utils import ParameterError, UnsupportedOperationError
from linop import DomainExtensionOperator, apply

EXPECTED_IDS = [
    "multiplication",
    "left-shift",
    "right-shift",
    "volterra",
    "creation",
    "weighted-shift",
    "escape",
    "direct-sum",
    "rotations",
]


class TestRegistry:
    """Test lookup of problems by id."""

    def test_ids(self):
        """Every documented problem id is registered."""
        assert list(GALLERY) == EXPECTED_IDS

    def test_unknown_problem(self):
        """Unknown ids raise ParameterError naming the choices."""
        with pytest.raises(ParameterError, match="right-shift"):
            build_problem("no-such-problem")

    def test_unknown_parameter(self):
        """Parameters the builder does not take are rejected."""
        with pytest.raises(ParameterError, match="n_grid"):
            build_problem("right-shift", n_grid=10)

    def test_accepted_params(self):
        """Builders expose their parameter names."""
        assert accepted_params("escape") == ["M", "decay"]
        assert accepted_params("volterra") == ["n_quad"]
        assert accepted_params("multiplication") == ["n_grid"]

    def test_gallery_table(self):
        """The listing has one row per id with default parameters."""
        table = gallery_table()
        assert list(table.columns) == ["id", "parameters", "reference", "description"]
        assert list(table["id"]) == EXPECTED_IDS
        row = table.set_index("id").loc["right-shift"]
        assert row["parameters"] == "M=256"

    @pytest.mark.parametrize(
        "problem_id,params",
        [
            ("multiplication", {"n_grid": 4}),
            ("left-shift", {"M": 3}),
            ("right-shift", {"M": 2}),
            ("volterra", {"n_quad": 100}),
            ("creation", {"M": 2}),
            ("weighted-shift", {"M": 1}),
            ("escape", {"decay": 1.5}),
            ("escape", {"M": 0}),
            ("direct-sum", {"M": 1}),
            ("rotations", {"M": 0}),
        ],
    )
    def test_parameter_ranges(self, problem_id, params):
        """Out-of-range parameters are parameter errors."""
        with pytest.raises(ParameterError):
            build_problem(problem_id, **params)


class TestFacts:
    """Test the machine-checkable facts of every problem."""

    @pytest.mark.slow
    @pytest.mark.parametrize("problem_id", EXPECTED_IDS)
    def test_all_facts_pass(self, problem_id):
        """Every fact passes at the default truncation."""
        problem = build_problem(problem_id)
        facts = check_facts(problem)
        assert len(facts) == len(problem.facts) > 0
        failed = facts[facts["status"] != "PASS"]
        assert failed.empty, failed[["fact_id", "observed", "expected"]].to_string()

    @pytest.mark.parametrize("problem_id", EXPECTED_IDS)
    def test_known_solution_solves(self, problem_id):
        """Known solutions satisfy A f = g on the interior of the window."""
        problem = build_problem(problem_id)
        assert problem.solution_residual() <= 1e-8 * max(1.0, problem.g.norm())

    def test_failing_check_is_reported(self):
        """A check that raises becomes a FAIL row with no observation."""

        def needs_adjoint(problem):
            raise UnsupportedOperationError("no adjoint")

        base = build_problem("escape", M=5)
        problem = GalleryProblem(
            problem_id="broken",
            op=base.op,
            g=base.g,
            known_solution=None,
            truncation=base.truncation,
            reference="test",
            params={},
            facts=(Fact("adjoint", "needs A*", "test", needs_adjoint),),
        )
        facts = check_facts(problem)
        assert list(facts["status"]) == ["FAIL"]
        assert math.isnan(facts["observed"].iloc[0])
        assert "no adjoint" in facts["expected"].iloc[0]

    def test_facts_carry_references(self):
        """Each fact row names the problem and a reference."""
        facts = check_facts(build_problem("creation", M=32))
        assert set(facts["problem"]) == {"creation"}
        assert facts["reference"].str.contains("Krylov escape").all()


class TestConstructions:
    """Test the discretizations behind the gallery problems."""

    def test_disk_quadrature_area(self):
        """Weights sum to the disk area and nodes lie in the disk."""
        nodes, weights = disk_quadrature(12)
        assert len(nodes) == 4 * 12**2
        assert weights.sum() == pytest.approx(math.pi, rel=1e-12)
        assert np.all(np.abs(nodes - 2.0) < 1.0)
        assert np.all(weights > 0)

    def test_disk_quadrature_integrates_polynomials(self):
        """∫ |z − 2|² dA = π/2 over the unit disk."""
        nodes, weights = disk_quadrature(10)
        assert np.sum(weights * np.abs(nodes - 2.0) ** 2) == pytest.approx(math.pi / 2, rel=1e-12)

    def test_volterra_nystrom_integrates_exactly(self):
        """The Nyström matrix integrates low-degree polynomials from 0 to each node."""
        nodes, weights, nodal = volterra_nystrom(64)
        assert weights.sum() == pytest.approx(1.0, abs=1e-14)
        np.testing.assert_allclose(nodal @ nodes**3, nodes**4 / 4, atol=1e-13)

    def test_volterra_distance_formula(self):
        """dist(x, span{x²}) = √3/12 at N = 1."""
        assert volterra_distance_formula(1) == pytest.approx(6 / (math.sqrt(3) * 24))

    def test_right_shift_window(self):
        """The window is {−M..M} with physical index n at position n + M."""
        problem = build_problem("right-shift", M=16)
        assert problem.op.dim == 33
        assert problem.index(0) == 16
        image = apply(problem.op, problem.known_solution)
        np.testing.assert_allclose(image.coords, problem.g.coords)

    def test_order_helpers(self):
        """Krylov orders stay inside the windows."""
        assert right_shift_orders(256) == 100
        assert right_shift_orders(16) == 6
        assert creation_orders(64) == 40
        assert core_orders(12) == [5, 10]
        assert core_orders(4) == [3]

    def test_escape_is_domain_extension(self):
        """The escape problem carries x_0 as an extra domain direction."""
        problem = build_problem("escape", M=8)
        assert isinstance(problem.op, DomainExtensionOperator)
        assert problem.op.dim == 9
        assert problem.extras["escape_candidate"].mu == 1.0

    def test_direct_sum_solutions(self):
        """Both f ⊕ 0 and f ⊕ ξ solve the direct-sum system."""
        problem = build_problem("direct-sum", M=6)
        other = problem.extras["non_krylov_solution"]
        residual = apply(problem.op, other) - problem.g
        assert residual.norm() <= 1e-14
        assert problem.extras["xi"].norm() == pytest.approx(1.0)
