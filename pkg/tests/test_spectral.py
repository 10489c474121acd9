#!/usr/bin/env python3
"""
Unit tests for the spectral measure module

Tests atomic spectral measures, moments, the functional calculus, the L²(μ_g)
isometry, bounded-vector growth and the spectral Krylov solution.
"""

import math
import os
import sys

import numpy as np
import pandas as pd
import pytest
import scipy.linalg

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cg import solve_selfadjoint
from gallery import noninjective_direct_sum
from lab_utils import (
    EvaluationError,
    NotInRangeError,
    OracleUnavailableError,
    ParameterError,
    WrongOperatorClassError,
)
from linop import DenseOperator, DiagonalOperator, WeightedShift, make_space_id
from spectral import (
    apply_function,
    bounded_vector_growth,
    horner_apply,
    isometry_check,
    krylov_solution_via_spectrum,
    measure_moments,
    measure_refinement,
    moment_defects,
    polynomial_discrepancy,
    spectral_measure,
)


@pytest.fixture
def random_symmetric():
    """Random symmetric 15×15 operator scaled to spectrum in [−1, 1]."""
    rng = np.random.default_rng(21)
    b = rng.standard_normal((15, 15))
    matrix = b + b.T
    matrix /= np.abs(np.linalg.eigvalsh(matrix)).max()
    op = DenseOperator(matrix, make_space_id("sym", 15))
    return op, op.vector(rng.standard_normal(15))


class TestSpectralMeasure:
    """Test construction of μ_g."""

    def test_equal_weights(self):
        """g = (1,1,1)/√3 puts mass 1/3 on each eigenvalue of diag(1,2,3)."""
        op = DiagonalOperator([3.0, 1.0, 2.0], make_space_id("diag", 3))
        measure = spectral_measure(op, op.vector(np.ones(3) / math.sqrt(3)), source="diag/ones")
        np.testing.assert_allclose(measure.eigenvalues, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(measure.weights, [1 / 3, 1 / 3, 1 / 3])
        assert measure.total_mass == pytest.approx(1.0)
        assert measure.source == "diag/ones"
        assert measure.atoms[0] == pytest.approx((1.0, 1 / 3))

    def test_repeated_eigenvalues_merge(self):
        """Repeated eigenvalues become one atom carrying the summed weight."""
        op = DiagonalOperator([1.0, 1.0, 2.0], make_space_id("diag", 3))
        measure = spectral_measure(op, op.vector([1.0, 1.0, 0.0]))
        np.testing.assert_allclose(measure.eigenvalues, [1.0, 2.0])
        np.testing.assert_allclose(measure.weights, [2.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(measure.support(), [1.0])

    def test_moments_match_operator_powers(self, random_symmetric):
        """Σ w_i λ_i^k agrees with ⟨g, A^k g⟩."""
        op, g = random_symmetric
        measure = spectral_measure(op, g)
        assert moment_defects(op, g, measure, k_max=8) <= 1e-12
        moments = measure_moments(measure, 2)
        assert moments[0] == pytest.approx(g.norm() ** 2)
        assert moments[2] == pytest.approx(op.vector(op.matvec(g.coords)).norm() ** 2)

    def test_nonsymmetric_rejected(self):
        """Spectral measures need a symmetric operator."""
        op = DenseOperator([[1.0, 1.0], [0.0, 1.0]], make_space_id("dense", 2))
        with pytest.raises(WrongOperatorClassError):
            spectral_measure(op, op.unit(0))

    def test_dense_limit(self):
        """Dimensions above 2000 are refused."""
        op = DiagonalOperator(np.ones(2001), make_space_id("big", 2001))
        with pytest.raises(OracleUnavailableError):
            spectral_measure(op, op.unit(0))

    def test_frame_and_csv(self, tmp_path):
        """The atom table exports with columns lambda, weight."""
        op = DiagonalOperator([1.0, 2.0], make_space_id("diag", 2))
        measure = spectral_measure(op, op.vector([1.0, 0.0]))
        output = tmp_path / "measure.csv"
        measure.to_csv(str(output))
        frame = pd.read_csv(output)
        assert list(frame.columns) == ["lambda", "weight"]
        np.testing.assert_allclose(frame["weight"], [1.0, 0.0])

    def test_refinement_sequences(self):
        """measure_refinement stacks one atom table per truncation."""

        def build(size):
            op = DiagonalOperator(np.arange(1.0, size + 1), make_space_id("diag", size))
            return op, op.vector(np.ones(size) / math.sqrt(size))

        frame = measure_refinement(build, [4, 8])
        assert list(frame.columns) == ["M", "lambda", "weight"]
        assert len(frame) == 12
        np.testing.assert_allclose(frame.groupby("M")["weight"].sum(), [1.0, 1.0])


class TestFunctionalCalculus:
    """Test h(A)g, Horner evaluation and the isometry check."""

    def test_exponential_matches_expm(self, random_symmetric):
        """h = exp reproduces expm(A)g."""
        op, g = random_symmetric
        result = apply_function(op, g, np.exp)
        expected = scipy.linalg.expm(op.to_dense()) @ g.coords
        np.testing.assert_allclose(result.coords, expected, atol=1e-12)

    def test_scalar_only_function(self):
        """Functions that do not vectorize are evaluated per eigenvalue."""
        op = DiagonalOperator([4.0, -9.0, 1.0], make_space_id("diag", 3))
        result = apply_function(op, op.vector([1.0, 1.0, 1.0]), lambda lam: math.sqrt(abs(lam)))
        np.testing.assert_allclose(result.coords, [2.0, 3.0, 1.0])

    def test_undefined_on_weighted_atom(self):
        """1/λ with weight at λ = 0 is an evaluation error."""
        op = DiagonalOperator([0.0, 1.0, 2.0], make_space_id("diag", 3))
        with pytest.raises(EvaluationError):
            apply_function(op, op.vector([1.0, 1.0, 1.0]), lambda lam: 1.0 / lam)

    def test_undefined_on_unweighted_atom(self):
        """Atoms carrying no weight may be undefined."""
        op = DiagonalOperator([0.0, 1.0, 2.0], make_space_id("diag", 3))
        result = apply_function(op, op.vector([0.0, 1.0, 2.0]), lambda lam: 1.0 / lam)
        np.testing.assert_allclose(result.coords, [0.0, 1.0, 1.0])

    def test_horner(self):
        """coeffs [1, 0, −1] evaluate A² − I."""
        op = DiagonalOperator([1.0, 2.0, 3.0], make_space_id("diag", 3))
        result = horner_apply(op, op.vector([1.0, 1.0, 1.0]), np.array([1.0, 0.0, -1.0]))
        np.testing.assert_allclose(result.coords, [0.0, 3.0, 8.0])

    def test_polynomial_discrepancy(self, random_symmetric):
        """‖p(A)g‖ equals ‖p‖ in L²(μ_g) for a fixed cubic."""
        op, g = random_symmetric
        measure = spectral_measure(op, g)
        assert polynomial_discrepancy(op, g, np.array([0.5, -1.0, 0.25, 1.0]), measure) <= 1e-12

    def test_isometry(self, random_symmetric):
        """Random polynomials of degree ≤ 10 keep the isometry to 1e-10."""
        op, g = random_symmetric
        assert isometry_check(op, g, degree_max=10, trials=50, seed=0) <= 1e-10


class TestGrowth:
    """Test bounded-vector growth rates."""

    def test_rates_approach_spectral_radius(self):
        """For diag(1,2) and g = (1,1)/√2 the rates climb toward 2."""
        op = DiagonalOperator([1.0, 2.0], make_space_id("diag", 2))
        series = bounded_vector_growth(op, op.vector(np.ones(2) / math.sqrt(2)), 80)
        growth = series.frame["growth"].to_numpy()
        assert not series.truncated
        assert len(growth) == 80
        assert growth[0] == pytest.approx(math.sqrt(2.5))
        assert np.all(np.diff(growth) > 0)
        assert abs(growth[-1] - 2.0) <= 0.01

    def test_factorial_growth_does_not_overflow(self):
        """Weights n+1 give ‖A^k e_0‖ = k! without overflow."""
        op = WeightedShift(np.arange(1.0, 301.0), 1, make_space_id("shift", 300))
        series = bounded_vector_growth(op, op.unit(0), 200)
        assert not series.truncated
        assert np.all(np.isfinite(series.frame["growth"]))
        assert series.frame["growth"].iloc[-1] > 50

    def test_nilpotent_truncates(self):
        """A^k g reaching the window edge truncates the series with a warning."""
        op = WeightedShift(np.ones(5), 1, make_space_id("shift", 5))
        with pytest.warns(RuntimeWarning, match="truncated"):
            series = bounded_vector_growth(op, op.unit(0), 10)
        assert series.truncated
        assert len(series.frame) == 4
        assert "vanishes" in series.reason

    def test_argument_validation(self):
        """k_max < 1 and g = 0 are rejected."""
        op = DiagonalOperator([1.0, 2.0], make_space_id("diag", 2))
        with pytest.raises(ParameterError):
            bounded_vector_growth(op, op.unit(0), 0)
        with pytest.raises(ParameterError):
            bounded_vector_growth(op, op.zeros(), 5)


class TestSpectralSolution:
    """Test f = A⁻¹g read off the spectrum."""

    def test_direct_sum_krylov_solution(self):
        """The reciprocal on μ_g returns f ⊕ 0."""
        problem = noninjective_direct_sum(M=12)
        f = krylov_solution_via_spectrum(problem.op, problem.g)
        assert (f - problem.known_solution).norm() <= 1e-10

    def test_indefinite_invertible(self, random_symmetric):
        """On an invertible symmetric operator the result solves Af = g."""
        op, g = random_symmetric
        f = krylov_solution_via_spectrum(op, g)
        residual = np.linalg.norm(op.matvec(f.coords) - g.coords)
        assert residual <= 1e-8 * g.norm()

    def test_agrees_with_selfadjoint_driver(self, random_symmetric):
        """The spectral reciprocal and CG on A²f = Ag give the same solution."""
        op, g = random_symmetric
        spectral_f = krylov_solution_via_spectrum(op, g)
        report = solve_selfadjoint(op, g, rtol=1e-12, max_iter=2000)
        assert (spectral_f - report.solution).norm() <= 1e-8 * max(spectral_f.norm(), 1.0)

    def test_weight_at_zero(self):
        """Datum with weight on the kernel is not in the range."""
        op = DiagonalOperator([0.0, 1.0, 2.0], make_space_id("diag", 3))
        with pytest.raises(NotInRangeError):
            krylov_solution_via_spectrum(op, op.vector([1.0, 1.0, 1.0]))

    def test_zero_datum(self):
        """g = 0 gives f = 0."""
        op = DiagonalOperator([0.0, 1.0], make_space_id("diag", 2))
        assert krylov_solution_via_spectrum(op, op.zeros()).norm() == 0.0
