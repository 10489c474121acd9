#!/usr/bin/env python3
"""
Unit tests for the linear operator layer

Tests vectors, the operator kinds, checked application, graph norms and the
class checks (symmetry, skew-symmetry, definiteness) in linop.py.
"""

import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from lab_utils import DimensionError, ParameterError, UnsupportedOperationError
from linop import (
    DenseOperator,
    DiagonalOperator,
    DomainElement,
    DomainExtensionOperator,
    HVector,
    QuadratureIntegralOperator,
    WeightedShift,
    apply,
    apply_adjoint,
    embed,
    graph_matrices,
    graph_norm,
    hermitian_defect,
    make_space_id,
    norm_estimate,
    psd_violation,
    square,
    to_dense,
)

DIM = 6
finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)


@pytest.fixture
def space():
    return make_space_id("test", DIM)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def operators(space, rng):
    """One operator of every plain kind on the same space."""
    matrix = rng.standard_normal((DIM, DIM)) + 1j * rng.standard_normal((DIM, DIM))
    nodes = np.linspace(0.1, 0.9, DIM)
    weights = np.full(DIM, 1.0 / DIM)
    return [
        DenseOperator(matrix, space),
        DiagonalOperator(np.arange(1, DIM + 1) * (1 + 1j), space),
        WeightedShift(np.arange(1, DIM + 1, dtype=float), 1, space),
        WeightedShift(np.ones(DIM), -1, space),
        QuadratureIntegralOperator(nodes, weights, np.tril(np.ones((DIM, DIM))) * weights, space),
    ]


class TestHVector:
    """Test coordinate vectors."""

    def test_inner_is_antilinear_in_first_slot(self, space):
        """⟨a·u, v⟩ = conj(a)·⟨u, v⟩."""
        u = HVector([1.0, 2.0j, 0, 0, 0, 0], space)
        v = HVector([3.0, 1.0, 0, 0, 0, 1.0], space)
        a = 2.0 - 1.0j
        assert (a * u).inner(v) == pytest.approx(np.conj(a) * u.inner(v))

    def test_mixing_spaces_is_rejected(self, space):
        """Vectors of different truncations cannot be combined."""
        u = HVector.zeros(space, DIM)
        v = HVector.zeros(make_space_id("other", DIM), DIM)
        with pytest.raises(DimensionError):
            u + v
        with pytest.raises(DimensionError):
            u.inner(v)

    def test_non_finite_coordinates_rejected(self, space):
        """NaN coordinates raise ParameterError."""
        with pytest.raises(ParameterError):
            HVector([np.nan, 0, 0, 0, 0, 0], space)

    def test_coordinates_are_read_only(self, space):
        """Coordinates cannot be mutated in place."""
        v = HVector.unit(space, DIM, 2)
        with pytest.raises(ValueError):
            v.coords[0] = 1.0

    def test_unit_outside_window(self, space):
        """Basis index outside the window raises DimensionError."""
        with pytest.raises(DimensionError):
            HVector.unit(space, DIM, DIM)

    def test_arithmetic(self, space):
        """Sum, difference, negation and scaling act on coordinates."""
        u = HVector.unit(space, DIM, 0)
        v = HVector.unit(space, DIM, 1)
        w = 2 * u - v / 2 + (-u)
        np.testing.assert_allclose(w.coords, [1.0, -0.5, 0, 0, 0, 0])
        assert w.norm() == pytest.approx(np.sqrt(1.25))


class TestOperatorKinds:
    """Test the action of each operator kind."""

    def test_right_shift_moves_and_drops(self, space):
        """Weighted right shift moves e_n to w_n e_{n+1} and drops the window edge."""
        op = WeightedShift(np.arange(1, DIM + 1, dtype=float), 1, space)
        np.testing.assert_allclose(apply(op, op.unit(2)).coords, 3.0 * op.unit(3).coords)
        assert apply(op, op.unit(DIM - 1)).norm() == 0.0

    def test_left_shift_annihilates_e0(self, space):
        """Left shift sends e_0 to zero and e_1 to e_0."""
        op = WeightedShift(np.ones(DIM), -1, space)
        assert apply(op, op.unit(0)).norm() == 0.0
        np.testing.assert_allclose(apply(op, op.unit(1)).coords, op.unit(0).coords)

    def test_zero_offset_rejected(self, space):
        """A shift with offset 0 is a parameter error."""
        with pytest.raises(ParameterError):
            WeightedShift(np.ones(DIM), 0, space)

    def test_dense_matches_action(self, operators):
        """to_dense reproduces matvec on every unit vector."""
        for op in operators:
            dense = to_dense(op)
            for i in range(DIM):
                np.testing.assert_allclose(dense[:, i], op.matvec(op.unit(i).coords), atol=1e-14)

    def test_matrix_columns_match_vector_action(self, operators, rng):
        """matvec on a matrix applies to each column."""
        block = rng.standard_normal((DIM, 3))
        for op in operators:
            stacked = op.matvec(block)
            for j in range(3):
                np.testing.assert_allclose(stacked[:, j], op.matvec(block[:, j]), atol=1e-13)

    def test_quadrature_coordinates(self, space):
        """Coordinate matrix is diag(√w)·nodal·diag(1/√w)."""
        nodes = np.array([0.1, 0.3, 0.5, 0.7, 0.8, 0.9])
        weights = np.array([0.1, 0.2, 0.3, 0.1, 0.2, 0.1])
        nodal = np.tril(np.ones((DIM, DIM))) * weights
        op = QuadratureIntegralOperator(nodes, weights, nodal, space)
        expected = np.diag(np.sqrt(weights)) @ nodal @ np.diag(1 / np.sqrt(weights))
        np.testing.assert_allclose(op.to_dense(), expected)

    def test_space_mismatch_rejected(self, operators):
        """Applying to a vector of another space raises DimensionError."""
        foreign = HVector.zeros(make_space_id("other", DIM), DIM)
        with pytest.raises(DimensionError):
            apply(operators[0], foreign)

    def test_square_signs(self, operators):
        """square(op, s) materializes as s·A²."""
        op = operators[0]
        dense = op.to_dense()
        np.testing.assert_allclose(square(op, -1).to_dense(), -(dense @ dense), atol=1e-12)
        with pytest.raises(ParameterError):
            square(op, 2)

    def test_graph_norm(self, space):
        """‖e_0‖_A = √2 for the (n+1)-weighted shift."""
        op = WeightedShift(np.arange(1, DIM + 1, dtype=float), 1, space)
        assert graph_norm(op, op.unit(0)) == pytest.approx(np.sqrt(2.0), abs=1e-14)

    @settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        x_re=arrays(np.float64, (DIM,), elements=finite),
        x_im=arrays(np.float64, (DIM,), elements=finite),
        y_re=arrays(np.float64, (DIM,), elements=finite),
    )
    def test_adjoint_consistency(self, operators, x_re, x_im, y_re):
        """⟨Ax, y⟩ = ⟨x, A*y⟩ for every adjoint-capable kind."""
        for op in operators:
            x = op.vector(x_re + 1j * x_im)
            y = op.vector(y_re)
            lhs = apply(op, x).inner(y)
            rhs = x.inner(apply_adjoint(op, y))
            scale = max(1.0, np.linalg.norm(op.to_dense(), 2) * x.norm() * y.norm())
            assert abs(lhs - rhs) <= 1e-12 * scale

    @settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        x=arrays(np.float64, (DIM,), elements=finite),
        y=arrays(np.float64, (DIM,), elements=finite),
        a=finite,
    )
    def test_linearity(self, operators, x, y, a):
        """A(ax + y) = aAx + Ay."""
        for op in operators:
            u, v = op.vector(x), op.vector(y)
            lhs = apply(op, a * u + v).coords
            rhs = a * apply(op, u).coords + apply(op, v).coords
            scale = max(1.0, np.linalg.norm(op.to_dense(), 2) * (abs(a) * u.norm() + v.norm()))
            assert np.linalg.norm(lhs - rhs) <= 1e-12 * scale


class TestDomainExtension:
    """Test operators extended by one domain direction x0 ↦ y0."""

    @pytest.fixture
    def extended(self, space):
        base = DiagonalOperator(np.arange(DIM, dtype=float), space)
        x0 = HVector(np.concatenate([[0.0], 1.0 / np.arange(1, DIM)]), space)
        return DomainExtensionOperator(base, x0, base.unit(0))

    def test_apply_domain_element(self, extended):
        """A(t + mu·x0) = T t + mu·y0."""
        t = extended.unit(3)
        image = apply(extended, DomainElement(t, 2.0))
        expected = 3.0 * extended.unit(3).coords + 2.0 * extended.unit(0).coords
        np.testing.assert_allclose(image.coords, expected)

    def test_embed(self, extended):
        """embed gives t + mu·x0."""
        element = DomainElement(extended.unit(1), 1.0)
        np.testing.assert_allclose(embed(extended, element).coords, extended.unit(1).coords + extended.x0.coords)

    def test_adjoint_unsupported(self, extended):
        """The adjoint and the dense matrix are not representable."""
        with pytest.raises(UnsupportedOperationError):
            apply_adjoint(extended, extended.unit(0))
        with pytest.raises(UnsupportedOperationError):
            to_dense(extended)

    def test_graph_matrices(self, extended):
        """Domain coordinates carry one extra column for x0."""
        embedding, action = graph_matrices(extended)
        assert embedding.shape == (DIM, DIM + 1)
        np.testing.assert_allclose(embedding[:, -1], extended.x0.coords)
        np.testing.assert_allclose(action[:, -1], extended.y0.coords)

    def test_plain_operator_rejects_mu(self, operators, space):
        """A domain element with mu ≠ 0 on a plain operator is unsupported."""
        with pytest.raises(UnsupportedOperationError):
            apply(operators[0], DomainElement(HVector.zeros(space, DIM), 1.0))


class TestClassChecks:
    """Test norm estimation and the operator class checks."""

    def test_norm_estimate_exact_small(self, space):
        """Dense 2-norm is used for small operators."""
        op = DiagonalOperator([3.0, 1.0, 0.5, 0.1, 0.0, -2.0], space)
        assert norm_estimate(op) == pytest.approx(3.0)

    def test_norm_estimate_power_iteration(self):
        """Power iteration finds the dominant singular value of a large diagonal."""
        diagonal = np.linspace(0.0, 1.0, 500)
        diagonal[123] = 7.0
        op = DiagonalOperator(diagonal, make_space_id("big", 500))
        assert norm_estimate(op) == pytest.approx(7.0, rel=1e-8)

    def test_symmetric_and_skew(self, space, rng):
        """Symmetric matrices pass sign +1, skew matrices pass sign −1."""
        b = rng.standard_normal((DIM, DIM))
        symmetric = DenseOperator(b + b.T, space)
        skew = DenseOperator(b - b.T, space)
        assert hermitian_defect(symmetric, 1) <= 1e-14
        assert hermitian_defect(skew, -1) <= 1e-14
        assert hermitian_defect(skew, 1) > 1e-3
        assert hermitian_defect(DenseOperator(b, space), 1) > 1e-3

    def test_psd_violation(self, space, rng):
        """PSD operators have no negative curvature; −I has curvature −1."""
        b = rng.standard_normal((DIM, DIM))
        assert psd_violation(DenseOperator(b @ b.T, space)) >= -1e-12
        assert psd_violation(DiagonalOperator(-np.ones(DIM), space)) == pytest.approx(-1.0)
