#!/usr/bin/env python3
"""
Spectral Measure Module

Atomic scalar spectral measures of symmetric operators relative to a vector,
the functional calculus h ↦ h(A)g through the eigendecomposition, the
L²(μ_g) isometry check, bounded-vector growth rates, and the reciprocal
(Krylov) solution f = A⁻¹g read off the spectrum.
"""

import math
import warnings
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.linalg

from lab_utils import (
    CLASS_CHECK_TOL,
    ORACLE_MAX_DIM,
    DimensionError,
    EvaluationError,
    NotInRangeError,
    OracleUnavailableError,
    ParameterError,
    WrongOperatorClassError,
)
from linop import HVector, OperatorSpec

ATOM_MERGE_GAP = 1e-12
SIGNIFICANT_WEIGHT = 1e-12
ZERO_EIGENVALUE_TOL = 1e-10
RANGE_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Atoms (λ_i, w_i) of μ_g, eigenvalues ascending."""

    eigenvalues: np.ndarray
    weights: np.ndarray
    source: str = ""

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return [(float(lam), float(w)) for lam, w in zip(self.eigenvalues, self.weights, strict=True)]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def moment(self, k: int) -> float:
        """∫ λ^k dμ."""
        return float(np.sum(self.weights * self.eigenvalues**k))

    def support(self, tol: float = SIGNIFICANT_WEIGHT) -> np.ndarray:
        """Eigenvalues whose weight exceeds tol times the total mass."""
        return self.eigenvalues[self.weights > tol * self.total_mass]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"lambda": self.eigenvalues, "weight": self.weights})

    def to_csv(self, output_file: str):
        self.to_frame().to_csv(output_file, index=False)


def _check_vector(op: OperatorSpec, g: HVector):
    if g.space_id != op.space_id or g.dim != op.dim:
        raise DimensionError(f"Vector from {g.space_id} does not live in operator space {op.space_id}")


def symmetric_eigensystem(op: OperatorSpec) -> tuple[np.ndarray, np.ndarray]:
    """
    Eigendecomposition of a symmetric operator from its dense materialization.

    Args:
        op: Symmetric operator of dimension ≤ ORACLE_MAX_DIM

    Returns:
        Tuple (eigenvalues ascending, orthonormal eigenvectors as columns)
    """
    if op.dim > ORACLE_MAX_DIM:
        raise OracleUnavailableError(f"Spectral tools need a dense matrix; dimension {op.dim} > {ORACLE_MAX_DIM}")
    dense = op.to_dense()
    scale = float(np.linalg.norm(dense, 2))
    asymmetry = float(np.linalg.norm(dense - dense.conj().T, 2))
    if asymmetry > CLASS_CHECK_TOL * max(scale, 1e-300):
        raise WrongOperatorClassError(f"Operator is not symmetric (‖A − A*‖ = {asymmetry:.3e})")
    eigenvalues, eigenvectors = scipy.linalg.eigh((dense + dense.conj().T) / 2)
    return eigenvalues, eigenvectors


def _merge_atoms(eigenvalues: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge eigenvalues closer than ATOM_MERGE_GAP·spread, summing their weights."""
    if len(eigenvalues) <= 1:
        return eigenvalues, weights
    gap = ATOM_MERGE_GAP * (eigenvalues[-1] - eigenvalues[0])
    breaks = np.flatnonzero(np.diff(eigenvalues) > gap) + 1
    merged_lam, merged_w = [], []
    for lam, w in zip(np.split(eigenvalues, breaks), np.split(weights, breaks), strict=True):
        mass = w.sum()
        merged_lam.append(float(np.average(lam, weights=w)) if mass > 0 else float(lam.mean()))
        merged_w.append(float(mass))
    return np.array(merged_lam), np.array(merged_w)


def spectral_measure(op: OperatorSpec, g: HVector, source: str = "") -> SpectralMeasure:
    """
    Scalar spectral measure μ_g of a symmetric operator.

    Args:
        op: Symmetric operator
        g: Vector
        source: Label recorded on the measure (operator id and vector id)

    Returns:
        SpectralMeasure with weights w_i = |⟨v_i, g⟩|², merged within 1e-12·spread
    """
    _check_vector(op, g)
    eigenvalues, eigenvectors = symmetric_eigensystem(op)
    weights = np.abs(eigenvectors.conj().T @ g.coords) ** 2
    eigenvalues, weights = _merge_atoms(eigenvalues, weights)
    return SpectralMeasure(eigenvalues, weights, source)


def measure_moments(measure: SpectralMeasure, k_max: int) -> np.ndarray:
    """Moments ∫ λ^k dμ for k = 0..k_max."""
    return np.array([measure.moment(k) for k in range(k_max + 1)])


def moment_defects(op: OperatorSpec, g: HVector, measure: SpectralMeasure, k_max: int = 6) -> float:
    """
    Largest relative mismatch between Σ w_i λ_i^k and ⟨g, A^k g⟩ for k ≤ k_max.

    Each mismatch is divided by ‖g‖²·max(1, max|λ|)^k.
    """
    _check_vector(op, g)
    radius = max(1.0, float(np.abs(measure.eigenvalues).max()))
    mass = g.norm() ** 2
    if mass == 0:
        return 0.0

    worst = 0.0
    power = np.array(g.coords)
    for k, expected in enumerate(measure_moments(measure, k_max)):
        observed = np.vdot(g.coords, power)
        worst = max(worst, abs(observed - expected) / (mass * radius**k))
        power = op.matvec(power)
    return float(worst)


@dataclass(frozen=True)
class GrowthSeries:
    frame: pd.DataFrame
    truncated: bool
    reason: str = ""


def bounded_vector_growth(op: OperatorSpec, g: HVector, k_max: int) -> GrowthSeries:
    """
    Growth rates r_k = ‖A^k g‖^{1/k} for k = 1..k_max.

    Powers are taken by repeated application with renormalization, tracking
    log ‖A^k g‖, so factorial-size norms never overflow.

    Args:
        op: Operator
        g: Nonzero vector
        k_max: Largest power

    Returns:
        GrowthSeries with columns k, growth; truncated when A^k g vanishes or
        the log-norm leaves the floating-point range
    """
    _check_vector(op, g)
    if k_max < 1:
        raise ParameterError("k_max must be at least 1")
    g_norm = g.norm()
    if g_norm == 0:
        raise ParameterError("Growth rates need a nonzero vector")

    log_norm = math.log(g_norm)
    v = np.asarray(g.coords) / g_norm
    rows = []
    truncated, reason = False, ""
    for k in range(1, k_max + 1):
        v = op.matvec(v)
        v_norm = float(np.linalg.norm(v))
        if v_norm == 0:
            truncated, reason = True, f"A^{k} g vanishes (window edge reached)"
            break
        log_norm += math.log(v_norm)
        growth = math.exp(log_norm / k) if log_norm / k < 700 else math.inf
        if not math.isfinite(log_norm) or not math.isfinite(growth):
            truncated, reason = True, f"log-norm overflow at k={k}"
            break
        v = v / v_norm
        rows.append({"k": k, "growth": growth})

    if truncated:
        warnings.warn(f"Growth series truncated: {reason}", RuntimeWarning, stacklevel=2)
    return GrowthSeries(pd.DataFrame(rows, columns=["k", "growth"]), truncated, reason)


def _evaluate(h: Callable, eigenvalues: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        try:
            values = np.asarray(h(eigenvalues), dtype=complex)
            return np.array(np.broadcast_to(values, eigenvalues.shape))
        except (ArithmeticError, TypeError, ValueError):
            pass

        values = np.empty(eigenvalues.shape, dtype=complex)
        for i, lam in enumerate(eigenvalues):
            try:
                values[i] = complex(h(float(lam)))
            except (ArithmeticError, TypeError, ValueError):
                values[i] = np.nan
        return values


def _apply_in_eigenbasis(
    eigenvalues: np.ndarray,
    eigenvectors: np.ndarray,
    g: HVector,
    h: Callable,
    weight_tol: float,
) -> HVector:
    coeffs = eigenvectors.conj().T @ g.coords
    weights = np.abs(coeffs) ** 2
    values = _evaluate(h, eigenvalues)

    undefined = ~np.isfinite(values)
    significant = weights > weight_tol * max(g.norm() ** 2, 1e-300)
    if np.any(undefined & significant):
        bad = eigenvalues[undefined & significant]
        raise EvaluationError(f"Function undefined at weighted atoms λ = {bad[:5].tolist()}")
    values[undefined] = 0.0
    return HVector(eigenvectors @ (values * coeffs), g.space_id)


def apply_function(
    op: OperatorSpec,
    g: HVector,
    h: Callable,
    weight_tol: float = SIGNIFICANT_WEIGHT,
) -> HVector:
    """
    Functional calculus h(A)g = Σ_i h(λ_i)⟨v_i, g⟩ v_i.

    Args:
        op: Symmetric operator
        g: Vector
        h: Function of a real argument; called on the eigenvalue array, or per
           eigenvalue when it does not vectorize
        weight_tol: Atoms with weight ≤ weight_tol·‖g‖² may be undefined for h

    Returns:
        h(A)g
    """
    _check_vector(op, g)
    eigenvalues, eigenvectors = symmetric_eigensystem(op)
    return _apply_in_eigenbasis(eigenvalues, eigenvectors, g, h, weight_tol)


def horner_apply(op: OperatorSpec, g: HVector, coeffs: np.ndarray) -> HVector:
    """p(A)g by Horner's rule with operator applications; coeffs highest degree first."""
    v = coeffs[0] * np.asarray(g.coords)
    for c in coeffs[1:]:
        v = op.matvec(v) + c * g.coords
    return HVector(v, g.space_id)


def polynomial_discrepancy(op: OperatorSpec, g: HVector, coeffs: np.ndarray, measure: SpectralMeasure) -> float:
    """
    Relative gap between ‖p(A)g‖ and ‖p‖ in L²(μ_g).

    Returns:
        |‖p(A)g‖ − (Σ w_i |p(λ_i)|²)^{1/2}| / max(1, (Σ w_i |p(λ_i)|²)^{1/2})
    """
    lhs = horner_apply(op, g, coeffs).norm()
    rhs = math.sqrt(float(np.sum(measure.weights * np.abs(np.polyval(coeffs, measure.eigenvalues)) ** 2)))
    return abs(lhs - rhs) / max(1.0, rhs)


def isometry_check(op: OperatorSpec, g: HVector, degree_max: int = 10, trials: int = 50, seed: int = 0) -> float:
    """
    Check ‖h(A)g‖ = ‖h‖_{L²(μ_g)} on random polynomials.

    The left side is computed by Horner with operator applications, the right
    side on the atoms of μ_g.

    Args:
        op: Symmetric operator
        g: Vector
        degree_max: Largest polynomial degree
        trials: Number of random polynomials (coefficients uniform in [−1, 1])
        seed: RNG seed

    Returns:
        Largest relative discrepancy over the trials
    """
    measure = spectral_measure(op, g)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        degree = int(rng.integers(0, degree_max + 1))
        coeffs = rng.uniform(-1.0, 1.0, degree + 1)
        worst = max(worst, polynomial_discrepancy(op, g, coeffs, measure))
    return worst


def krylov_solution_via_spectrum(op: OperatorSpec, g: HVector) -> HVector:
    """
    Solution f = A⁻¹g computed as h(A)g with h(λ) = 1/λ.

    Args:
        op: Symmetric operator, injective on the support of μ_g
        g: Right-hand side

    Returns:
        f with ‖Af − g‖ ≤ 1e-8·‖g‖

    Raises:
        NotInRangeError: If an atom at numerical zero carries significant weight,
            or the residual check fails
    """
    _check_vector(op, g)
    g_mass = g.norm() ** 2
    if g_mass == 0:
        return op.zeros()

    eigenvalues, eigenvectors = symmetric_eigensystem(op)
    weights = np.abs(eigenvectors.conj().T @ g.coords) ** 2
    spread = max(float(eigenvalues[-1] - eigenvalues[0]), float(np.abs(eigenvalues).max()))
    near_zero = np.abs(eigenvalues) <= ZERO_EIGENVALUE_TOL * spread
    if np.any(near_zero & (weights > SIGNIFICANT_WEIGHT * g_mass)):
        raise NotInRangeError("Datum has significant weight at a zero eigenvalue; ∫λ⁻² dμ_g diverges")

    def reciprocal(lam):
        return np.where(np.abs(lam) > ZERO_EIGENVALUE_TOL * spread, 1.0 / np.where(lam == 0, 1.0, lam), np.nan)

    f = _apply_in_eigenbasis(eigenvalues, eigenvectors, g, reciprocal, SIGNIFICANT_WEIGHT)
    residual = float(np.linalg.norm(op.matvec(np.asarray(f.coords)) - g.coords))
    if residual > RANGE_RESIDUAL_TOL * math.sqrt(g_mass):
        raise NotInRangeError(f"Spectral solution misses the datum: ‖Af − g‖ = {residual:.3e}")
    return f


def measure_refinement(build: Callable[[int], tuple[OperatorSpec, HVector]], sizes: list[int]) -> pd.DataFrame:
    """
    Atom tables of μ_g for a family of truncations.

    Args:
        build: Maps a truncation size to (operator, vector)
        sizes: Truncation sizes

    Returns:
        DataFrame with columns M, lambda, weight (raw sequences, no extrapolation)
    """
    frames = []
    for size in sizes:
        op, g = build(size)
        frame = spectral_measure(op, g).to_frame()
        frame.insert(0, "M", size)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)
