#!/usr/bin/env python3
"""
Conjugate Gradient Module

CG from the zero vector with minimal-norm semantics on singular consistent
systems, and the A² drivers that turn a symmetric (or skew-symmetric) problem
Af = g into the positive semidefinite problem A²f = Ag (or −A²f = −Ag).
"""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.linalg

from krylov import build_krylov_basis
from lab_utils import (
    CLASS_CHECK_TOL,
    ORACLE_MAX_DIM,
    PINV_CUTOFF,
    PSD_TOL,
    DimensionError,
    IndefiniteOperatorError,
    OracleUnavailableError,
    ParameterError,
    WrongOperatorClassError,
)
from linop import SCALAR_DTYPE, HVector, OperatorSpec, hermitian_defect, norm_estimate, psd_violation, square

METHOD_PSD = "cg-psd"
METHOD_SELFADJOINT = "selfadjoint-square"
METHOD_SKEWADJOINT = "skewadjoint-square"

MAX_ITER_FACTOR = 4
# ⟨p,Ap⟩ below this fraction of ‖A‖·‖p‖² means p lies in the numerical kernel
ZERO_CURVATURE_TOL = 1e-14


@dataclass
class SolveReport:
    """Result of one CG run."""

    solution: HVector
    residual_norms: np.ndarray
    iterations: int
    converged: bool
    method: str
    final_mismatch: float
    energy_errors: np.ndarray | None = None
    iterates_kept: list[HVector] | None = None
    residuals_kept: list[np.ndarray] | None = None
    stop_reason: str = ""

    def residual_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"iteration": np.arange(len(self.residual_norms)), "residual": self.residual_norms},
        )

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "final_mismatch": self.final_mismatch,
            "residual_norms": [float(r) for r in self.residual_norms],
            "energy_errors": None if self.energy_errors is None else [float(e) for e in self.energy_errors],
            "solution": [[float(c.real), float(c.imag)] for c in self.solution.coords],
        }


def _check_vector(op: OperatorSpec, v: HVector, name: str):
    if v.space_id != op.space_id or v.dim != op.dim:
        raise DimensionError(f"{name} from {v.space_id} does not live in operator space {op.space_id}")


def _conjugate_gradient(
    op: OperatorSpec,
    rhs: np.ndarray,
    max_iter: int,
    monitor: Callable[[np.ndarray, np.ndarray], float],
    target: float,
    scale: float,
    known_solution: np.ndarray | None = None,
    keep_iterates: bool = False,
) -> dict:
    """
    Plain CG recursion from the zero vector.

    Args:
        op: Positive semidefinite operator (checked by the caller)
        rhs: Right-hand side coordinates
        max_iter: Iteration cap
        monitor: Residual measure of (iterate, CG residual) used for stopping
        target: Stop once monitor ≤ target
        scale: ‖op‖ estimate for curvature tests
        known_solution: Coordinates of f* for energy errors
        keep_iterates: Keep every iterate and residual vector

    Returns:
        Dict with x, history, energies, iterates, residuals, iterations, converged, stop_reason
    """
    x = np.zeros_like(rhs, dtype=SCALAR_DTYPE)
    r = np.array(rhs, dtype=SCALAR_DTYPE)
    p = r.copy()
    rr = float(np.vdot(r, r).real)

    def energy(v):
        e = v - known_solution
        return float(np.vdot(e, op.matvec(e)).real)

    history = [monitor(x, r)]
    energies = [energy(x)] if known_solution is not None else None
    iterates = [x.copy()] if keep_iterates else None
    residuals = [r.copy()] if keep_iterates else None

    converged = history[0] <= target
    stop_reason = "converged" if converged else "max_iter"
    iterations = 0

    while not converged and iterations < max_iter:
        if rr == 0:
            stop_reason = "exact"
            break

        Ap = op.matvec(p)
        pAp = float(np.vdot(p, Ap).real)
        p_norm = float(np.linalg.norm(p))
        if pAp < -PSD_TOL * p_norm * float(np.linalg.norm(Ap)):
            raise IndefiniteOperatorError(
                f"Negative curvature ⟨p,Ap⟩ = {pAp:.3e} at iteration {iterations + 1}; "
                "the operator is indefinite. Use solve_selfadjoint for symmetric indefinite systems."
            )
        if pAp <= ZERO_CURVATURE_TOL * scale * p_norm**2:
            stop_reason = "zero_curvature"
            break

        alpha = rr / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        iterations += 1

        history.append(monitor(x, r))
        if energies is not None:
            energies.append(energy(x))
        if keep_iterates:
            iterates.append(x.copy())
            residuals.append(r.copy())

        if history[-1] <= target:
            converged = True
            stop_reason = "converged"
            break

        rr_next = float(np.vdot(r, r).real)
        p = r + (rr_next / rr) * p
        rr = rr_next

    return {
        "x": x,
        "history": np.array(history),
        "energies": None if energies is None else np.array(energies),
        "iterates": iterates,
        "residuals": residuals,
        "iterations": iterations,
        "converged": converged,
        "stop_reason": stop_reason,
    }


def _report(op: OperatorSpec, g: HVector, run: dict, method: str) -> SolveReport:
    solution = HVector(run["x"], op.space_id)
    mismatch_op = op.base if method != METHOD_PSD else op
    mismatch = float(np.linalg.norm(mismatch_op.matvec(run["x"]) - g.coords))
    iterates = None if run["iterates"] is None else [HVector(v, op.space_id) for v in run["iterates"]]
    return SolveReport(
        solution=solution,
        residual_norms=run["history"],
        iterations=run["iterations"],
        converged=run["converged"],
        method=method,
        final_mismatch=mismatch,
        energy_errors=run["energies"],
        iterates_kept=iterates,
        residuals_kept=run["residuals"],
        stop_reason=run["stop_reason"],
    )


def _resolve_max_iter(op: OperatorSpec, max_iter: int | None) -> int:
    if max_iter is None:
        return MAX_ITER_FACTOR * op.dim
    if max_iter < 1:
        raise ParameterError("max_iter must be at least 1")
    return max_iter


def cg_solve(
    op: OperatorSpec,
    g: HVector,
    max_iter: int | None = None,
    rtol: float = 1e-10,
    known_solution: HVector | None = None,
    keep_iterates: bool = False,
) -> SolveReport:
    """
    Solve Af = g by CG from the zero vector.

    On singular consistent systems the iterates stay in range(A) and converge to
    the minimal-norm solution. Iterate N lies in K_N(A,g).

    Args:
        op: Symmetric positive semidefinite operator
        g: Right-hand side
        max_iter: Iteration cap (default 4·dim)
        rtol: Stop when ‖g − A f_N‖ ≤ rtol·‖g‖
        known_solution: f* for energy errors ⟨f_N − f*, A(f_N − f*)⟩
        keep_iterates: Keep every iterate and residual vector

    Returns:
        SolveReport with method cg-psd
    """
    _check_vector(op, g, "Right-hand side")
    if rtol <= 0:
        raise ParameterError("rtol must be positive")

    if hermitian_defect(op, 1) > CLASS_CHECK_TOL:
        raise WrongOperatorClassError("CG needs a symmetric operator; use solve_skewadjoint or a dense solver")
    if psd_violation(op) < -PSD_TOL:
        raise IndefiniteOperatorError(
            "Operator is not positive semidefinite. Use solve_selfadjoint for symmetric indefinite systems."
        )

    known = None
    if known_solution is not None:
        _check_vector(op, known_solution, "Known solution")
        known = np.asarray(known_solution.coords)

    run = _conjugate_gradient(
        op,
        np.asarray(g.coords),
        _resolve_max_iter(op, max_iter),
        monitor=lambda x, r: float(np.linalg.norm(r)),
        target=rtol * g.norm(),
        scale=norm_estimate(op),
        known_solution=known,
        keep_iterates=keep_iterates,
    )
    return _report(op, g, run, METHOD_PSD)


def _solve_squared(
    op: OperatorSpec,
    g: HVector,
    sign: int,
    method: str,
    max_iter: int | None,
    rtol: float,
    known_solution: HVector | None,
    keep_iterates: bool,
) -> SolveReport:
    squared = square(op, sign)
    known = None
    if known_solution is not None:
        _check_vector(op, known_solution, "Known solution")
        known = np.asarray(known_solution.coords)

    g_coords = np.asarray(g.coords)
    run = _conjugate_gradient(
        squared,
        sign * op.matvec(g_coords),
        _resolve_max_iter(op, max_iter),
        monitor=lambda x, r: float(np.linalg.norm(op.matvec(x) - g_coords)),
        target=rtol * g.norm(),
        scale=norm_estimate(op) ** 2,
        known_solution=known,
        keep_iterates=keep_iterates,
    )
    return _report(squared, g, run, method)


def solve_selfadjoint(
    op: OperatorSpec,
    g: HVector,
    max_iter: int | None = None,
    rtol: float = 1e-10,
    known_solution: HVector | None = None,
    keep_iterates: bool = False,
) -> SolveReport:
    """
    Krylov solution of Af = g for symmetric, possibly indefinite or singular A.

    Runs CG on A²f = Ag with A² applied as two applications of A. Convergence is
    judged on the original residual ‖Af − g‖.

    Args:
        op: Symmetric operator
        g: Right-hand side
        max_iter: Iteration cap (default 4·dim)
        rtol: Stop when ‖A f_N − g‖ ≤ rtol·‖g‖
        known_solution: f* for energy errors of the squared system
        keep_iterates: Keep every iterate and residual vector

    Returns:
        SolveReport with method selfadjoint-square
    """
    _check_vector(op, g, "Right-hand side")
    if rtol <= 0:
        raise ParameterError("rtol must be positive")
    defect = hermitian_defect(op, 1)
    if defect > CLASS_CHECK_TOL:
        raise WrongOperatorClassError(f"solve_selfadjoint needs A = A*; relative defect {defect:.3e}")
    return _solve_squared(op, g, 1, METHOD_SELFADJOINT, max_iter, rtol, known_solution, keep_iterates)


def solve_skewadjoint(
    op: OperatorSpec,
    g: HVector,
    max_iter: int | None = None,
    rtol: float = 1e-10,
    known_solution: HVector | None = None,
    keep_iterates: bool = False,
) -> SolveReport:
    """Krylov solution of Af = g for skew-symmetric A via CG on −A²f = −Ag."""
    _check_vector(op, g, "Right-hand side")
    if rtol <= 0:
        raise ParameterError("rtol must be positive")
    defect = hermitian_defect(op, -1)
    if defect > CLASS_CHECK_TOL:
        raise WrongOperatorClassError(f"solve_skewadjoint needs A = −A*; relative defect {defect:.3e}")
    return _solve_squared(op, g, -1, METHOD_SKEWADJOINT, max_iter, rtol, known_solution, keep_iterates)


def minimal_norm_oracle(op: OperatorSpec, g: HVector) -> HVector:
    """
    Minimal-norm least-squares solution A⁺g from a dense SVD.

    Singular values below PINV_CUTOFF·σ_max are dropped.

    Args:
        op: Operator with a dense materialization of dimension ≤ ORACLE_MAX_DIM
        g: Right-hand side

    Returns:
        A⁺g
    """
    _check_vector(op, g, "Right-hand side")
    if op.dim > ORACLE_MAX_DIM:
        raise OracleUnavailableError(f"Dense oracle limited to dimension {ORACLE_MAX_DIM}; got {op.dim}")

    u, s, vh = scipy.linalg.svd(op.to_dense())
    if s[0] == 0:
        return op.zeros()
    keep = s > PINV_CUTOFF * s[0]
    coords = vh[keep].conj().T @ ((u[:, keep].conj().T @ g.coords) / s[keep])
    return op.vector(coords)


def energy_minimality_check(op: OperatorSpec, g: HVector, n_small: int = 6) -> float:
    """
    Compare CG iterates with brute-force energy minimizers over K_N.

    For each N ≤ n_small, minimizes ⟨h − f°, A(h − f°)⟩ over h ∈ K_N through the
    normal equations QᴴAQ c = Qᴴg in the orthonormal Krylov basis.

    Args:
        op: Small symmetric positive semidefinite operator (dimension ≤ 10)
        g: Consistent right-hand side
        n_small: Largest order checked (≤ 6)

    Returns:
        max_N ‖f_N^cg − f_N^bruteforce‖
    """
    if op.dim > 10 or not 1 <= n_small <= 6:
        raise ParameterError("energy_minimality_check is limited to dimension ≤ 10 and N ≤ 6")
    if g.norm() == 0:
        return 0.0

    report = cg_solve(op, g, max_iter=n_small, rtol=1e-15, keep_iterates=True)
    iterates = report.iterates_kept

    worst = 0.0
    for n in range(1, n_small + 1):
        cg_iterate = iterates[min(n, len(iterates) - 1)].coords
        Q = build_krylov_basis(op, g, n).vectors
        compressed = Q.conj().T @ op.matvec(Q)
        coeffs = scipy.linalg.lstsq(compressed, Q.conj().T @ g.coords)[0]
        worst = max(worst, float(np.linalg.norm(cg_iterate - Q @ coeffs)))
    return worst
