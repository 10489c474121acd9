#!/usr/bin/env python3
"""
Operator Gallery Module

Finite truncations of the worked (A, g) pairs: multiplication by z on a disk,
left and right shifts, the Volterra operator, the creation operator, the
(n+1)-weighted shift, the Krylov escape construction, a non-injective direct
sum and a skew-symmetric rotation family. Each problem carries its known
solution (when there is one) and a list of machine-checkable facts.

Problems are addressable by string id through GALLERY / build_problem.
"""

import inspect
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.special

from cg import solve_selfadjoint, solve_skewadjoint
from krylov import (
    build_krylov_basis,
    core_condition_decay,
    distance_series,
    distance_to_image,
    distance_to_krylov,
    escape_indicator,
    kernel_inclusion_defect,
    krylov_intersection,
    reducibility_defects,
)
from lab_utils import DEFAULT_BOUNDARY_MARGIN, KrylovLabError, ParameterError
from linop import (
    DenseOperator,
    DiagonalOperator,
    DomainElement,
    DomainExtensionOperator,
    HVector,
    OperatorSpec,
    QuadratureIntegralOperator,
    WeightedShift,
    apply,
    graph_norm,
    make_space_id,
)
from spectral import krylov_solution_via_spectrum

VOLTERRA_PANEL_POINTS = 8


@dataclass(frozen=True)
class FactResult:
    observed: float
    expected: str
    passed: bool


@dataclass(frozen=True)
class Fact:
    """A machine-checkable claim about a gallery problem."""

    fact_id: str
    claim: str
    reference: str
    check: Callable[["GalleryProblem"], FactResult]


@dataclass(frozen=True, eq=False)
class GalleryProblem:
    """An operator/datum pair with its known solution and facts."""

    problem_id: str
    op: OperatorSpec
    g: HVector
    known_solution: HVector | DomainElement | None
    truncation: int
    reference: str
    params: dict
    facts: tuple[Fact, ...] = ()
    origin: int = 0
    interior: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def index(self, n: int) -> int:
        """Window position of the physical basis index n."""
        return n + self.origin

    def solution_residual(self) -> float:
        """‖A f − g‖ over the interior indices; 0 when there is no known solution."""
        if self.known_solution is None:
            return 0.0
        residual = apply(self.op, self.known_solution).coords - self.g.coords
        if self.interior is not None:
            residual = residual[self.interior]
        return float(np.linalg.norm(residual))


def _within(observed: float, target: float, tol: float) -> FactResult:
    return FactResult(float(observed), f"{target:.10g} ± {tol:.1e}", bool(abs(observed - target) <= tol))


def _at_most(observed: float, bound: float) -> FactResult:
    return FactResult(float(observed), f"≤ {bound:.1e}", bool(observed <= bound))


def _at_least(observed: float, bound: float) -> FactResult:
    return FactResult(float(observed), f"≥ {bound:.10g}", bool(observed >= bound))


def _equals(observed: int, target: int) -> FactResult:
    return FactResult(float(observed), f"= {target}", bool(observed == target))


def _nonincreasing(values: np.ndarray, slack: float = 1e-12) -> bool:
    return bool(np.all(np.diff(values) <= slack))


def check_facts(problem: GalleryProblem) -> pd.DataFrame:
    """
    Run every fact attached to a problem.

    Args:
        problem: Gallery problem

    Returns:
        DataFrame with one row per fact: problem, fact_id, claim, reference,
        observed, expected, status (PASS/FAIL). A check that raises a
        krylovlab error is a FAIL row.
    """
    rows = []
    for fact in problem.facts:
        try:
            result = fact.check(problem)
        except KrylovLabError as e:
            result = FactResult(math.nan, f"error: {e}", False)
        rows.append(
            {
                "problem": problem.problem_id,
                "fact_id": fact.fact_id,
                "claim": fact.claim,
                "reference": fact.reference,
                "observed": result.observed,
                "expected": result.expected,
                "status": "PASS" if result.passed else "FAIL",
            }
        )
    return pd.DataFrame(rows, columns=["problem", "fact_id", "claim", "reference", "observed", "expected", "status"])


# --- multiplication by z on the disk |z - 2| < 1 -------------------------------------------

MULTIPLICATION_REF = "Example: multiplication by z on L2 of the disk |z-2| < 1 (power-series solvability)"


def disk_quadrature(n_grid: int, center: complex = 2.0, radius: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """
    Polar tensor rule on a disk: Gauss-Legendre in radius, trapezoid in angle.

    Args:
        n_grid: Radial nodes; the angular grid uses 4·n_grid points
        center: Disk center
        radius: Disk radius

    Returns:
        Tuple (complex nodes, positive weights) with Σ weights = area
    """
    x, w = np.polynomial.legendre.leggauss(n_grid)
    r = radius * (x + 1) / 2
    w_r = radius * w / 2
    n_theta = 4 * n_grid
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(r, theta, indexing="ij")
    wr, _ = np.meshgrid(w_r, theta, indexing="ij")
    nodes = center + rr * np.exp(1j * tt)
    weights = rr * wr * (2 * np.pi / n_theta)
    return nodes.ravel(), weights.ravel()


def _multiplication_residual(problem):
    return _at_most(problem.solution_residual(), 1e-12)


def _multiplication_norm(problem):
    observed = problem.known_solution.norm() ** 2
    return _within(observed, math.pi * math.log(4 / 3), 1e-10)


def _multiplication_decay(problem):
    orders = list(range(5, 26))
    basis = build_krylov_basis(problem.op, problem.g, orders[-1])
    distances = distance_series(basis, problem.known_solution, orders)["distance"].to_numpy()
    slope = np.polyfit(orders, np.log(distances), 1)[0]
    return _at_most(slope, -0.60)


def multiplication_annulus(n_grid: int = 20) -> GalleryProblem:
    """
    Multiplication by z on L²(Ω), Ω = {|z − 2| < 1}, with g = 1 and f = 1/z.

    The disk is discretized by the polar tensor rule with √weight folded into
    the coordinates, so the operator is exactly diagonal.

    Args:
        n_grid: Radial nodes (≥ 8); dimension is 4·n_grid²

    Returns:
        GalleryProblem
    """
    if n_grid < 8:
        raise ParameterError("n_grid must be at least 8")
    nodes, weights = disk_quadrature(n_grid)
    space = make_space_id("L2-disk", len(nodes))
    sqrt_w = np.sqrt(weights)

    facts = (
        Fact("solves", "M_z f = g with f = 1/z", MULTIPLICATION_REF, _multiplication_residual),
        Fact("solution-norm", "‖f‖² = π ln(4/3)", MULTIPLICATION_REF, _multiplication_norm),
        Fact(
            "geometric-decay",
            "log dist(f, K_N) slope ≤ −0.60 over N = 5..25 (Taylor ratio 1/2)",
            MULTIPLICATION_REF,
            _multiplication_decay,
        ),
    )
    return GalleryProblem(
        problem_id="multiplication",
        op=DiagonalOperator(nodes, space),
        g=HVector(sqrt_w, space),
        known_solution=HVector(sqrt_w / nodes, space),
        truncation=len(nodes),
        reference=MULTIPLICATION_REF,
        params={"n_grid": n_grid},
        facts=facts,
        extras={"nodes": nodes, "weights": weights},
    )


# --- left shift on l2(N0) ------------------------------------------------------------------

LEFT_SHIFT_REF = "Example: left shift on l2(N0) with g = Σ e_n/n!, e_0 in the Krylov closure"


def _inverse_factorials(size: int) -> np.ndarray:
    values = np.ones(size)
    for n in range(1, size):
        values[n] = values[n - 1] / n
    return values


def _left_shift_norm(problem):
    return _within(problem.g.norm() ** 2, float(scipy.special.iv(0, 2.0)), 1e-6)


def _left_shift_spot(problem):
    v = problem.g
    for _ in range(3):
        v = apply(problem.op, v)
    observed = (6.0 * v - problem.op.unit(0)).norm()
    return _within(observed, 0.2551, 1e-3)


def _left_shift_interior(problem):
    return _at_most(problem.solution_residual(), 1e-12)


def _left_shift_closure(problem):
    orders = list(range(1, min(80, problem.truncation) + 1))
    basis = build_krylov_basis(problem.op, problem.g, orders[-1])
    distances = distance_series(basis, problem.known_solution, orders)["distance"].to_numpy()
    result = _at_most(float(distances.min()), 1e-6)
    return FactResult(result.observed, result.expected, result.passed and _nonincreasing(distances))


def left_shift_problem(M: int = 100) -> GalleryProblem:
    """
    Left shift L e_n = e_{n−1} on the window {0..M−1}, g_n = 1/n!, f_n = 1/(n−1)!.

    Args:
        M: Window size (≥ 4)

    Returns:
        GalleryProblem; A f = g on indices 0..M−2
    """
    if M < 4:
        raise ParameterError("M must be at least 4")
    space = make_space_id("l2-N0", M)
    g = _inverse_factorials(M)
    f = np.zeros(M)
    f[1:] = g[:-1]

    facts = (
        Fact("g-norm", "‖g‖² = I_0(2) ≈ 2.2795853", LEFT_SHIFT_REF, _left_shift_norm),
        Fact("spot-value", "‖3!·L³g − e_0‖ ≈ 0.2551", LEFT_SHIFT_REF, _left_shift_spot),
        Fact("solves-interior", "L f = g on interior indices", LEFT_SHIFT_REF, _left_shift_interior),
        Fact(
            "krylov-solution",
            "dist(f, K_N) nonincreasing and below 1e-6 for some N ≤ 80",
            LEFT_SHIFT_REF,
            _left_shift_closure,
        ),
    )
    return GalleryProblem(
        problem_id="left-shift",
        op=WeightedShift(np.ones(M), -1, space),
        g=HVector(g, space),
        known_solution=HVector(f, space),
        truncation=M,
        reference=LEFT_SHIFT_REF,
        params={"M": M},
        facts=facts,
        interior=np.arange(M - 1),
    )


# --- right shift on l2(Z) ------------------------------------------------------------------

RIGHT_SHIFT_REF = "Example: right shift on l2(Z), f = e_1 solves Rf = e_2 but is not a Krylov solution"


def right_shift_orders(M: int) -> int:
    """Largest Krylov order that keeps K_N clear of the window's boundary margin."""
    return max(1, min(100, M - DEFAULT_BOUNDARY_MARGIN - 2))


def _right_shift_distance(problem):
    n_max = right_shift_orders(problem.params["M"])
    basis = build_krylov_basis(problem.op, problem.g, n_max)
    distances = distance_series(basis, problem.known_solution, list(range(1, n_max + 1)))["distance"]
    return _at_most(float(np.abs(distances - 1.0).max()), 1e-12)


def _right_shift_basis(problem):
    basis = build_krylov_basis(problem.op, problem.g, 3)
    expected = np.zeros((problem.op.dim, 3))
    for k in range(3):
        expected[problem.index(2 + k), k] = 1.0
    return _at_most(float(np.abs(basis.vectors - expected).max()), 1e-15)


def _right_shift_intersection(problem):
    basis = build_krylov_basis(problem.op, problem.g, right_shift_orders(problem.params["M"]))
    result = krylov_intersection(problem.op, basis)
    smallest = float(result.angles[0]) if len(result.angles) else math.pi / 2
    return FactResult(float(result.dim), "= 1 with smallest angle < 1e-8", result.dim == 1 and smallest < 1e-8)


def _right_shift_reducibility(problem):
    basis = build_krylov_basis(problem.op, problem.g, right_shift_orders(problem.params["M"]))
    return _within(reducibility_defects(problem.op, basis).d2, 1.0, 1e-12)


def right_shift_problem(M: int = 256) -> GalleryProblem:
    """
    Right shift on the ℓ²(Z) window {−M..M}, g = e_2, f = e_1.

    Window position n + M holds the physical index n.

    Args:
        M: Half-width of the window (≥ 4)

    Returns:
        GalleryProblem
    """
    if M < 4:
        raise ParameterError("M must be at least 4")
    size = 2 * M + 1
    space = make_space_id("l2-Z", size)
    op = WeightedShift(np.ones(size), 1, space)

    facts = (
        Fact("krylov-basis", "K_3 basis is e_2, e_3, e_4", RIGHT_SHIFT_REF, _right_shift_basis),
        Fact("not-krylov-solution", "dist(e_1, K_N) = 1 for every N", RIGHT_SHIFT_REF, _right_shift_distance),
        Fact(
            "krylov-intersection",
            "K ∩ R(K^⊥) = span{e_2} (dimension 1)",
            RIGHT_SHIFT_REF,
            _right_shift_intersection,
        ),
        Fact("not-reduced", "‖P_K R (1−P_K)‖ = 1", RIGHT_SHIFT_REF, _right_shift_reducibility),
    )
    return GalleryProblem(
        problem_id="right-shift",
        op=op,
        g=op.unit(M + 2),
        known_solution=op.unit(M + 1),
        truncation=size,
        reference=RIGHT_SHIFT_REF,
        params={"M": M},
        facts=facts,
        origin=M,
    )


# --- Volterra operator on L2[0,1] ----------------------------------------------------------

VOLTERRA_REF = "Example: Volterra operator on L2[0,1], Krylov space of g = x²/2 is dense"


def volterra_nystrom(n_quad: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Composite Gauss-Legendre Nyström matrix for V f(x) = ∫_0^x f(t) dt.

    Full panels left of a node use the panel weights; the partial panel
    containing the node integrates the panel's Lagrange interpolant.

    Args:
        n_quad: Total nodes, a multiple of the 8-point panel size

    Returns:
        Tuple (nodes, weights, nodal matrix)
    """
    p = VOLTERRA_PANEL_POINTS
    panels = n_quad // p
    width = 1.0 / panels
    xi, omega = np.polynomial.legendre.leggauss(p)

    # cumulative[i, m] = ∫_{-1}^{xi_i} ℓ_m(s) ds for the Lagrange basis ℓ_m on the panel nodes
    vander = np.polynomial.legendre.legvander(xi, p - 1)
    antiderivatives = np.polynomial.legendre.legint(np.eye(p), lbnd=-1, axis=0)
    cumulative = np.polynomial.legendre.legval(xi, antiderivatives).T @ np.linalg.inv(vander)

    nodes = np.concatenate([(k + (xi + 1) / 2) * width for k in range(panels)])
    weights = np.tile(omega * width / 2, panels)

    nodal = np.zeros((n_quad, n_quad))
    for k in range(panels):
        rows = slice(k * p, (k + 1) * p)
        nodal[rows, : k * p] = weights[: k * p]
        nodal[rows, rows] = cumulative * width / 2
    return nodes, weights, nodal


def volterra_distance_formula(N: int) -> float:
    """Exact dist(x, span{x², …, x^{N+1}}) in L²[0,1]."""
    return 6.0 / (math.sqrt(3.0) * (N + 1) * (N + 2) * (N + 3))


def _volterra_residual(problem):
    return _at_most(problem.solution_residual(), 1e-8)


def _volterra_norm(problem):
    return _within(problem.g.norm() ** 2, 1 / 20, 1e-12)


def _volterra_density(problem):
    orders = list(range(1, 61))
    basis = build_krylov_basis(problem.op, problem.g, orders[-1])
    distances = distance_series(basis, problem.known_solution, orders)["distance"].to_numpy()
    result = _at_most(float(distances.min()), 1e-3)
    return FactResult(result.observed, result.expected, result.passed and _nonincreasing(distances))


def _volterra_formula(problem):
    orders = list(range(1, 11))
    basis = build_krylov_basis(problem.op, problem.g, orders[-1])
    distances = distance_series(basis, problem.known_solution, orders)["distance"].to_numpy()
    exact = np.array([volterra_distance_formula(n) for n in orders])
    return _at_most(float(np.abs(distances - exact).max()), 1e-8)


def volterra_problem(n_quad: int = 256) -> GalleryProblem:
    """
    Volterra operator V f(x) = ∫_0^x f, g = x²/2, f = x on L²[0,1].

    Args:
        n_quad: Quadrature nodes (multiple of 8)

    Returns:
        GalleryProblem
    """
    if n_quad < VOLTERRA_PANEL_POINTS or n_quad % VOLTERRA_PANEL_POINTS:
        raise ParameterError(f"n_quad must be a positive multiple of {VOLTERRA_PANEL_POINTS}")
    nodes, weights, nodal = volterra_nystrom(n_quad)
    space = make_space_id("L2-0-1", n_quad)
    sqrt_w = np.sqrt(weights)

    facts = (
        Fact("solves", "‖Vf − g‖ within quadrature error", VOLTERRA_REF, _volterra_residual),
        Fact("g-norm", "‖g‖² = 1/20", VOLTERRA_REF, _volterra_norm),
        Fact("dense-krylov", "dist(f, K_N) nonincreasing, below 1e-3 for some N ≤ 60", VOLTERRA_REF, _volterra_density),
        Fact(
            "distance-formula",
            "dist(f, K_N) = 6/(√3 (N+1)(N+2)(N+3)) for N ≤ 10",
            VOLTERRA_REF,
            _volterra_formula,
        ),
    )
    return GalleryProblem(
        problem_id="volterra",
        op=QuadratureIntegralOperator(nodes, weights, nodal, space),
        g=HVector(sqrt_w * nodes**2 / 2, space),
        known_solution=HVector(sqrt_w * nodes, space),
        truncation=n_quad,
        reference=VOLTERRA_REF,
        params={"n_quad": n_quad},
        facts=facts,
        extras={"nodes": nodes, "weights": weights},
    )


# --- creation operator in the Hermite basis ------------------------------------------------

CREATION_REF = "Krylov escape and reducibility: quantum creation operator, K closure = span{ψ_0}^⊥"


def creation_orders(M: int) -> int:
    return max(1, min(40, M - DEFAULT_BOUNDARY_MARGIN - 2))


def _creation_distance(problem):
    n_max = creation_orders(problem.truncation)
    basis = build_krylov_basis(problem.op, problem.g, n_max)
    distances = distance_series(basis, problem.op.unit(0), list(range(1, n_max + 1)))["distance"]
    return _at_most(float(np.abs(distances - 1.0).max()), 1e-12)


def _creation_image(problem):
    basis = build_krylov_basis(problem.op, problem.g, creation_orders(problem.truncation))
    return _within(distance_to_image(problem.op, basis, problem.op.unit(1)), 1.0, 1e-12)


def _creation_weight(problem):
    return _within(apply(problem.op, problem.op.unit(3)).norm(), 2.0, 1e-14)


def _creation_intersection(problem):
    basis = build_krylov_basis(problem.op, problem.g, min(20, creation_orders(problem.truncation)))
    return _equals(krylov_intersection(problem.op, basis).dim, 1)


def creation_hermite(M: int = 64) -> GalleryProblem:
    """
    Creation operator A ψ_n = √(n+1) ψ_{n+1} on M Hermite functions, g = ψ_1.

    The unique solution f = ψ_0 of Af = g is orthogonal to the Krylov space.

    Args:
        M: Number of Hermite functions (≥ 4)

    Returns:
        GalleryProblem
    """
    if M < 4:
        raise ParameterError("M must be at least 4")
    space = make_space_id("hermite", M)
    op = WeightedShift(np.sqrt(np.arange(1, M + 1)), 1, space)

    facts = (
        Fact("orthogonal-ground-state", "dist(ψ_0, K_N) = 1 for every N", CREATION_REF, _creation_distance),
        Fact("image-closure", "dist(ψ_1, span(A K_N)) = 1", CREATION_REF, _creation_image),
        Fact("weight", "‖A ψ_3‖ = 2", CREATION_REF, _creation_weight),
        Fact("krylov-intersection", "K ∩ A(K^⊥) = span{ψ_1}", CREATION_REF, _creation_intersection),
    )
    return GalleryProblem(
        problem_id="creation",
        op=op,
        g=op.unit(1),
        known_solution=op.unit(0),
        truncation=M,
        reference=CREATION_REF,
        params={"M": M},
        facts=facts,
    )


# --- weighted shift A e_n = (n+1) e_{n+1} --------------------------------------------------

WEIGHTED_SHIFT_REF = "Krylov-core condition example: A e_n = (n+1) e_{n+1}, g = e_0"


def core_test_vector(op: OperatorSpec) -> HVector:
    """x with x_0 = 0 and x_n = 1/(n+1)² for n ≥ 1."""
    coords = 1.0 / (np.arange(op.dim) + 1.0) ** 2
    coords[0] = 0.0
    return op.vector(coords)


def core_orders(M: int) -> list[int]:
    """
    Krylov orders for the core-condition series, all below the window size.

    At N = M the Krylov space fills the window and the distance is 0; just below
    it the dropped edge coordinate A e_{M−1} makes the distance artificially small.
    """
    return list(range(5, M, 5)) or [M - 1]


def core_distance_oracle(op: OperatorSpec, x: HVector, N: int) -> float:
    """
    Graph-norm distance from x to span{e_0, …, e_{N−1}} by a dense least-squares solve.

    For the (n+1)-weighted shift with g = e_0 this span is K_N, so the value
    checks core_condition_decay without going through the Arnoldi basis.
    """
    dense = op.to_dense()
    stacked = np.vstack([np.eye(op.dim)[:, :N], dense[:, :N]])
    rhs = np.concatenate([x.coords, dense @ x.coords])
    coeffs = scipy.linalg.lstsq(stacked, rhs)[0]
    return float(np.linalg.norm(rhs - stacked @ coeffs))


def core_tail_bound(op: OperatorSpec, x: HVector, N: int) -> float:
    """Graph norm of x with its first N coordinates removed, an upper bound for the distance to K_N."""
    tail = np.array(x.coords)
    tail[:N] = 0.0
    return graph_norm(op, op.vector(tail))


def _weighted_basis(problem):
    basis = build_krylov_basis(problem.op, problem.g, 4)
    return _at_most(float(np.abs(np.abs(np.diag(basis.vectors[:4, :])) - 1.0).max()), 1e-12)


def _weighted_graph_norm(problem):
    return _within(graph_norm(problem.op, problem.op.unit(0)), math.sqrt(2.0), 1e-14)


def _weighted_core_decay(problem):
    op, x = problem.op, problem.extras["core_vector"]
    orders = core_orders(problem.truncation)
    decay = core_condition_decay(op, problem.g, x, orders)["graph_distance"].to_numpy()
    oracle = np.array([core_distance_oracle(op, x, n) for n in orders])
    bounds = np.array([core_tail_bound(op, x, n) for n in orders])
    gap = float(np.abs(decay - oracle).max())
    result = _at_most(gap, 1e-10)
    decreasing = bool(np.all(np.diff(decay) < 0))
    bounded = bool(np.all(decay <= bounds * (1.0 + 1e-12)))
    return FactResult(result.observed, result.expected, result.passed and decreasing and bounded)


def weighted_shift_np1(M: int = 40) -> GalleryProblem:
    """
    Weighted shift A e_n = (n+1) e_{n+1} on the window {0..M−1}, g = e_0.

    Args:
        M: Window size (≥ 4)

    Returns:
        GalleryProblem; extras["core_vector"] holds the core-condition test vector
    """
    if M < 4:
        raise ParameterError("M must be at least 4")
    space = make_space_id("l2-N0", M)
    op = WeightedShift(np.arange(1, M + 1, dtype=float), 1, space)

    facts = (
        Fact("krylov-basis", "K_4 = span{e_0, e_1, e_2, e_3}", WEIGHTED_SHIFT_REF, _weighted_basis),
        Fact("graph-norm", "‖e_0‖_A = √2", WEIGHTED_SHIFT_REF, _weighted_graph_norm),
        Fact(
            "core-condition",
            "graph-norm distance of x_n = 1/(n+1)² to K_N decreases strictly below the window size and matches the dense oracle",
            WEIGHTED_SHIFT_REF,
            _weighted_core_decay,
        ),
    )
    return GalleryProblem(
        problem_id="weighted-shift",
        op=op,
        g=op.unit(0),
        known_solution=None,
        truncation=M,
        reference=WEIGHTED_SHIFT_REF,
        params={"M": M},
        facts=facts,
        extras={"core_vector": core_test_vector(op)},
    )


# --- Krylov escape -------------------------------------------------------------------------

ESCAPE_REF = "Krylov escape construction: T' self-adjoint with cyclic g', A x_0 := e_0"


def _escape_rule(problem):
    image = apply(problem.op, DomainElement(problem.op.zeros(), 1.0))
    return _at_most((image - problem.op.unit(0)).norm(), 1e-15)


def _escape_indicator(problem):
    basis = build_krylov_basis(problem.op, problem.g, problem.params["M"])
    result = escape_indicator(problem.op, basis, problem.extras["escape_candidate"])
    return _within(result.indicator, 1.0, 1e-12)


def _escape_membership(problem):
    basis = build_krylov_basis(problem.op, problem.g, problem.params["M"])
    x0 = problem.op.x0
    return _at_most(distance_to_krylov(basis, x0), 1e-6)


def escape_operator(M: int = 30, decay: float = 0.5) -> GalleryProblem:
    """
    Escape construction on span{e_0} ⊕ C^M.

    T = 0 ⊕ diag(1..M), g = 0 ⊕ (decay^n), x_0 = 0 ⊕ (1/n), and the extended
    operator sends x_0 to y_0 = e_0, a vector orthogonal to every Krylov vector.

    Args:
        M: Dimension of H' (≥ 1)
        decay: Ratio of the geometric datum, in (0, 1)

    Returns:
        GalleryProblem; extras["escape_candidate"] is the DomainElement x_0
    """
    if M < 1:
        raise ParameterError("M must be at least 1")
    if not 0 < decay < 1:
        raise ParameterError(f"decay must lie in (0, 1), got {decay}")

    space = make_space_id("escape", M + 1)
    n = np.arange(1, M + 1, dtype=float)
    base = DiagonalOperator(np.concatenate([[0.0], n]), space)
    x0 = HVector(np.concatenate([[0.0], 1.0 / n]), space)
    op = DomainExtensionOperator(base, x0, base.unit(0))
    g = HVector(np.concatenate([[0.0], decay**n]), space)
    f = HVector(np.concatenate([[0.0], decay**n / n]), space)

    facts = (
        Fact("extension-rule", "A x_0 = e_0", ESCAPE_REF, _escape_rule),
        Fact("escape-indicator", "‖(1 − P_K) A x_0‖ = 1", ESCAPE_REF, _escape_indicator),
        Fact("membership", "dist(x_0, K_M) ≤ 1e-6", ESCAPE_REF, _escape_membership),
    )
    return GalleryProblem(
        problem_id="escape",
        op=op,
        g=g,
        known_solution=f,
        truncation=M + 1,
        reference=ESCAPE_REF,
        params={"M": M, "decay": decay},
        facts=facts,
        extras={"escape_candidate": DomainElement(base.zeros(), 1.0)},
    )


# --- non-injective direct sum --------------------------------------------------------------

DIRECT_SUM_REF = "Example: non-injective direct sum A ⊕ |φ_0⟩⟨φ_0|, f ⊕ ξ solves but is not a Krylov solution"


def _direct_sum_basis(problem):
    return build_krylov_basis(problem.op, problem.g, problem.op.dim)


def _direct_sum_solves(problem):
    residual = apply(problem.op, problem.extras["non_krylov_solution"]) - problem.g
    return _at_most(residual.norm(), 1e-12)


def _direct_sum_krylov(problem):
    return _at_most(distance_to_krylov(_direct_sum_basis(problem), problem.known_solution), 1e-8)


def _direct_sum_outside(problem):
    xi_norm = problem.extras["xi"].norm()
    distance = distance_to_krylov(_direct_sum_basis(problem), problem.extras["non_krylov_solution"])
    return _at_least(distance, xi_norm - 1e-12)


def _direct_sum_kernel(problem):
    half = problem.params["M"]
    block = problem.op.to_dense()[half:, half:]
    return _equals(half - int(np.linalg.matrix_rank(block)), half - 1)


def _direct_sum_intersection(problem):
    return _equals(krylov_intersection(problem.op, _direct_sum_basis(problem)).dim, 0)


def _direct_sum_reduced(problem):
    result = reducibility_defects(problem.op, _direct_sum_basis(problem))
    return _at_most(max(result.d1, result.d2), 1e-10)


def _direct_sum_selfadjoint(problem):
    report = solve_selfadjoint(problem.op, problem.g, rtol=1e-12)
    return _at_most((report.solution - problem.known_solution).norm(), 1e-8)


def _direct_sum_spectral(problem):
    solution = krylov_solution_via_spectrum(problem.op, problem.g)
    return _at_most((solution - problem.known_solution).norm(), 1e-8)


def _direct_sum_kernel_inclusion(problem):
    return _at_most(kernel_inclusion_defect(problem.op), 1e-12)


def noninjective_direct_sum(M: int = 16) -> GalleryProblem:
    """
    Ã = diag(1..M) ⊕ |φ_0⟩⟨φ_0| on C^M ⊕ C^M with g̃ = 1 ⊕ 0.

    The Krylov solution is f ⊕ 0 with f = 1/d; f ⊕ ξ with ξ = e_1 ⊥ φ_0 also
    solves but lies outside the Krylov closure.

    Args:
        M: Dimension of each summand (≥ 2)

    Returns:
        GalleryProblem; extras hold "xi" and "non_krylov_solution"
    """
    if M < 2:
        raise ParameterError("M must be at least 2")
    d = np.arange(1, M + 1, dtype=float)
    phi0 = np.zeros(M)
    phi0[0] = 1.0
    matrix = scipy.linalg.block_diag(np.diag(d), np.outer(phi0, phi0))
    space = make_space_id("direct-sum", 2 * M)
    op = DenseOperator(matrix, space)

    zeros = np.zeros(M)
    xi_coords = np.zeros(M)
    xi_coords[1] = 1.0
    g = HVector(np.concatenate([np.ones(M), zeros]), space)
    f = HVector(np.concatenate([1.0 / d, zeros]), space)
    xi = HVector(np.concatenate([zeros, xi_coords]), space)

    facts = (
        Fact("non-krylov-solves", "Ã(f ⊕ ξ) = g̃ for ξ ⊥ φ_0", DIRECT_SUM_REF, _direct_sum_solves),
        Fact("krylov-solution", "dist(f ⊕ 0, K) = 0", DIRECT_SUM_REF, _direct_sum_krylov),
        Fact("non-krylov-outside", "dist(f ⊕ ξ, K) ≥ ‖ξ‖", DIRECT_SUM_REF, _direct_sum_outside),
        Fact("kernel-dimension", "ker Ã on the second summand has dimension M − 1", DIRECT_SUM_REF, _direct_sum_kernel),
        Fact("trivial-intersection", "self-adjoint: K ∩ A(K^⊥) = {0}", DIRECT_SUM_REF, _direct_sum_intersection),
        Fact("krylov-reduced", "self-adjoint: both reducibility defects ≤ 1e-10", DIRECT_SUM_REF, _direct_sum_reduced),
        Fact(
            "selfadjoint-driver",
            "CG on Ã²f = Ãg̃ returns the Krylov solution f ⊕ 0",
            DIRECT_SUM_REF,
            _direct_sum_selfadjoint,
        ),
        Fact("spectral-solution", "h(Ã)g̃ with h = 1/λ returns f ⊕ 0", DIRECT_SUM_REF, _direct_sum_spectral),
        Fact(
            "kernel-inclusion",
            "ker Ã ⊂ ker Ã* (uniqueness precondition)",
            DIRECT_SUM_REF,
            _direct_sum_kernel_inclusion,
        ),
    )
    return GalleryProblem(
        problem_id="direct-sum",
        op=op,
        g=g,
        known_solution=f,
        truncation=2 * M,
        reference=DIRECT_SUM_REF,
        params={"M": M},
        facts=facts,
        extras={"xi": xi, "non_krylov_solution": f + xi},
    )


# --- skew-symmetric rotation blocks --------------------------------------------------------

ROTATIONS_REF = "Skew-adjoint reduction: −A² ≥ 0 turns Af = g into a CG problem"


def _rotations_solve(problem):
    report = solve_skewadjoint(problem.op, problem.g, rtol=1e-12)
    return _at_most((report.solution - problem.known_solution).norm(), 1e-8)


def _rotations_krylov(problem):
    basis = build_krylov_basis(problem.op, problem.g, problem.op.dim)
    relative = distance_to_krylov(basis, problem.known_solution) / problem.known_solution.norm()
    return _at_most(relative, 1e-8)


def _rotations_intersection(problem):
    basis = build_krylov_basis(problem.op, problem.g, problem.op.dim)
    return _equals(krylov_intersection(problem.op, basis).dim, 0)


def rotation_blocks(M: int = 8) -> GalleryProblem:
    """
    Block-diagonal skew operator with blocks [[0, s_j], [−s_j, 0]], s_j = j+1.

    Args:
        M: Number of 2×2 blocks (≥ 1)

    Returns:
        GalleryProblem with f*_i = 1/(i+1) and g = A f*
    """
    if M < 1:
        raise ParameterError("M must be at least 1")
    blocks = [np.array([[0.0, s], [-s, 0.0]]) for s in np.arange(1, M + 1, dtype=float)]
    matrix = scipy.linalg.block_diag(*blocks)
    space = make_space_id("rotations", 2 * M)
    op = DenseOperator(matrix, space)
    f = HVector(1.0 / np.arange(1, 2 * M + 1), space)

    facts = (
        Fact("skew-driver", "CG on −A²f = −Ag recovers f*", ROTATIONS_REF, _rotations_solve),
        Fact("krylov-solution", "f* lies in the Krylov space", ROTATIONS_REF, _rotations_krylov),
        Fact("trivial-intersection", "skew-adjoint: K ∩ A(K^⊥) = {0}", ROTATIONS_REF, _rotations_intersection),
    )
    return GalleryProblem(
        problem_id="rotations",
        op=op,
        g=apply(op, f),
        known_solution=f,
        truncation=2 * M,
        reference=ROTATIONS_REF,
        params={"M": M},
        facts=facts,
    )


# --- registry ------------------------------------------------------------------------------


@dataclass(frozen=True)
class GalleryEntry:
    builder: Callable[..., GalleryProblem]
    reference: str
    description: str

    @property
    def defaults(self) -> dict:
        signature = inspect.signature(self.builder)
        return {name: p.default for name, p in signature.parameters.items()}


GALLERY = {
    "multiplication": GalleryEntry(multiplication_annulus, MULTIPLICATION_REF, "M_z on the disk |z-2|<1, g = 1"),
    "left-shift": GalleryEntry(left_shift_problem, LEFT_SHIFT_REF, "left shift, g_n = 1/n!"),
    "right-shift": GalleryEntry(right_shift_problem, RIGHT_SHIFT_REF, "right shift on l2(Z), g = e_2"),
    "volterra": GalleryEntry(volterra_problem, VOLTERRA_REF, "Volterra operator, g = x²/2"),
    "creation": GalleryEntry(creation_hermite, CREATION_REF, "creation operator, g = ψ_1"),
    "weighted-shift": GalleryEntry(weighted_shift_np1, WEIGHTED_SHIFT_REF, "weights n+1, g = e_0"),
    "escape": GalleryEntry(escape_operator, ESCAPE_REF, "domain extension with A x_0 = e_0"),
    "direct-sum": GalleryEntry(noninjective_direct_sum, DIRECT_SUM_REF, "diag(1..M) ⊕ rank-one projector"),
    "rotations": GalleryEntry(rotation_blocks, ROTATIONS_REF, "skew 2×2 rotation blocks"),
}


def accepted_params(problem_id: str) -> list[str]:
    """Parameter names the problem's builder accepts."""
    return list(_entry(problem_id).defaults)


def _entry(problem_id: str) -> GalleryEntry:
    if problem_id not in GALLERY:
        raise ParameterError(f"Unknown problem '{problem_id}'. Choose from: {', '.join(GALLERY)}")
    return GALLERY[problem_id]


def build_problem(problem_id: str, **params) -> GalleryProblem:
    """
    Build a gallery problem by id.

    Args:
        problem_id: Key of GALLERY
        **params: Builder parameters; omitted ones take their defaults

    Returns:
        GalleryProblem
    """
    entry = _entry(problem_id)
    unknown = sorted(set(params) - set(entry.defaults))
    if unknown:
        raise ParameterError(f"Problem '{problem_id}' does not take parameters: {', '.join(unknown)}")
    return entry.builder(**params)


def gallery_table() -> pd.DataFrame:
    """One row per problem id with its default parameters and reference."""
    rows = [
        {
            "id": problem_id,
            "parameters": ", ".join(f"{k}={v}" for k, v in entry.defaults.items()),
            "reference": entry.reference,
            "description": entry.description,
        }
        for problem_id, entry in GALLERY.items()
    ]
    return pd.DataFrame(rows, columns=["id", "parameters", "reference", "description"])
