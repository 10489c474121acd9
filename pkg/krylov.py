#!/usr/bin/env python3
"""
Krylov Subspace Module

Orthonormal bases of K_N(A,g) and the structural diagnostics built on them:
distances to the Krylov space, the Krylov intersection K ∩ A(K^⊥), the two
reducibility defects, the escape indicator and the graph-norm core-condition
decay.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from lab_utils import (
    BREAKDOWN_TOL,
    DEFAULT_BOUNDARY_MARGIN,
    INTERSECTION_TOL,
    ORACLE_MAX_DIM,
    PINV_CUTOFF,
    REPORT_THRESHOLD,
    DimensionError,
    EmptyBasisError,
    OracleUnavailableError,
    ParameterError,
    UnsupportedOperationError,
)
from linop import (
    SCALAR_DTYPE,
    DomainElement,
    DomainExtensionOperator,
    HVector,
    OperatorSpec,
    apply,
    embed,
    graph_matrices,
    random_coords,
)

REORTH_POLICY = "mgs-2pass"
STACKED_COND_LIMIT = 1e12

FINITE_SCALE_NOTE = (
    "Core-condition and generalized-reducibility results are finite-scale evidence only; "
    "they do not decide the infinite-dimensional questions."
)
UNTESTABLE_DOMAIN_NOTE = "Assumption P_K f ∈ D(A) has no finite-truncation test (untestable)."
ESCAPE_ARTIFACT_NOTE = (
    "x0 lies in the domain at every truncation; escape is witnessed only through the rule A x0 = y0 (model artifact)."
)
WINDOW_FILL_NOTE = (
    "Graph distances at N ≥ dim are 0 because K_N fills the truncation; only orders below the window size "
    "are evidence for the core condition."
)


@dataclass(frozen=True, eq=False)
class KrylovBasis:
    """Orthonormal basis of K_N(A,g), one column per direction."""

    vectors: np.ndarray
    space_id: str
    order: int
    breakdown_at: int | None = None
    reorth_policy: str = REORTH_POLICY

    @property
    def size(self) -> int:
        return self.vectors.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def closed(self) -> bool:
        """True when the Krylov space stopped growing inside the truncation."""
        return self.breakdown_at is not None

    @property
    def columns(self) -> list[HVector]:
        return [HVector(self.vectors[:, j], self.space_id) for j in range(self.size)]

    def truncate(self, n: int) -> "KrylovBasis":
        """Basis of K_n for n up to the order this basis was built for."""
        if n < 1:
            raise ParameterError("Krylov order must be at least 1")
        if n > self.order and not self.closed:
            raise ParameterError(f"Basis was built to order {self.order}; cannot truncate to {n}")
        size = min(n, self.size)
        breakdown = self.breakdown_at if self.closed and n >= self.breakdown_at else None
        return KrylovBasis(self.vectors[:, :size], self.space_id, n, breakdown, self.reorth_policy)

    def coefficients(self, f: HVector) -> np.ndarray:
        self._check(f)
        return self.vectors.conj().T @ f.coords

    def project(self, f: HVector) -> HVector:
        """Orthogonal projection P_K f."""
        return HVector(self.vectors @ self.coefficients(f), self.space_id)

    def gram_defect(self) -> float:
        """‖QᴴQ − I‖ in the max-entry sense."""
        gram = self.vectors.conj().T @ self.vectors
        return float(np.abs(gram - np.eye(self.size)).max())

    def _check(self, f: HVector):
        if f.space_id != self.space_id or f.dim != self.dim:
            raise DimensionError(f"Vector from {f.space_id} does not live in Krylov space over {self.space_id}")


def build_krylov_basis(op: OperatorSpec, g: HVector, N: int) -> KrylovBasis:
    """
    Build an orthonormal basis of K_N(A,g) = span{g, Ag, …, A^{N-1}g}.

    Each new direction is A applied to the previous orthonormal vector, then
    orthogonalized by modified Gram-Schmidt with a second full pass.

    Args:
        op: Operator
        g: Nonzero start vector
        N: Requested order

    Returns:
        KrylovBasis with at most N columns; breakdown_at records the size at
        which the space stopped growing (new-direction norm below
        BREAKDOWN_TOL times the running maximum of ‖A q‖)
    """
    if N < 1:
        raise ParameterError("Krylov order N must be at least 1")
    if g.space_id != op.space_id or g.dim != op.dim:
        raise DimensionError(f"Start vector from {g.space_id} does not live in operator space {op.space_id}")

    g_norm = g.norm()
    if g_norm == 0:
        raise EmptyBasisError("Krylov basis of the zero vector is empty")

    capacity = min(N, op.dim)
    Q = np.zeros((op.dim, capacity), dtype=SCALAR_DTYPE)
    Q[:, 0] = g.coords / g_norm
    size = 1
    breakdown_at = None
    scale = 0.0

    while size < N:
        if size == op.dim:
            breakdown_at = size
            break

        w = op.matvec(Q[:, size - 1])
        scale = max(scale, float(np.linalg.norm(w)))
        for _ in range(2):
            for j in range(size):
                w = w - np.vdot(Q[:, j], w) * Q[:, j]

        w_norm = float(np.linalg.norm(w))
        if w_norm <= BREAKDOWN_TOL * scale:
            breakdown_at = size
            break

        Q[:, size] = w / w_norm
        size += 1

    return KrylovBasis(Q[:, :size].copy(), op.space_id, N, breakdown_at)


def distance_to_krylov(basis: KrylovBasis, f: HVector) -> float:
    """Distance ‖f − QQᴴf‖ from f to span(Q)."""
    residual = f.coords - basis.project(f).coords
    return float(np.linalg.norm(residual))


def distance_series(basis: KrylovBasis, f: HVector, Ns: list[int]) -> pd.DataFrame:
    """
    Distances from f to the nested spaces K_N for every N in Ns.

    Args:
        basis: Basis built to at least max(Ns), or closed
        f: Vector
        Ns: Increasing Krylov orders

    Returns:
        DataFrame with columns N, distance
    """
    coeffs = basis.coefficients(f)
    rows = []
    for n in sorted(set(Ns)):
        prefix = basis.truncate(n).size
        residual = f.coords - basis.vectors[:, :prefix] @ coeffs[:prefix]
        rows.append({"N": n, "distance": float(np.linalg.norm(residual))})
    return pd.DataFrame(rows, columns=["N", "distance"])


def distance_to_image(op: OperatorSpec, basis: KrylovBasis, f: HVector) -> float:
    """Distance from f to span(A·Q), the image of the Krylov space."""
    image = op.matvec(basis.vectors)
    image_basis = scipy.linalg.orth(image) if np.any(image) else np.zeros((basis.dim, 0))
    residual = f.coords - image_basis @ (image_basis.conj().T @ f.coords)
    return float(np.linalg.norm(residual))


def principal_angles(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """
    Principal angles between the column spans of two orthonormal matrices.

    Cosines come from the SVD of firstᴴ·second; angles below π/4 are recomputed
    from sines of the residual of the principal vectors, which keeps small
    angles accurate.

    Args:
        first: Orthonormal columns
        second: Orthonormal columns

    Returns:
        Angles in ascending order, min(k, l) of them
    """
    if first.shape[1] == 0 or second.shape[1] == 0:
        return np.zeros(0)

    _, cosines, zh = scipy.linalg.svd(first.conj().T @ second, full_matrices=False)
    cosines = np.clip(cosines, 0.0, 1.0)
    angles = np.arccos(cosines)

    small = cosines**2 > 0.5
    n_small = int(small.sum())
    if n_small:
        vectors = second @ zh.conj().T[:, :n_small]
        residual = vectors - first @ (first.conj().T @ vectors)
        sines = np.sort(scipy.linalg.svd(residual, compute_uv=False))
        angles[:n_small] = np.arcsin(np.clip(sines[:n_small], 0.0, 1.0))

    return np.sort(angles)


def _constraint_basis(op: OperatorSpec, basis: KrylovBasis, boundary_margin: int) -> np.ndarray:
    """Orthonormal basis of span(Q) plus the boundary coordinates excluded from K^⊥."""
    boundary = op.boundary_indices(boundary_margin)
    units = np.zeros((basis.dim, len(boundary)), dtype=SCALAR_DTYPE)
    units[boundary, np.arange(len(boundary))] = 1.0
    return scipy.linalg.orth(np.hstack([basis.vectors, units]))


def complement_coordinates(op: OperatorSpec, basis: KrylovBasis, boundary_margin: int) -> np.ndarray:
    """
    Orthonormal basis of K^⊥ in the operator's domain coordinates.

    For domain-extension operators this includes the x0 direction: the columns
    are (t, mu) pairs whose embedding t + mu·x0 is orthogonal to K. Boundary
    coordinates of shift windows are excluded.

    Args:
        op: Operator
        basis: Krylov basis
        boundary_margin: Number of window-edge coordinates to exclude

    Returns:
        Matrix whose columns are orthonormal domain coordinates (possibly zero columns)
    """
    embedding, _ = graph_matrices(op)
    constraints = [basis.vectors.conj().T @ embedding]
    boundary = op.boundary_indices(boundary_margin)
    if len(boundary):
        constraints.append(embedding[boundary, :])
    return scipy.linalg.null_space(np.vstack(constraints))


@dataclass(frozen=True)
class IntersectionResult:
    dim: int | None
    angles: np.ndarray
    note: str | None = None


def krylov_intersection(
    op: OperatorSpec,
    basis: KrylovBasis,
    tol: float = INTERSECTION_TOL,
    boundary_margin: int = DEFAULT_BOUNDARY_MARGIN,
) -> IntersectionResult:
    """
    Dimension of the Krylov intersection K ∩ A(K^⊥) at truncation scale.

    Args:
        op: Operator
        basis: Krylov basis
        tol: Angles with cos ≥ 1 − tol count toward the dimension
        boundary_margin: Window-edge coordinates excluded from K^⊥

    Returns:
        IntersectionResult with dimension and principal angles between span(A·U) and span(Q)
    """
    if op.dim > ORACLE_MAX_DIM:
        note = f"Intersection skipped: dimension {op.dim} exceeds dense limit {ORACLE_MAX_DIM}"
        return IntersectionResult(None, np.zeros(0), note)

    complement = complement_coordinates(op, basis, boundary_margin)
    if complement.shape[1] == 0:
        return IntersectionResult(0, np.zeros(0), "K^⊥ is empty: the Krylov space fills the truncation")

    _, action = graph_matrices(op)
    image = action @ complement
    if not np.any(np.abs(image) > 0):
        return IntersectionResult(0, np.zeros(0), "A annihilates K^⊥ within the truncation")

    image_basis = scipy.linalg.orth(image)
    angles = principal_angles(basis.vectors, image_basis)
    dim = int(np.count_nonzero(np.cos(angles) >= 1.0 - tol))
    return IntersectionResult(dim, angles)


@dataclass(frozen=True)
class ReducibilityResult:
    d1: float
    d2: float
    reduced: bool


def reducibility_defects(
    op: OperatorSpec,
    basis: KrylovBasis,
    tol: float = 1e-10,
    boundary_margin: int = DEFAULT_BOUNDARY_MARGIN,
) -> ReducibilityResult:
    """
    Reducibility defects d1 = ‖(1−P_K) A P_K‖ and d2 = ‖P_K A (1−P_K)‖.

    d2 uses the adjoint identity ‖P_K A P_⊥‖ = ‖P_⊥ A* Q‖ when the adjoint is
    available, and the domain coordinates of K^⊥ otherwise.

    Args:
        op: Operator
        basis: Krylov basis
        tol: Both defects at or below tol flag the operator as Krylov-reduced
        boundary_margin: Window-edge coordinates excluded from K^⊥

    Returns:
        ReducibilityResult(d1, d2, reduced)
    """
    Q = basis.vectors
    image = op.matvec(Q)
    outside = image - Q @ (Q.conj().T @ image)
    d1 = float(np.linalg.norm(outside, 2))

    if isinstance(op, DomainExtensionOperator):
        _, action = graph_matrices(op)
        complement = complement_coordinates(op, basis, boundary_margin)
        d2 = float(np.linalg.norm(Q.conj().T @ action @ complement, 2)) if complement.shape[1] else 0.0
    else:
        constraint = _constraint_basis(op, basis, boundary_margin)
        back = op.rmatvec(Q)
        back = back - constraint @ (constraint.conj().T @ back)
        d2 = float(np.linalg.norm(back, 2))

    return ReducibilityResult(d1, d2, d1 <= tol and d2 <= tol)


def adjoint_invariance_defect(
    op: OperatorSpec,
    basis: KrylovBasis,
    samples: int = 8,
    seed: int = 0,
    boundary_margin: int = DEFAULT_BOUNDARY_MARGIN,
) -> float:
    """
    Defect of A*(K^⊥) ⊂ K^⊥ over the first size−1 Krylov directions.

    At any truncation ⟨q_j, A*u⟩ = ⟨A q_j, u⟩ = 0 for u ⊥ K and j < size−1, so
    the returned value is rounding-level for every operator with an adjoint.

    Args:
        op: Operator with an adjoint
        basis: Krylov basis
        samples: Random probes drawn from K^⊥
        seed: Probe seed
        boundary_margin: Window-edge coordinates excluded from K^⊥

    Returns:
        max ‖Q'ᴴ A* u‖ / ‖u‖ over the probes, Q' the leading size−1 columns
    """
    if isinstance(op, DomainExtensionOperator):
        raise UnsupportedOperationError("Adjoint invariance needs A*, which domain-extension operators lack")
    if basis.size < 2:
        return 0.0

    rng = np.random.default_rng(seed)
    constraint = _constraint_basis(op, basis, boundary_margin)
    probes = random_coords(basis.dim, rng, samples)
    probes = probes - constraint @ (constraint.conj().T @ probes)
    norms = np.linalg.norm(probes, axis=0)
    keep = norms > 0
    if not np.any(keep):
        return 0.0
    leading = basis.vectors[:, : basis.size - 1]
    overlap = leading.conj().T @ op.rmatvec(probes[:, keep])
    return float((np.linalg.norm(overlap, axis=0) / norms[keep]).max())


def kernel_inclusion_defect(op: OperatorSpec, tol: float = PINV_CUTOFF) -> float:
    """
    Check the uniqueness precondition ker A ⊂ ker A*.

    Args:
        op: Operator materializable as a dense matrix
        tol: Singular values at or below tol·σ_max span the numerical kernel

    Returns:
        max ‖A* v‖ / σ_max over an orthonormal kernel basis; 0 when the kernel is trivial
    """
    if op.dim > ORACLE_MAX_DIM:
        raise OracleUnavailableError(f"Kernel check needs a dense matrix; dimension {op.dim} > {ORACLE_MAX_DIM}")
    dense = op.to_dense()
    _, s, vh = scipy.linalg.svd(dense)
    if s[0] == 0:
        return 0.0
    kernel = vh[s <= tol * s[0]].conj().T
    if kernel.shape[1] == 0:
        return 0.0
    return float(np.linalg.norm(dense.conj().T @ kernel, axis=0).max() / s[0])


def projected_solution_residual(op: OperatorSpec, basis: KrylovBasis, f: HVector | DomainElement, g: HVector) -> float:
    """Residual ‖A P_K f − g‖ of the Krylov projection of a solution f."""
    projected = basis.project(embed(op, f))
    return (apply(op, projected) - g).norm()


@dataclass(frozen=True)
class EscapeResult:
    indicator: float
    membership_distance: float
    inconclusive: bool


def escape_indicator(
    op: OperatorSpec,
    basis: KrylovBasis,
    x: DomainElement | HVector,
    report_threshold: float = REPORT_THRESHOLD,
) -> EscapeResult:
    """
    Escape indicator ‖(1−P_K) A x‖ for a candidate x ∈ K̄ ∩ D(A).

    Membership of x in the Krylov space is measured first and reported with
    the indicator. A small indicator on a candidate that is far from K is
    flagged inconclusive.

    Args:
        op: Operator
        basis: Krylov basis
        x: Candidate domain element
        report_threshold: Membership and indicator threshold

    Returns:
        EscapeResult(indicator, membership_distance, inconclusive)
    """
    membership = distance_to_krylov(basis, embed(op, x))
    image = apply(op, x)
    indicator = float(np.linalg.norm(image.coords - basis.project(image).coords))
    inconclusive = indicator <= report_threshold and membership > report_threshold
    return EscapeResult(indicator, membership, inconclusive)


def _stacked_residual(stacked: np.ndarray, rhs: np.ndarray) -> tuple[float, bool]:
    u, s, vh = scipy.linalg.svd(stacked, full_matrices=False)
    regularized = bool(s[-1] == 0 or s[0] / s[-1] > STACKED_COND_LIMIT)
    keep = s > (PINV_CUTOFF * s[0] if regularized else 0.0)
    coeffs = vh[keep].conj().T @ ((u[:, keep].conj().T @ rhs) / s[keep])
    return float(np.linalg.norm(rhs - stacked @ coeffs)), regularized


def core_condition_decay(
    op: OperatorSpec,
    g: HVector,
    x: DomainElement | HVector,
    Ns: list[int],
    basis: KrylovBasis | None = None,
) -> pd.DataFrame:
    """
    Graph-norm distance from x to K_N for each N in Ns.

    Solves min over v ∈ K_N of (‖x−v‖² + ‖A(x−v)‖²)^{1/2} through the stacked
    least-squares system [Q; AQ].

    Args:
        op: Operator
        g: Krylov start vector
        x: Element of the domain
        Ns: Krylov orders
        basis: Prebuilt basis of order ≥ max(Ns), built when omitted

    Returns:
        DataFrame with columns N, graph_distance
    """
    Ns = sorted(set(Ns))
    if basis is None:
        basis = build_krylov_basis(op, g, Ns[-1])

    rhs = np.concatenate([embed(op, x).coords, apply(op, x).coords])
    rows = []
    for n in Ns:
        Qn = basis.truncate(n).vectors
        stacked = np.vstack([Qn, op.matvec(Qn)])
        residual, regularized = _stacked_residual(stacked, rhs)
        if regularized:
            warnings.warn(
                f"Stacked graph-norm system ill-conditioned at N={n}; using truncated SVD solve",
                RuntimeWarning,
                stacklevel=2,
            )
        rows.append({"N": n, "graph_distance": residual})
    return pd.DataFrame(rows, columns=["N", "graph_distance"])


@dataclass
class DiagnosticsReport:
    """Structural diagnostics of one (A, g) pair over a set of Krylov orders."""

    distances: pd.DataFrame | None
    intersection: IntersectionResult
    reducibility: ReducibilityResult
    escape: EscapeResult | None
    core_decay: pd.DataFrame | None
    basis_size: int
    breakdown_at: int | None
    image_distance: float | None = None
    adjoint_invariance: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def intersection_dim(self) -> int | None:
        return self.intersection.dim

    @property
    def escape_indicator(self) -> float | None:
        return None if self.escape is None else self.escape.indicator

    @property
    def inconclusive(self) -> bool:
        return self.escape is not None and self.escape.inconclusive

    def to_dict(self) -> dict:
        def frame(df):
            return None if df is None else df.to_dict(orient="records")

        return {
            "distances": frame(self.distances),
            "intersection_dim": self.intersection.dim,
            "principal_angles": [float(a) for a in self.intersection.angles],
            "reducibility_defects": {
                "d1": self.reducibility.d1,
                "d2": self.reducibility.d2,
                "reduced": self.reducibility.reduced,
            },
            "escape": None
            if self.escape is None
            else {
                "indicator": self.escape.indicator,
                "membership_distance": self.escape.membership_distance,
                "inconclusive": self.escape.inconclusive,
            },
            "core_decay": frame(self.core_decay),
            "image_distance": self.image_distance,
            "adjoint_invariance_defect": self.adjoint_invariance,
            "basis_size": self.basis_size,
            "breakdown_at": self.breakdown_at,
            "notes": list(self.notes),
        }


def diagnose(
    op: OperatorSpec,
    g: HVector,
    Ns: list[int],
    solution: HVector | DomainElement | None = None,
    escape_candidate: DomainElement | HVector | None = None,
    core_vector: DomainElement | HVector | None = None,
    tol: float = INTERSECTION_TOL,
    boundary_margin: int = DEFAULT_BOUNDARY_MARGIN,
    seed: int = 0,
) -> DiagnosticsReport:
    """
    Run every structural diagnostic for (A, g).

    Distances and core decay are evaluated at each N in Ns; intersection,
    reducibility and escape at max(Ns).

    Args:
        op: Operator
        g: Datum
        Ns: Krylov orders
        solution: Known solution f, for the distance series and image distance
        escape_candidate: Candidate x ∈ K̄ ∩ D(A) for the escape indicator
        core_vector: Test vector for the core-condition decay
        tol: Intersection tolerance
        boundary_margin: Window-edge coordinates excluded from K^⊥
        seed: Seed of the adjoint-invariance probes

    Returns:
        DiagnosticsReport
    """
    Ns = sorted(set(Ns))
    basis = build_krylov_basis(op, g, Ns[-1])

    distances = image_distance = None
    if solution is not None:
        f = embed(op, solution)
        distances = distance_series(basis, f, Ns)
        image_distance = distance_to_image(op, basis, f)

    intersection = krylov_intersection(op, basis, tol, boundary_margin)
    reducibility = reducibility_defects(op, basis, boundary_margin=boundary_margin)
    escape = None if escape_candidate is None else escape_indicator(op, basis, escape_candidate)
    core_decay = None if core_vector is None else core_condition_decay(op, g, core_vector, Ns, basis)

    adjoint_invariance = None
    if not isinstance(op, DomainExtensionOperator):
        adjoint_invariance = adjoint_invariance_defect(op, basis, seed=seed, boundary_margin=boundary_margin)

    notes = [FINITE_SCALE_NOTE, UNTESTABLE_DOMAIN_NOTE]
    if isinstance(op, DomainExtensionOperator):
        notes.append(ESCAPE_ARTIFACT_NOTE)
    if not basis.closed:
        notes.append(f"Krylov space not closed at N={basis.size}; structural facts hold only up to truncation.")
    if intersection.note:
        notes.append(intersection.note)
    if core_decay is not None and basis.size == op.dim and Ns[-1] >= op.dim:
        notes.append(WINDOW_FILL_NOTE)
    if escape is not None and escape.inconclusive:
        notes.append("Escape indicator inconclusive: candidate is not in the Krylov space at this order.")

    return DiagnosticsReport(
        distances=distances,
        intersection=intersection,
        reducibility=reducibility,
        escape=escape,
        core_decay=core_decay,
        basis_size=basis.size,
        breakdown_at=basis.breakdown_at,
        image_distance=image_distance,
        adjoint_invariance=adjoint_invariance,
        notes=notes,
    )
