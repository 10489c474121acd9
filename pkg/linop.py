#!/usr/bin/env python3
"""
Linear Operator Module

Vectors and operators over truncated Hilbert spaces. Every space is a window of
complex coordinates over an orthonormal basis, so inner products are Euclidean.
Operators come in five kinds (dense, diagonal, weighted shift, quadrature
integral, domain extension) plus the internal `squared` kind used by the A²
solver drivers.

Raw-array entry points (`matvec`, `rmatvec`) are used inside the numerical
loops; the checked entry points (`apply`, `apply_adjoint`, `graph_norm`) take
HVector / DomainElement values and enforce space compatibility.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from lab_utils import DimensionError, ParameterError, UnsupportedOperationError

SCALAR_DTYPE = np.complex128

# Dense 2-norms are exact below this size, power iteration above
DENSE_NORM_LIMIT = 400


def make_space_id(family: str, dim: int) -> str:
    """Identifier of a truncation: basis family plus dimension."""
    return f"{family}[{dim}]"


def _as_coords(values) -> np.ndarray:
    coords = np.array(values, dtype=SCALAR_DTYPE)
    if coords.ndim != 1:
        raise DimensionError(f"HVector coordinates must be one-dimensional, got shape {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise ParameterError("HVector coordinates must be finite")
    coords.setflags(write=False)
    return coords


@dataclass(frozen=True, eq=False)
class HVector:
    """Coordinate vector in a truncated Hilbert space."""

    coords: np.ndarray
    space_id: str

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_coords(self.coords))

    @classmethod
    def zeros(cls, space_id: str, dim: int) -> "HVector":
        return cls(np.zeros(dim, dtype=SCALAR_DTYPE), space_id)

    @classmethod
    def unit(cls, space_id: str, dim: int, index: int) -> "HVector":
        if not 0 <= index < dim:
            raise DimensionError(f"Basis index {index} outside window of size {dim}")
        coords = np.zeros(dim, dtype=SCALAR_DTYPE)
        coords[index] = 1.0
        return cls(coords, space_id)

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))

    def inner(self, other: "HVector") -> complex:
        """⟨self, other⟩, antilinear in self."""
        self._check_space(other)
        return complex(np.vdot(self.coords, other.coords))

    def _check_space(self, other: "HVector"):
        if not isinstance(other, HVector):
            raise TypeError(f"Expected HVector, got {type(other).__name__}")
        if other.space_id != self.space_id or other.dim != self.dim:
            raise DimensionError(f"Cannot combine vectors from {self.space_id} and {other.space_id}")

    def __add__(self, other: "HVector") -> "HVector":
        self._check_space(other)
        return HVector(self.coords + other.coords, self.space_id)

    def __sub__(self, other: "HVector") -> "HVector":
        self._check_space(other)
        return HVector(self.coords - other.coords, self.space_id)

    def __neg__(self) -> "HVector":
        return HVector(-self.coords, self.space_id)

    def __mul__(self, scalar) -> "HVector":
        if not np.isscalar(scalar):
            return NotImplemented
        return HVector(scalar * self.coords, self.space_id)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "HVector":
        return HVector(self.coords / scalar, self.space_id)


@dataclass(frozen=True, eq=False)
class DomainElement:
    """Element t + mu·x0 of an extended domain D(T) ∔ span{x0}."""

    t: HVector
    mu: complex = 0.0

    @property
    def space_id(self) -> str:
        return self.t.space_id


class OperatorSpec(ABC):
    """A linear operator on one truncated space."""

    kind = "abstract"

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @property
    @abstractmethod
    def space_id(self) -> str: ...

    @abstractmethod
    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Apply to a coordinate vector or to the columns of a matrix."""

    @abstractmethod
    def rmatvec(self, x: np.ndarray) -> np.ndarray:
        """Apply the adjoint to a coordinate vector or to matrix columns."""

    @abstractmethod
    def to_dense(self) -> np.ndarray: ...

    def vector(self, coords) -> HVector:
        """Wrap coordinates as a vector of this operator's space."""
        return HVector(coords, self.space_id)

    def zeros(self) -> HVector:
        return HVector.zeros(self.space_id, self.dim)

    def unit(self, index: int) -> HVector:
        return HVector.unit(self.space_id, self.dim, index)

    def boundary_indices(self, margin: int) -> np.ndarray:
        """Window coordinates treated as truncation boundary; none for most kinds."""
        return np.array([], dtype=int)


def _broadcast(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    return values if x.ndim == 1 else values[:, None]


@dataclass(frozen=True, eq=False)
class DenseOperator(OperatorSpec):
    """Explicit square matrix; adjoint is the conjugate transpose."""

    matrix: np.ndarray
    space: str

    kind = "dense"

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=SCALAR_DTYPE)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError(f"Dense operator needs a square matrix, got shape {matrix.shape}")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def space_id(self) -> str:
        return self.space

    def matvec(self, x):
        return self.matrix @ x

    def rmatvec(self, x):
        return self.matrix.conj().T @ x

    def to_dense(self):
        return np.array(self.matrix)


@dataclass(frozen=True, eq=False)
class DiagonalOperator(OperatorSpec):
    """Multiplication by the sequence d_n."""

    diagonal: np.ndarray
    space: str

    kind = "diagonal"

    def __post_init__(self):
        diagonal = np.array(self.diagonal, dtype=SCALAR_DTYPE).ravel()
        diagonal.setflags(write=False)
        object.__setattr__(self, "diagonal", diagonal)

    @property
    def dim(self) -> int:
        return self.diagonal.shape[0]

    @property
    def space_id(self) -> str:
        return self.space

    def matvec(self, x):
        return _broadcast(self.diagonal, x) * x

    def rmatvec(self, x):
        return _broadcast(self.diagonal.conj(), x) * x

    def to_dense(self):
        return np.diag(self.diagonal)


@dataclass(frozen=True, eq=False)
class WeightedShift(OperatorSpec):
    """
    Weighted shift on a window: (A v)_{n+offset} = w_n v_n.

    Entries shifted past either end of the window are dropped.
    """

    weights: np.ndarray
    offset: int
    space: str

    kind = "weighted-shift"

    def __post_init__(self):
        weights = np.array(self.weights, dtype=SCALAR_DTYPE).ravel()
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        if self.offset == 0:
            raise ParameterError("Weighted shift needs a nonzero offset; use a diagonal operator instead")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @property
    def space_id(self) -> str:
        return self.space

    def matvec(self, x):
        k, size = self.offset, self.dim
        out = np.zeros_like(x, dtype=SCALAR_DTYPE)
        if abs(k) >= size:
            return out
        w = _broadcast(self.weights, x)
        if k > 0:
            out[k:] = w[: size - k] * x[: size - k]
        else:
            out[: size + k] = w[-k:] * x[-k:]
        return out

    def rmatvec(self, x):
        k, size = self.offset, self.dim
        out = np.zeros_like(x, dtype=SCALAR_DTYPE)
        if abs(k) >= size:
            return out
        w = _broadcast(self.weights.conj(), x)
        if k > 0:
            out[: size - k] = w[: size - k] * x[k:]
        else:
            out[-k:] = w[-k:] * x[: size + k]
        return out

    def to_dense(self):
        size, k = self.dim, self.offset
        matrix = np.zeros((size, size), dtype=SCALAR_DTYPE)
        for n in range(size):
            if 0 <= n + k < size:
                matrix[n + k, n] = self.weights[n]
        return matrix

    def boundary_indices(self, margin: int) -> np.ndarray:
        margin = min(max(margin, 0), self.dim)
        return np.arange(self.dim - margin, self.dim)


@dataclass(frozen=True, eq=False)
class QuadratureIntegralOperator(OperatorSpec):
    """
    Nyström discretization of an integral operator.

    `nodal_matrix` acts on function values at `nodes` (quadrature weights already
    folded in). Coordinates are √w_j·f(x_j), so the coordinate matrix is
    diag(√w)·nodal_matrix·diag(1/√w).
    """

    nodes: np.ndarray
    weights: np.ndarray
    nodal_matrix: np.ndarray
    space: str

    kind = "quadrature-integral"

    def __post_init__(self):
        if np.any(np.asarray(self.weights) <= 0):
            raise ParameterError("Quadrature weights must be positive")
        if np.shape(self.nodal_matrix) != (len(self.nodes), len(self.nodes)):
            raise DimensionError("Nodal matrix must be square with one row per node")

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def space_id(self) -> str:
        return self.space

    @cached_property
    def matrix(self) -> np.ndarray:
        sqrt_w = np.sqrt(np.asarray(self.weights, dtype=float))
        matrix = (sqrt_w[:, None] * np.asarray(self.nodal_matrix) / sqrt_w[None, :]).astype(SCALAR_DTYPE)
        matrix.setflags(write=False)
        return matrix

    def matvec(self, x):
        return self.matrix @ x

    def rmatvec(self, x):
        return self.matrix.conj().T @ x

    def to_dense(self):
        return np.array(self.matrix)


@dataclass(frozen=True, eq=False)
class DomainExtensionOperator(OperatorSpec):
    """
    Operator on D(T) ∔ span{x0} acting as T on D(T) and sending x0 to y0.

    The adjoint is not representable in these coordinates.
    """

    base: OperatorSpec
    x0: HVector
    y0: HVector

    kind = "domain-extension"

    def __post_init__(self):
        for name, vec in (("x0", self.x0), ("y0", self.y0)):
            if vec.space_id != self.base.space_id or vec.dim != self.base.dim:
                raise DimensionError(f"{name} does not live in the base operator's space")

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def space_id(self) -> str:
        return self.base.space_id

    def matvec(self, x):
        return self.base.matvec(x)

    def rmatvec(self, x):
        raise UnsupportedOperationError("Adjoint of a domain-extension operator is not representable")

    def to_dense(self):
        raise UnsupportedOperationError("Domain-extension operators have no dense matrix; use graph_matrices")

    def boundary_indices(self, margin: int) -> np.ndarray:
        return self.base.boundary_indices(margin)


@dataclass(frozen=True, eq=False)
class SquaredOperator(OperatorSpec):
    """sign·A², applied as two successive applications of A."""

    base: OperatorSpec
    sign: int = 1

    kind = "squared"

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ParameterError("sign must be +1 or -1")

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def space_id(self) -> str:
        return self.base.space_id

    def matvec(self, x):
        return self.sign * self.base.matvec(self.base.matvec(x))

    def rmatvec(self, x):
        return self.sign * self.base.rmatvec(self.base.rmatvec(x))

    def to_dense(self):
        dense = self.base.to_dense()
        return self.sign * (dense @ dense)

    def boundary_indices(self, margin: int) -> np.ndarray:
        return self.base.boundary_indices(margin)


def identity(space_id: str, dim: int) -> DiagonalOperator:
    return DiagonalOperator(np.ones(dim), space_id)


def square(op: OperatorSpec, sign: int = 1) -> SquaredOperator:
    """Operator sign·A² without materializing it."""
    return SquaredOperator(op, sign)


def _check_vector(op: OperatorSpec, v: HVector):
    if not isinstance(v, HVector):
        raise TypeError(f"Expected HVector, got {type(v).__name__}")
    if v.space_id != op.space_id or v.dim != op.dim:
        raise DimensionError(f"Vector from {v.space_id} does not live in operator space {op.space_id}")


def embed(op: OperatorSpec, v: DomainElement | HVector) -> HVector:
    """
    Embed a domain element into the Hilbert space.

    Args:
        op: Operator whose domain the element belongs to
        v: DomainElement, or an HVector (treated as mu = 0)

    Returns:
        t + mu·x0 for domain-extension operators, t otherwise
    """
    if isinstance(v, HVector):
        _check_vector(op, v)
        return v
    _check_vector(op, v.t)
    if isinstance(op, DomainExtensionOperator):
        return HVector(v.t.coords + v.mu * op.x0.coords, op.space_id)
    if v.mu != 0:
        raise UnsupportedOperationError(f"Operator of kind {op.kind} has no extended domain direction")
    return v.t


def apply(op: OperatorSpec, v: DomainElement | HVector) -> HVector:
    """
    Apply an operator to a vector.

    Args:
        op: Operator
        v: HVector, or DomainElement for domain-extension operators

    Returns:
        A·v; for domain-extension operators T·t + mu·y0
    """
    if isinstance(v, HVector):
        _check_vector(op, v)
        return HVector(op.matvec(np.asarray(v.coords)), op.space_id)

    _check_vector(op, v.t)
    if isinstance(op, DomainExtensionOperator):
        return HVector(op.base.matvec(np.asarray(v.t.coords)) + v.mu * op.y0.coords, op.space_id)
    if v.mu != 0:
        raise UnsupportedOperationError(f"Operator of kind {op.kind} has no extended domain direction")
    return HVector(op.matvec(np.asarray(v.t.coords)), op.space_id)


def apply_adjoint(op: OperatorSpec, v: HVector) -> HVector:
    """Apply A* to v. Domain-extension operators raise UnsupportedOperationError."""
    _check_vector(op, v)
    return HVector(op.rmatvec(np.asarray(v.coords)), op.space_id)


def graph_norm(op: OperatorSpec, v: DomainElement | HVector) -> float:
    """Graph norm (‖v‖² + ‖Av‖²)^{1/2}."""
    embedded = embed(op, v)
    image = apply(op, v)
    return float(np.hypot(embedded.norm(), image.norm()))


def to_dense(op: OperatorSpec) -> np.ndarray:
    """Dense coordinate matrix of the operator."""
    return op.to_dense()


def graph_matrices(op: OperatorSpec) -> tuple[np.ndarray, np.ndarray]:
    """
    Embedding and action matrices over the operator's domain coordinates.

    Plain operators use the window coordinates themselves (E = I, B = A). A
    domain-extension operator adds one coordinate for the x0 direction, so
    E = [I | x0] and B = [T | y0].

    Args:
        op: Operator

    Returns:
        Tuple (E, B), both of shape (dim, number of domain coordinates)
    """
    if isinstance(op, DomainExtensionOperator):
        embedding = np.hstack([np.eye(op.dim, dtype=SCALAR_DTYPE), op.x0.coords[:, None]])
        action = np.hstack([op.base.to_dense(), op.y0.coords[:, None]])
        return embedding, action
    return np.eye(op.dim, dtype=SCALAR_DTYPE), op.to_dense()


def random_coords(dim: int, rng: np.random.Generator, count: int | None = None) -> np.ndarray:
    """Complex Gaussian coordinates; one vector, or `count` columns."""
    shape = (dim,) if count is None else (dim, count)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def norm_estimate(op: OperatorSpec, iterations: int = 50, seed: int = 0) -> float:
    """
    Estimate the operator 2-norm ‖A‖.

    Exact for operators that materialize below DENSE_NORM_LIMIT; otherwise power
    iteration on A*A. Domain-extension operators use their action matrix.

    Args:
        op: Operator
        iterations: Power iterations for large operators
        seed: Seed for the start vector

    Returns:
        Estimated norm
    """
    if isinstance(op, DomainExtensionOperator):
        _, action = graph_matrices(op)
        return float(np.linalg.norm(action, 2))
    if op.dim <= DENSE_NORM_LIMIT:
        return float(np.linalg.norm(op.to_dense(), 2))

    rng = np.random.default_rng(seed)
    v = random_coords(op.dim, rng)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iterations):
        w = op.matvec(v)
        estimate = float(np.linalg.norm(w))
        v = op.rmatvec(w)
        v_norm = np.linalg.norm(v)
        if v_norm == 0:
            break
        v /= v_norm
    return estimate


def hermitian_defect(op: OperatorSpec, sign: int = 1, trials: int = 4, seed: int = 0) -> float:
    """
    Relative defect of A = sign·A* on random probes.

    Args:
        op: Operator with an adjoint
        sign: +1 checks symmetry, -1 checks skew-symmetry
        trials: Number of random probes
        seed: Probe seed

    Returns:
        max ‖(A − sign·A*)v‖ / (‖v‖·‖A‖_est); 0 for the zero operator
    """
    scale = norm_estimate(op, seed=seed)
    if scale == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    probes = random_coords(op.dim, rng, trials)
    defect = op.matvec(probes) - sign * op.rmatvec(probes)
    ratios = np.linalg.norm(defect, axis=0) / np.linalg.norm(probes, axis=0)
    return float(ratios.max() / scale)


def psd_violation(op: OperatorSpec, trials: int = 8, seed: int = 0) -> float:
    """
    Smallest normalized curvature Re⟨v,Av⟩ / (‖v‖·‖Av‖) over random probes.

    Values below -PSD_TOL indicate the operator is not positive semidefinite.
    """
    rng = np.random.default_rng(seed)
    probes = random_coords(op.dim, rng, trials)
    images = op.matvec(probes)
    worst = 0.0
    for j in range(trials):
        denom = np.linalg.norm(probes[:, j]) * np.linalg.norm(images[:, j])
        if denom == 0:
            continue
        worst = min(worst, float(np.vdot(probes[:, j], images[:, j]).real / denom))
    return worst
