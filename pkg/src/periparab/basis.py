"""
Dirichlet eigenbases of one-dimensional self-adjoint elliptic operators.

The operator handled here is

    L0 u = -(a u')' + b u' - (b u)' + c u,

which in one space dimension collapses to ``-(a u')' + (c - b') u``. Everything
downstream (Galerkin assembly, projections, norms) works with node samples on a
uniform grid and the composite trapezoid rule, so the discrete inner product is
``<u, v> = sum(w * u * v)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConsistencyError, ResolutionError, ValidationError

__all__ = [
    "SpatialGrid",
    "OperatorSpec",
    "EigenBasis",
    "dirichlet_laplacian_basis",
    "solve_operator_eigenproblem",
    "apply_operator",
    "project",
    "synthesize",
    "lq_norm",
    "inner",
]

MIN_Q = 1.5


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on ``(0, length)`` with trapezoid quadrature weights."""

    length: float
    n_nodes: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    quad_weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not np.isfinite(self.length) or self.length <= 0:
            raise ValidationError(f"grid length must be positive, got {self.length}")
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 3:
            raise ValidationError(f"n_nodes must be an integer >= 3, got {self.n_nodes}")
        object.__setattr__(self, "length", float(self.length))
        object.__setattr__(self, "n_nodes", int(self.n_nodes))
        nodes = np.linspace(0.0, self.length, self.n_nodes)
        w = np.full(self.n_nodes, self.h)
        w[0] = w[-1] = 0.5 * self.h
        object.__setattr__(self, "nodes", _frozen(nodes))
        object.__setattr__(self, "quad_weights", _frozen(w))

    @property
    def h(self) -> float:
        return self.length / (self.n_nodes - 1)

    def sample(self, func) -> np.ndarray:
        """Evaluate a vectorized callable (or broadcast a constant) on the nodes."""
        if callable(func):
            return np.asarray(func(self.nodes), dtype=float) * np.ones(self.n_nodes)
        return np.full(self.n_nodes, float(func))


@dataclass(frozen=True)
class OperatorSpec:
    """Node samples of the coefficients ``a`` (diffusion), ``b`` (drift), ``c`` (potential)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lambda_floor: float = 1e-12

    def __post_init__(self):
        for name in ("a", "b", "c"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise ValidationError(f"coefficient {name} must be one-dimensional")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"coefficient {name} has non-finite samples")
            object.__setattr__(self, name, _frozen(arr))
        if not (self.a.shape == self.b.shape == self.c.shape):
            raise ValidationError("coefficients a, b, c must share one length")
        if self.lambda_floor <= 0:
            raise ValidationError("lambda_floor must be positive")
        if np.min(self.a) < self.lambda_floor:
            raise ValidationError(
                f"ellipticity violated: min a = {np.min(self.a):.6g} < {self.lambda_floor:.6g}"
            )

    @classmethod
    def from_functions(cls, grid: SpatialGrid, a=1.0, b=0.0, c=0.0, lambda_floor=1e-12):
        """Build from constants or vectorized callables evaluated on ``grid``."""
        return cls(grid.sample(a), grid.sample(b), grid.sample(c), lambda_floor)


@dataclass(frozen=True)
class EigenBasis:
    """Eigenpairs ``(lambdas[j], modes[:, j])`` orthonormal in the quadrature inner product."""

    lambdas: np.ndarray
    modes: np.ndarray
    grid: SpatialGrid

    def __post_init__(self):
        lam = _frozen(self.lambdas)
        modes = _frozen(np.atleast_2d(self.modes))
        if modes.shape != (self.grid.n_nodes, lam.size):
            raise ValidationError(
                f"modes shape {modes.shape} incompatible with {lam.size} eigenvalues "
                f"on {self.grid.n_nodes} nodes"
            )
        if np.any(np.diff(lam) < 0):
            raise ConsistencyError("eigenvalues are not sorted ascending")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "modes", modes)

    @property
    def n_modes(self) -> int:
        return self.lambdas.size

    def truncate(self, n_modes: int) -> "EigenBasis":
        if not 1 <= n_modes <= self.n_modes:
            raise ValidationError(f"cannot truncate {self.n_modes} modes to {n_modes}")
        return EigenBasis(self.lambdas[:n_modes], self.modes[:, :n_modes], self.grid)

    def gram(self) -> np.ndarray:
        """Quadrature Gram matrix of the modes (identity up to rounding)."""
        wm = self.modes * self.grid.quad_weights[:, None]
        return wm.T @ self.modes


def dirichlet_laplacian_basis(n_modes: int, grid: SpatialGrid, potential: float = 0.0) -> EigenBasis:
    """
    Analytic sine basis of ``-u'' + potential * u`` with Dirichlet conditions.

    ``lambda_k = (k pi / L)^2 + potential`` and ``X_k = sqrt(2/L) sin(k pi x / L)``.
    Sampled sines are exactly orthonormal under the trapezoid rule as long as
    ``k < n_nodes - 1``; we additionally require two samples per half wave.
    """
    if int(n_modes) != n_modes or n_modes < 1:
        raise ValidationError(f"n_modes must be a positive integer, got {n_modes}")
    n_modes = int(n_modes)
    freq = np.arange(1, n_modes + 1) * np.pi / grid.length
    if freq[-1] * grid.h > np.pi / 2:
        raise ResolutionError(
            f"mode {n_modes} is under-resolved on {grid.n_nodes} nodes "
            f"(k pi h / L = {freq[-1] * grid.h:.3f} > pi/2)"
        )
    modes = np.sqrt(2.0 / grid.length) * np.sin(np.outer(grid.nodes, freq))
    modes[0, :] = 0.0
    modes[-1, :] = 0.0
    return EigenBasis(freq**2 + potential, modes, grid)


def _stencil(op: OperatorSpec, grid: SpatialGrid):
    """Diagonal, lower and upper bands of the interior finite-difference matrix."""
    if op.a.size != grid.n_nodes:
        raise ValidationError(f"operator has {op.a.size} samples, grid has {grid.n_nodes} nodes")
    h2 = grid.h**2
    a_half = 0.5 * (op.a[1:] + op.a[:-1])  # a at x_{i+1/2}, i = 0..n-2
    c_eff = op.c - np.gradient(op.b, grid.h)
    diag = (a_half[:-1] + a_half[1:]) / h2 + c_eff[1:-1]
    # row i couples to i+1 through a_{i+1/2}; row i+1 couples back through a_{(i+1)-1/2}
    upper = -a_half[1:-1] / h2
    lower = -a_half[1:-1] / h2
    return diag, lower, upper


def apply_operator(op: OperatorSpec, grid: SpatialGrid, samples: np.ndarray) -> np.ndarray:
    """Discrete ``L0 u`` at interior nodes; boundary entries are zero."""
    u = np.asarray(samples, dtype=float)
    diag, lower, upper = _stencil(op, grid)
    out = np.zeros_like(u)
    inner_u = u[1:-1]
    res = diag.reshape((-1,) + (1,) * (u.ndim - 1)) * inner_u
    res[:-1] += upper.reshape((-1,) + (1,) * (u.ndim - 1)) * inner_u[1:]
    res[1:] += lower.reshape((-1,) + (1,) * (u.ndim - 1)) * inner_u[:-1]
    out[1:-1] = res
    return out


def solve_operator_eigenproblem(op: OperatorSpec, grid: SpatialGrid, n_modes: int) -> EigenBasis:
    """
    Lowest ``n_modes`` eigenpairs of the second-order discretization of ``L0``.

    Uses the symmetric three-point stencil with ``a`` averaged at half nodes and
    ``c - b'`` with ``b'`` from central differences. Eigenvectors are extended by
    zero to the boundary, scaled to unit quadrature norm and sign-fixed so the
    first interior sample is nonnegative.
    """
    m = grid.n_nodes - 2
    if int(n_modes) != n_modes or not 1 <= n_modes <= m:
        raise ValidationError(f"n_modes must lie in [1, {m}], got {n_modes}")
    diag, lower, upper = _stencil(op, grid)
    scale = max(np.max(np.abs(diag)), 1.0)
    if np.max(np.abs(upper - lower), initial=0.0) > 1e-12 * scale:
        raise ConsistencyError("discretized operator is not symmetric")
    lam, vecs = eigh_tridiagonal(diag, upper, select="i", select_range=(0, int(n_modes) - 1))
    order = np.argsort(lam, kind="stable")
    lam, vecs = lam[order], vecs[:, order]
    modes = np.zeros((grid.n_nodes, lam.size))
    modes[1:-1] = vecs / np.sqrt(grid.h)
    # deterministic sign: first clearly nonzero sample positive
    for j in range(lam.size):
        col = modes[:, j]
        idx = np.argmax(np.abs(col) > 1e-8 * np.max(np.abs(col)))
        if col[idx] < 0:
            modes[:, j] = -col
    return EigenBasis(lam, modes, grid)


def inner(u: np.ndarray, v: np.ndarray, grid: SpatialGrid) -> float:
    return float(np.sum(grid.quad_weights * u * v))


def project(samples: np.ndarray, basis: EigenBasis) -> np.ndarray:
    """Coefficients ``<samples, X_j>``; accepts ``(n_nodes,)`` or ``(n_nodes, m)`` input."""
    s = np.asarray(samples, dtype=float)
    if s.shape[0] != basis.grid.n_nodes:
        raise ValidationError(f"expected {basis.grid.n_nodes} node samples, got {s.shape[0]}")
    wm = basis.modes * basis.grid.quad_weights[:, None]
    return wm.T @ s


def synthesize(coefficients: np.ndarray, basis: EigenBasis) -> np.ndarray:
    """Pointwise sum ``sum_j c_j X_j``; fewer coefficients than modes uses the leading modes."""
    c = np.asarray(coefficients, dtype=float)
    n = c.shape[0]
    if n > basis.n_modes:
        raise ValidationError(f"{n} coefficients exceed the basis size {basis.n_modes}")
    return basis.modes[:, :n] @ c


def _check_q(q):
    if not np.isfinite(q) or q < MIN_Q:
        raise ValidationError(f"exponent q must be finite and >= {MIN_Q}, got {q}")


def lq_norm(slice_: np.ndarray, q: float, grid: SpatialGrid) -> float:
    """Trapezoid approximation of ``(int |s|^q dx)^(1/q)``."""
    _check_q(q)
    s = np.asarray(slice_, dtype=float)
    if s.shape != (grid.n_nodes,):
        raise ValidationError(f"expected {grid.n_nodes} samples, got shape {s.shape}")
    return float(np.sum(grid.quad_weights * np.abs(s) ** q) ** (1.0 / q))


def lq_norms(values: np.ndarray, q: float, grid: SpatialGrid) -> np.ndarray:
    """Column-wise :func:`lq_norm` of an ``(n_nodes, n_t)`` array."""
    _check_q(q)
    v = np.asarray(values, dtype=float)
    return np.sum(grid.quad_weights[:, None] * np.abs(v) ** q, axis=0) ** (1.0 / q)
