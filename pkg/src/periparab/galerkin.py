"""
Truncated Galerkin systems and their time integration.

Projecting ``u_t + L0 u + e u = f`` onto the first N eigenmodes gives

    du_j/dt + sum_k B_kj(t) u_k = f_j(t),   B_kj = lambda_j delta_kj + <e X_k, X_j>,

i.e. ``u' = -B(t)^T u + f(t)``. The diagonal part is stiff (lambda_N ~ N^2) and
is integrated exactly; the bounded perturbation and the forcing go through a
second-order exponential Runge-Kutta rule with e and f linear in t between
time nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import EigenBasis, SpatialGrid, lq_norms, project, synthesize
from .errors import ConsistencyError, IntegrationError, ValidationError

__all__ = [
    "TimeGrid",
    "Perturbation",
    "Forcing",
    "GalerkinSystem",
    "SpectralTrajectory",
    "assemble",
    "propagate",
    "propagate_batch",
]

MQ_SLACK = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int
    times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ValidationError(f"time horizon must be positive, got {self.horizon}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValidationError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "n_steps", int(self.n_steps))
        t = np.linspace(0.0, self.horizon, self.n_steps + 1)
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_nodes, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    def index_of(self, t: float) -> int:
        """Index of the time node at ``t``; raises if ``t`` is not a node."""
        pos = t / self.dt
        idx = int(round(pos))
        if not 0 <= idx <= self.n_steps or abs(pos - idx) > 1e-9:
            raise ValidationError(f"t = {t} is not a node of the time grid")
        return idx


def _space_time(values, grid: SpatialGrid, tg: TimeGrid, what: str) -> np.ndarray:
    v = np.array(values, dtype=float)
    if v.shape != (grid.n_nodes, tg.n_nodes):
        raise ValidationError(
            f"{what} must be sampled on ({grid.n_nodes}, {tg.n_nodes}) space-time nodes, got {v.shape}"
        )
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{what} has non-finite samples")
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class Perturbation:
    """Samples of ``e(x, t)`` (rows: space nodes, columns: time nodes) and its M_q ball."""

    values: np.ndarray
    q: float = 2.0
    bound_M: float = np.inf

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValidationError("perturbation values must be a 2-D space-time array")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not self.bound_M > 0:
            raise ValidationError(f"bound_M must be positive, got {self.bound_M}")

    @classmethod
    def constant(cls, value, grid: SpatialGrid, tg: TimeGrid, q=2.0, bound_M=np.inf):
        return cls(np.full((grid.n_nodes, tg.n_nodes), float(value)), q, bound_M)

    @classmethod
    def zero(cls, grid: SpatialGrid, tg: TimeGrid, q=2.0, bound_M=np.inf):
        return cls.constant(0.0, grid, tg, q, bound_M)

    @classmethod
    def from_function(cls, func, grid: SpatialGrid, tg: TimeGrid, q=2.0, bound_M=np.inf):
        """``func(x, t)`` evaluated on the broadcast space-time mesh."""
        x, t = np.meshgrid(grid.nodes, tg.times, indexing="ij")
        return cls(np.broadcast_to(func(x, t), x.shape), q, bound_M)

    def slice_norms(self, grid: SpatialGrid) -> np.ndarray:
        return lq_norms(self.values, self.q, grid)

    def check_membership(self, grid: SpatialGrid) -> float:
        """Largest slice norm; raises if it exceeds ``bound_M`` beyond a 1e-9 slack."""
        worst = float(np.max(self.slice_norms(grid)))
        if worst > self.bound_M + MQ_SLACK:
            raise ValidationError(
                f"perturbation leaves the M_q ball: max slice L^{self.q:g} norm "
                f"{worst:.6g} > M = {self.bound_M:.6g}"
            )
        return worst


@dataclass(frozen=True)
class Forcing:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValidationError("forcing values must be a 2-D space-time array")
        if not np.all(np.isfinite(v)):
            raise ValidationError("forcing has non-finite samples")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls, grid: SpatialGrid, tg: TimeGrid):
        return cls(np.zeros((grid.n_nodes, tg.n_nodes)))

    @classmethod
    def from_function(cls, func, grid: SpatialGrid, tg: TimeGrid):
        x, t = np.meshgrid(grid.nodes, tg.times, indexing="ij")
        return cls(np.broadcast_to(func(x, t), x.shape))

    @classmethod
    def separable(cls, profile_x, profile_t):
        """``f(x, t) = profile_x(x) * profile_t(t)`` from node samples."""
        return cls(np.outer(profile_x, profile_t))

    def l2_norm_sq(self, grid: SpatialGrid, tg: TimeGrid) -> float:
        """Space-time trapezoid value of ``int_Q f^2``."""
        w = grid.quad_weights[:, None] * tg.trapezoid_weights[None, :]
        return float(np.sum(w * self.values**2))


@dataclass(frozen=True)
class GalerkinSystem:
    """Coupling matrices ``B(t_i)`` (shape ``(n_t, N, N)``) and forcing coefficients ``(N, n_t)``."""

    coupling: np.ndarray
    forcing_coeffs: np.ndarray
    basis: EigenBasis
    time_grid: TimeGrid

    @property
    def n_modes(self) -> int:
        return self.basis.n_modes

    @property
    def perturbation_blocks(self) -> np.ndarray:
        """``E(t_i) = B(t_i) - diag(lambda)`` for all time nodes."""
        return self.coupling - np.diag(self.basis.lambdas)[None, :, :]

    def homogeneous(self) -> "GalerkinSystem":
        """Same coupling, zero forcing."""
        return GalerkinSystem(
            self.coupling, np.zeros_like(self.forcing_coeffs), self.basis, self.time_grid
        )


@dataclass(frozen=True)
class SpectralTrajectory:
    """Coefficients ``u_j(t_i)``: column ``i`` holds the state at ``times[i]``."""

    coeffs: np.ndarray
    basis: EigenBasis
    time_grid: TimeGrid
    start_index: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.time_grid.times[self.start_index : self.start_index + self.coeffs.shape[1]]

    @property
    def initial(self) -> np.ndarray:
        return self.coeffs[:, 0]

    @property
    def final(self) -> np.ndarray:
        return self.coeffs[:, -1]

    def field(self) -> np.ndarray:
        """Node samples ``u(x_i, t_j)``."""
        return synthesize(self.coeffs, self.basis)


def assemble(basis: EigenBasis, e: Perturbation, f: Forcing, tg: TimeGrid) -> GalerkinSystem:
    grid = basis.grid
    shape = (grid.n_nodes, tg.n_nodes)
    if e.values.shape != shape:
        raise ValidationError(f"perturbation shape {e.values.shape} != {shape}")
    if f.values.shape != shape:
        raise ValidationError(f"forcing shape {f.values.shape} != {shape}")
    if not np.all(np.isfinite(e.values)):
        raise ValidationError("perturbation has non-finite samples")
    e.check_membership(grid)

    n = basis.n_modes
    m = basis.modes
    # one BLAS call: E[t, k, j] = sum_x w_x e(x, t) X_k(x) X_j(x)
    products = (m[:, :, None] * m[:, None, :]).reshape(grid.n_nodes, n * n)
    pert = (e.values.T @ (grid.quad_weights[:, None] * products)).reshape(tg.n_nodes, n, n)
    scale = max(1.0, float(np.max(np.abs(pert), initial=0.0)))
    if np.max(np.abs(pert - pert.transpose(0, 2, 1)), initial=0.0) > 1e-10 * scale:
        raise ConsistencyError("perturbation block lost symmetry")
    coupling = pert + np.diag(basis.lambdas)[None, :, :]
    coupling.setflags(write=False)
    fc = project(f.values, basis)
    fc.setflags(write=False)
    return GalerkinSystem(coupling, fc, basis, tg)


def _phi1(z):
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out


def _phi2(z):
    out = np.empty_like(z)
    small = np.abs(z) < 1e-2
    zs = z[small]
    # series sum_k z^k / (k+2)!
    term = np.full_like(zs, 0.5)
    acc = term.copy()
    for k in range(1, 8):
        term = term * zs / (k + 2)
        acc += term
    out[small] = acc
    zb = z[~small]
    out[~small] = (np.expm1(zb) - zb) / zb**2
    return out


def _interval(sys: GalerkinSystem, span):
    tg = sys.time_grid
    if span is None:
        return 0, tg.n_steps
    i0, i1 = tg.index_of(span[0]), tg.index_of(span[1])
    if i1 < i0:
        raise ValidationError(f"span {span} is reversed")
    return i0, i1


def propagate_batch(sys: GalerkinSystem, initial: np.ndarray, span=None, forced: bool = True) -> np.ndarray:
    """
    Integrate several initial columns at once.

    ``initial`` has shape ``(N, m)``; the result has shape ``(n_span_nodes, N, m)``.
    With ``forced=False`` the forcing is dropped (homogeneous system).
    """
    u = np.array(initial, dtype=float)
    n = sys.n_modes
    if u.ndim != 2 or u.shape[0] != n:
        raise ValidationError(f"initial data must have shape ({n}, m), got {u.shape}")
    i0, i1 = _interval(sys, span)
    dt = sys.time_grid.dt
    z = -sys.basis.lambdas * dt
    decay = np.exp(z)[:, None]
    w1 = (_phi1(z) * dt)[:, None]
    w2 = (_phi2(z) * dt)[:, None]
    # -B^T = -diag(lambda) - E^T
    pert_t = sys.perturbation_blocks.transpose(0, 2, 1)
    active = np.any(pert_t != 0, axis=(1, 2))
    fc = sys.forcing_coeffs if forced else np.zeros_like(sys.forcing_coeffs)

    def rhs(i, v):
        g = np.broadcast_to(fc[:, i : i + 1], v.shape).copy()
        if active[i]:
            g -= pert_t[i] @ v
        return g

    out = np.empty((i1 - i0 + 1, n, u.shape[1]))
    out[0] = u
    # overflow is detected explicitly below
    with np.errstate(over="ignore", invalid="ignore"):
        g_n = rhs(i0, u)
        for step, i in enumerate(range(i0, i1), start=1):
            a = decay * u + w1 * g_n
            g_a = rhs(i + 1, a)
            u = a + w2 * (g_a - g_n)
            if not np.all(np.isfinite(u)):
                raise IntegrationError(f"non-finite state at time node {i + 1}", i + 1)
            out[step] = u
            g_n = rhs(i + 1, u)
    return out


def propagate(sys: GalerkinSystem, initial: np.ndarray, span=None, forced: bool = True) -> SpectralTrajectory:
    """
    Solve ``u' = -B(t)^T u + f(t)`` from ``initial`` over ``span = (t0, t1)``.

    Exact for ``e = 0`` and forcing linear between time nodes; second order otherwise.
    """
    a = np.asarray(initial, dtype=float)
    if a.shape != (sys.n_modes,):
        raise ValidationError(f"initial coefficients must have shape ({sys.n_modes},), got {a.shape}")
    states = propagate_batch(sys, a[:, None], span, forced)[:, :, 0]
    i0, _ = _interval(sys, span)
    return SpectralTrajectory(states.T.copy(), sys.basis, sys.time_grid, i0)
