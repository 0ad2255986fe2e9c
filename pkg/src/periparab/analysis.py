"""Energy diagnostics and field evaluation for computed solutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .galerkin import Forcing, GalerkinSystem, SpectralTrajectory
from .periodic import PeriodicSolution

__all__ = ["EnergyReport", "energy_report", "evaluate_field", "gradient_integral"]


@dataclass(frozen=True)
class EnergyReport:
    sup_l2_sq: float
    grad_integral: float
    data_norm_sq: float
    ratio: float

    @property
    def energy(self) -> float:
        return self.sup_l2_sq + self.grad_integral

    def as_dict(self) -> dict:
        return {
            "sup_l2_sq": self.sup_l2_sq,
            "grad_integral": self.grad_integral,
            "data_norm_sq": self.data_norm_sq,
            "ratio": self.ratio,
        }


def gradient_integral(traj: SpectralTrajectory) -> float:
    """``int_0^T ||u_x||^2 dt`` from central differences of the synthesized field."""
    grid = traj.basis.grid
    field = traj.field()
    du = np.gradient(field, grid.h, axis=0, edge_order=2)
    per_time = grid.quad_weights @ du**2
    times = traj.times
    if times.size < 2:
        return 0.0
    return float(np.trapezoid(per_time, times))


def energy_report(sol: PeriodicSolution, sys: GalerkinSystem, a_I, f: Forcing) -> EnergyReport:
    """
    Left and right hand sides of the a-priori energy bound.

    The sup in time runs over time nodes; by orthonormality ``||u(t)||^2 = sum_j u_j(t)^2``.
    """
    traj = sol.trajectory
    sup_l2 = float(np.max(np.sum(traj.coeffs**2, axis=0)))
    grad = gradient_integral(traj)
    a = np.asarray(a_I, dtype=float).reshape(-1)
    data = float(a @ a) + f.l2_norm_sq(sys.basis.grid, sys.time_grid)
    ratio = (sup_l2 + grad) / data if data > 0 else (0.0 if sup_l2 + grad == 0 else np.inf)
    return EnergyReport(sup_l2, grad, data, float(ratio))


def evaluate_field(traj: SpectralTrajectory, x_indices, t_indices) -> np.ndarray:
    """Block ``u(x_i, t_j)`` for node indices ``x_indices`` and trajectory column indices ``t_indices``."""
    xi = np.atleast_1d(np.asarray(x_indices))
    ti = np.atleast_1d(np.asarray(t_indices))
    n_x = traj.basis.grid.n_nodes
    n_t = traj.coeffs.shape[1]
    for name, idx, n in (("x", xi, n_x), ("t", ti, n_t)):
        if idx.dtype.kind not in "iu":
            raise ValidationError(f"{name} indices must be integers")
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValidationError(f"{name} indices out of range [0, {n})")
    n_modes = traj.coeffs.shape[0]
    return traj.basis.modes[np.ix_(xi, np.arange(n_modes))] @ traj.coeffs[:, ti]
