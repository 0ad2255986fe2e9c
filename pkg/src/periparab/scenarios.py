"""
The shifted heat equation ``y_t = y_xx + c y + f`` with ``c = (K pi / L)^2``.

Mode K of ``-d^2/dx^2 - c`` is neutral, so a solution whose modes beyond K-1
are periodic exists only when the K-th forcing coefficient has zero weighted
time integral; prescribing mode K as a head coefficient removes the obstruction.
Each mode obeys

    a_k(T) e^{m_k T} - a_k(0) = int_0^T f_k(t) e^{m_k t} dt,   m_k = (k pi / L)^2 - c.
"""

from __future__ import annotations

import numpy as np

from .basis import SpatialGrid, dirichlet_laplacian_basis
from .errors import NearSingularityError
from .galerkin import Forcing, Perturbation, SpectralTrajectory, TimeGrid, _phi1, _phi2, assemble, propagate
from .periodic import CONDITION_LIMIT, SplitIndex, monodromy, periodicity_residual, solve_direct


def neutral_shift(K: int, length: float = 1.0) -> float:
    return (K * np.pi / length) ** 2


def weighted_forcing_integral(fk: np.ndarray, rate: float, tg: TimeGrid) -> float:
    """
    ``exp(-max(rate T, 0)) * int_0^T f(t) e^{rate t} dt`` for ``f`` linear between nodes.

    The prefactor keeps growing modes representable; it matches :func:`mode_relation_violations`.
    """
    dt = tg.dt
    t = tg.times
    shift = max(rate * tg.horizon, 0.0)
    z = np.array([rate * dt])
    p1 = _phi1(z)[0]
    p2 = _phi2(-z)[0]
    left = np.exp(rate * t[:-1] - shift)
    right = np.exp(rate * t[1:] - shift)
    df = np.diff(fk)
    return float(dt * np.sum(left * fk[:-1] * p1 + right * df * p2))


def mode_relation_violations(traj: SpectralTrajectory, forcing_coeffs: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """
    Per-mode ``|a_k(T) e^{m T} - a_k(0) - int f_k e^{m t}|``, with both sides
    multiplied by ``exp(-max(m T, 0))`` to avoid overflow for strongly damped modes.
    """
    tg = traj.time_grid
    T = tg.horizon
    out = np.empty(traj.coeffs.shape[0])
    for k, m in enumerate(rates):
        shift = max(m * T, 0.0)
        lhs = traj.coeffs[k, -1] * np.exp(m * T - shift) - traj.coeffs[k, 0] * np.exp(-shift)
        out[k] = abs(lhs - weighted_forcing_integral(forcing_coeffs[k], m, tg))
    return out


def run_example34(
    K: int,
    grid: SpatialGrid | None = None,
    tg: TimeGrid | None = None,
    n_modes: int = 16,
    forcing: Forcing | None = None,
    head=None,
    condition_limit: float = CONDITION_LIMIT,
) -> dict:
    """
    Solve the shifted heat equation at splits K-1 and K and report the outcome.

    The report holds the condition number of ``I - J`` at both splits, the status of
    the K-1 problem (``singular_inconsistent``, ``singular_consistent`` or
    ``solvable``), and the worst violation of the per-mode relation at split K.
    """
    grid = grid or SpatialGrid(1.0, 201)
    tg = tg or TimeGrid(1.0, 200)
    if forcing is None:
        profile = np.sin(K * np.pi * grid.nodes / grid.length)
        profile[[0, -1]] = 0.0
        forcing = Forcing.separable(profile, np.ones(tg.n_nodes))
    head = np.ones(K) if head is None else np.asarray(head, dtype=float).reshape(K)
    c = neutral_shift(K, grid.length)
    basis = dirichlet_laplacian_basis(n_modes, grid, potential=-c)
    sys = assemble(basis, Perturbation.zero(grid, tg), forcing, tg)
    phi = monodromy(sys)

    # split K-1: mode K sits in the tail with a unit multiplier
    lower = SplitIndex(K - 1, n_modes)
    mat = np.eye(lower.n_tail) - phi[K - 1 :, K - 1 :]
    sv = np.linalg.svd(mat, compute_uv=False)
    cond_lower = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    start = np.zeros(n_modes)
    start[: K - 1] = head[: K - 1]
    offset = propagate(sys, start).final[K - 1 :]
    lstsq_tail = np.linalg.lstsq(mat, offset, rcond=None)[0]
    mismatch = float(np.linalg.norm(mat @ lstsq_tail - offset))
    consistent = mismatch <= 1e-10 * max(1.0, float(np.linalg.norm(offset)))
    if cond_lower <= condition_limit:
        status = "solvable"
    else:
        status = "singular_consistent" if consistent else "singular_inconsistent"
    lower_traj = propagate(sys, np.concatenate([head[: K - 1], lstsq_tail]))

    try:
        solve_direct(sys, head[: K - 1], lower, phi=phi, condition_limit=condition_limit)
        lower_raised = False
    except NearSingularityError:
        lower_raised = True

    upper = SplitIndex(K, n_modes)
    sol = solve_direct(sys, head, upper, phi=phi, condition_limit=condition_limit)
    violations = mode_relation_violations(sol.trajectory, sys.forcing_coeffs, basis.lambdas)

    return {
        "K": K,
        "c": c,
        "n_modes": n_modes,
        "split_K_minus_1": {
            "k": K - 1,
            "condition": None if not np.isfinite(cond_lower) else cond_lower,
            "exactly_singular": not np.isfinite(cond_lower),
            "near_singularity_raised": lower_raised,
            "status": status,
            "rhs_mismatch": mismatch,
            "least_squares_residual": periodicity_residual(lower_traj, lower),
        },
        "split_K": {
            "k": K,
            "condition": sol.condition,
            "residual": sol.residual,
            "head": sol.head.tolist(),
            "tail": sol.tail.tolist(),
            "relation_violations": violations.tolist(),
            "max_relation_violation": float(np.max(violations)),
        },
    }
