"""
K-approximate periodic solutions of the truncated Galerkin system.

The first K coefficients (the head) are prescribed at t = 0, the remaining
ones (the tail) must satisfy ``u_j(0) = u_j(T)``. With the head fixed, the map

    a_tail  ->  tail of u(T) started from (a_head, a_tail)

is affine with linear part J (the tail block of the monodromy matrix). When J
is a contraction the periodic tail is its unique fixed point; we find it either
by Banach iteration or by solving ``(I - J) a_tail = c`` directly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    CapacityError,
    NearSingularityError,
    NonContractionError,
    ToleranceNotMetError,
    ValidationError,
)
from .galerkin import GalerkinSystem, SpectralTrajectory, propagate, propagate_batch

logger = logging.getLogger(__name__)

__all__ = [
    "SplitIndex",
    "ContractionEstimate",
    "PeriodicSolution",
    "monodromy",
    "tail_operator",
    "power_norm",
    "tail_monodromy_norm",
    "choose_k",
    "solve_fixed_point",
    "solve_direct",
    "periodicity_residual",
    "DEFAULT_MU_TARGET",
    "PROOF_LIPSCHITZ",
    "CONDITION_LIMIT",
]

DEFAULT_MU_TARGET = 0.75
# Lipschitz constant used for the tail map when its squared norm is bounded by 3/4.
PROOF_LIPSCHITZ = float(np.sqrt(3.0) / 2.0)
CONDITION_LIMIT = 1e8


@dataclass(frozen=True)
class SplitIndex:
    """``k`` head modes out of ``n`` retained modes."""

    k: int
    n: int

    def __post_init__(self):
        if int(self.k) != self.k or int(self.n) != self.n:
            raise ValidationError("split indices must be integers")
        if not 0 <= self.k < self.n:
            raise ValidationError(f"split requires 0 <= k < n, got k={self.k}, n={self.n}")

    @property
    def n_tail(self) -> int:
        return self.n - self.k


@dataclass(frozen=True)
class ContractionEstimate:
    mu: float
    split: SplitIndex
    iterations: int
    converged: bool


@dataclass(frozen=True)
class PeriodicSolution:
    trajectory: SpectralTrajectory
    head: np.ndarray
    tail: np.ndarray
    residual: float
    method: str
    split: SplitIndex
    iterations: int = 0
    # Euclidean norms of successive fixed-point updates (empty for the direct method)
    step_norms: tuple = ()
    condition: float = float("nan")
    mu: float = float("nan")

    def contraction_ratios(self) -> np.ndarray:
        s = np.asarray(self.step_norms)
        return s[1:] / s[:-1] if s.size > 1 else np.empty(0)


def _check_split(sys: GalerkinSystem, split: SplitIndex):
    if split.n != sys.n_modes:
        raise ValidationError(f"split n = {split.n} does not match system size {sys.n_modes}")


def monodromy(sys: GalerkinSystem) -> np.ndarray:
    """Homogeneous solution operator over the full horizon, ``u(T) = Phi u(0)``."""
    n = sys.n_modes
    return propagate_batch(sys, np.eye(n), forced=False)[-1]


def tail_operator(sys: GalerkinSystem, split: SplitIndex, phi: np.ndarray | None = None) -> np.ndarray:
    """Matrix of J: zero head, tail ``a`` in, tail of ``u(T)`` out."""
    _check_split(sys, split)
    if phi is None:
        n = sys.n_modes
        cols = np.zeros((n, split.n_tail))
        cols[split.k :, :] = np.eye(split.n_tail)
        return propagate_batch(sys, cols, forced=False)[-1][split.k :, :]
    return phi[split.k :, split.k :]


def power_norm(mat: np.ndarray, seed: int = 0, max_iter: int = 1000, rtol: float = 1e-10):
    """
    Spectral norm of ``mat`` by power iteration on ``mat^T mat``.

    Returns ``(norm, iterations, converged)``; convergence means two successive
    Rayleigh quotients agree to ``rtol`` relative.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(mat.shape[1])
    x /= np.linalg.norm(x)
    rq_old = None
    for it in range(1, max_iter + 1):
        y = mat @ x
        w = mat.T @ y
        rq = float(x @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, it, True
        x = w / nw
        if rq_old is not None and abs(rq - rq_old) <= rtol * abs(rq):
            return float(np.sqrt(max(rq, 0.0))), it, True
        rq_old = rq
    return float(np.sqrt(max(rq, 0.0))), max_iter, False


def tail_monodromy_norm(
    sys: GalerkinSystem,
    split: SplitIndex,
    seed: int = 0,
    max_iter: int = 1000,
    phi: np.ndarray | None = None,
) -> ContractionEstimate:
    """Empirical contraction constant of the tail map (largest singular value of J)."""
    jmat = tail_operator(sys, split, phi)
    mu, iters, ok = power_norm(jmat, seed, max_iter)
    if not ok:
        logger.warning("power iteration did not converge in %d steps (k=%d)", max_iter, split.k)
    return ContractionEstimate(mu, split, iters, ok)


def choose_k(
    sys: GalerkinSystem,
    mu_target: float = DEFAULT_MU_TARGET,
    k_max: int | None = None,
    seed: int = 0,
) -> SplitIndex:
    """Smallest head size whose tail map has norm at most ``mu_target``."""
    if not 0 < mu_target < 1:
        raise ValidationError(f"mu_target must lie in (0, 1), got {mu_target}")
    n = sys.n_modes
    k_max = n - 1 if k_max is None else min(int(k_max), n - 1)
    phi = monodromy(sys)
    for k in range(k_max + 1):
        split = SplitIndex(k, n)
        est = tail_monodromy_norm(sys, split, seed=seed, phi=phi)
        logger.debug("k=%d mu=%.6g", k, est.mu)
        if est.mu <= mu_target:
            return split
    raise CapacityError(
        f"no split k <= {k_max} reaches mu <= {mu_target}; increase the number of modes N"
    )


def periodicity_residual(traj: SpectralTrajectory, split: SplitIndex) -> float:
    """``max_{j > K} |u_j(T) - u_j(0)|``."""
    c = traj.coeffs
    if c.shape[0] <= split.k or c.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(c[split.k :, -1] - c[split.k :, 0])))


def _head(a_I, split: SplitIndex) -> np.ndarray:
    a = np.zeros(split.k) if a_I is None else np.asarray(a_I, dtype=float).reshape(-1)
    if a.shape != (split.k,):
        raise ValidationError(f"head vector must have {split.k} entries, got {a.size}")
    return a


def solve_fixed_point(
    sys: GalerkinSystem,
    a_I,
    split: SplitIndex,
    tol: float = 1e-9,
    max_iter: int = 500,
    mu: float | None = None,
    initial_tail=None,
    seed: int = 0,
) -> PeriodicSolution:
    """
    Banach iteration ``a <- tail of u(T)`` started from ``initial_tail`` (default 0).

    Stops once ``|a_{m+1} - a_m| <= tol (1 - mu) / mu``, which bounds the distance
    to the fixed point by ``tol``, and the periodicity residual is below ``tol``.
    ``mu`` is estimated with :func:`tail_monodromy_norm` when not supplied.
    """
    _check_split(sys, split)
    if tol <= 0:
        raise ValidationError("tol must be positive")
    head = _head(a_I, split)
    if mu is None:
        mu = tail_monodromy_norm(sys, split, seed=seed).mu
    if mu >= 1.0:
        raise NonContractionError(f"tail map is not contractive (mu = {mu:.6g}) at k = {split.k}")
    threshold = np.inf if mu == 0 else tol * (1.0 - mu) / mu

    k = split.k
    tail = np.zeros(split.n_tail) if initial_tail is None else np.array(initial_tail, dtype=float)
    if tail.shape != (split.n_tail,):
        raise ValidationError(f"initial tail must have {split.n_tail} entries")
    traj = propagate(sys, np.concatenate([head, tail]))
    steps = []
    for it in range(1, max_iter + 1):
        new = traj.final[k:]
        step = float(np.linalg.norm(new - tail))
        steps.append(step)
        if len(steps) > 1 and step > 2.0 * steps[0] and step > tol:
            raise NonContractionError(
                f"fixed-point iteration diverges (step {step:.3g} vs initial {steps[0]:.3g})"
            )
        tail = new
        traj = propagate(sys, np.concatenate([head, tail]))
        residual = periodicity_residual(traj, split)
        if step <= threshold and residual <= tol:
            return PeriodicSolution(
                traj, head, tail.copy(), residual, "fixed_point", split, it, tuple(steps), mu=mu
            )
    best = PeriodicSolution(
        traj, head, tail.copy(), periodicity_residual(traj, split), "fixed_point", split,
        max_iter, tuple(steps), mu=mu,
    )
    raise ToleranceNotMetError(
        f"fixed-point iteration did not reach tol = {tol:g} in {max_iter} steps "
        f"(residual {best.residual:.3g})",
        best,
    )


def _affine_offset(sys: GalerkinSystem, head: np.ndarray, split: SplitIndex) -> np.ndarray:
    start = np.zeros(sys.n_modes)
    start[: split.k] = head
    return propagate(sys, start).final[split.k :]


def solve_direct(
    sys: GalerkinSystem,
    a_I,
    split: SplitIndex,
    phi: np.ndarray | None = None,
    condition_limit: float = CONDITION_LIMIT,
) -> PeriodicSolution:
    """
    Periodic tail from the linear system ``(I - J) a_tail = c``.

    ``c`` is the tail at T of the forced solution started from ``(a_head, 0)``.
    Raises :class:`NearSingularityError` when ``cond(I - J)`` exceeds
    ``condition_limit`` (a neutral or growing tail mode).
    """
    _check_split(sys, split)
    head = _head(a_I, split)
    jmat = tail_operator(sys, split, phi)
    system = np.eye(split.n_tail) - jmat
    cond = float(np.linalg.cond(system))
    if not np.isfinite(cond) or cond > condition_limit:
        raise NearSingularityError(
            f"I - J is near-singular (condition {cond:.3g}) at k = {split.k}; "
            "a tail mode is neutral or growing",
            cond,
        )
    offset = _affine_offset(sys, head, split)
    tail = np.linalg.solve(system, offset)
    traj = propagate(sys, np.concatenate([head, tail]))
    return PeriodicSolution(
        traj, head, tail, periodicity_residual(traj, split), "direct", split, condition=cond
    )
