"""
Identification of the perturbation ``e(x, t)`` and the head coefficients ``a_I``
from observations of the approximate periodic solution on ``omega x (0, T)``.

For fixed ``e`` the solution is affine in ``a_I``, so the best head follows from
a K x K least-squares (Gram) system. The perturbation lives on a coarse tensor
grid of piecewise-linear hats and is updated by projected gradient descent with
central finite-difference gradients of the head-reduced objective.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from .basis import EigenBasis, SpatialGrid, lq_norms
from .errors import (
    ContractionBudgetError,
    IllPosedObservationError,
    NearSingularityError,
    NonContractionError,
    ValidationError,
)
from .galerkin import Forcing, Perturbation, TimeGrid, assemble, propagate_batch
from .periodic import CONDITION_LIMIT, DEFAULT_MU_TARGET, SplitIndex, monodromy, power_norm

logger = logging.getLogger(__name__)

__all__ = [
    "ObservationWindow",
    "IdentificationProblem",
    "IdentificationResult",
    "IdentifyConfig",
    "hat_matrix",
    "objective",
    "solve_head_given_e",
    "project_onto_mq",
    "identify",
    "twin_target",
]

GRAM_RTOL = 1e-12
# slices are rescaled only beyond this relative excess so projection is idempotent
PROJECTION_SLACK = 1e-12


@dataclass(frozen=True)
class ObservationWindow:
    """Contiguous set of grid nodes forming the observation interval omega."""

    x_mask: np.ndarray

    def __post_init__(self):
        mask = np.array(self.x_mask, dtype=bool)
        idx = np.flatnonzero(mask)
        if idx.size == 0 or np.any(np.diff(idx) != 1):
            raise ValidationError("observation window must be a non-empty contiguous node range")
        interior = idx[(idx > 0) & (idx < mask.size - 1)]
        if interior.size < 3:
            raise ValidationError("observation window needs at least 3 interior nodes")
        mask.setflags(write=False)
        object.__setattr__(self, "x_mask", mask)

    @classmethod
    def from_interval(cls, grid: SpatialGrid, x_min: float, x_max: float):
        eps = 1e-9 * grid.h
        return cls((grid.nodes >= x_min - eps) & (grid.nodes <= x_max + eps))

    @classmethod
    def full(cls, grid: SpatialGrid):
        return cls(np.ones(grid.n_nodes, dtype=bool))

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.x_mask)

    def weights(self, grid: SpatialGrid) -> np.ndarray:
        """Trapezoid weights on the window nodes."""
        w = np.full(self.indices.size, grid.h)
        w[0] = w[-1] = 0.5 * grid.h
        return w


def hat_matrix(points: np.ndarray, n_knots: int) -> np.ndarray:
    """
    Piecewise-linear interpolation matrix from ``n_knots`` equispaced knots
    spanning ``points`` to ``points``. A single knot means a constant.
    """
    if n_knots < 1:
        raise ValidationError("parameterization needs at least one knot per direction")
    if n_knots == 1:
        return np.ones((points.size, 1))
    knots = np.linspace(points[0], points[-1], n_knots)
    return np.column_stack([np.interp(points, knots, col) for col in np.eye(n_knots)])


@dataclass(frozen=True)
class IdentificationProblem:
    basis: EigenBasis
    time_grid: TimeGrid
    forcing: Forcing
    split: SplitIndex
    window: ObservationWindow
    target: np.ndarray | None
    q: float = 2.0
    bound_M: float = 1.0
    n_ex: int = 5
    n_et: int = 5
    mu_target: float = DEFAULT_MU_TARGET

    def __post_init__(self):
        grid = self.basis.grid
        if self.split.n != self.basis.n_modes:
            raise ValidationError("split size does not match the basis")
        if self.window.x_mask.size != grid.n_nodes:
            raise ValidationError("observation mask does not match the grid")
        if self.forcing.values.shape != (grid.n_nodes, self.time_grid.n_nodes):
            raise ValidationError("forcing is not sampled on the space-time grid")
        if not (1 <= self.n_ex <= grid.n_nodes and 1 <= self.n_et <= self.time_grid.n_nodes):
            raise ValidationError("perturbation parameterization is finer than the grid")
        if self.target is not None:
            t = np.array(self.target, dtype=float)
            if t.shape != (self.window.indices.size, self.time_grid.n_nodes):
                raise ValidationError(
                    f"target must have shape ({self.window.indices.size}, {self.time_grid.n_nodes}), got {t.shape}"
                )
            if not np.all(np.isfinite(t)):
                raise ValidationError("target has non-finite entries")
            t.setflags(write=False)
            object.__setattr__(self, "target", t)

    @property
    def grid(self) -> SpatialGrid:
        return self.basis.grid

    @property
    def n_params(self) -> int:
        return self.n_ex * self.n_et

    def quadrature(self) -> np.ndarray:
        """Space-time trapezoid weights on ``omega x time nodes``."""
        return self.window.weights(self.grid)[:, None] * self.time_grid.trapezoid_weights[None, :]

    def expand(self, params: np.ndarray) -> np.ndarray:
        """Raw (unprojected) grid samples of ``e`` from coarse parameters ``(n_ex, n_et)``."""
        p = np.asarray(params, dtype=float).reshape(self.n_ex, self.n_et)
        px = hat_matrix(self.grid.nodes, self.n_ex)
        pt = hat_matrix(self.time_grid.times, self.n_et)
        return px @ p @ pt.T

    def perturbation(self, params: np.ndarray) -> Perturbation:
        return project_onto_mq(self.expand(params), self.q, self.bound_M, self.grid)

    def _require_target(self):
        if self.target is None:
            raise ValidationError("identification problem has no target data")
        return self.target


@dataclass(frozen=True)
class IdentificationResult:
    e_star: Perturbation
    params: np.ndarray
    a_star: np.ndarray
    objective: float
    gram_min_eig: float
    iterations: int
    objective_history: tuple


@dataclass
class IdentifyConfig:
    step: float = 1.0
    max_iter: int = 50
    fd_step: float = 1e-4
    tol: float = 1e-14
    min_step: float = 1e-8
    initial_e: float | np.ndarray = 0.0
    fixed_head: np.ndarray | None = None
    tikhonov: float = 0.0
    workers: int = 1
    seed: int = 0


def project_onto_mq(e_values, q: float, bound_M: float, grid: SpatialGrid) -> Perturbation:
    """Rescale every time slice whose L^q norm exceeds ``bound_M`` back onto the sphere."""
    v = np.array(e_values, dtype=float)
    if v.ndim != 2 or v.shape[0] != grid.n_nodes:
        raise ValidationError(f"expected ({grid.n_nodes}, n_t) perturbation samples, got {v.shape}")
    norms = lq_norms(v, q, grid)
    over = norms > bound_M * (1.0 + PROJECTION_SLACK)
    v[:, over] *= bound_M / norms[over]
    return Perturbation(v, q, bound_M)


class _Forward:
    """Assembled system plus factorized ``I - J`` for one perturbation."""

    def __init__(self, prob: IdentificationProblem, e: Perturbation, seed: int = 0):
        k = prob.split.k
        self.prob = prob
        self.sys = assemble(prob.basis, e, prob.forcing, prob.time_grid)
        jmat = monodromy(self.sys)[k:, k:]
        self.mu, _, _ = power_norm(jmat, seed)
        if self.mu > prob.mu_target:
            raise NonContractionError(
                f"tail map norm {self.mu:.4g} exceeds mu_target {prob.mu_target} at k = {k}"
            )
        mat = np.eye(jmat.shape[0]) - jmat
        cond = np.linalg.cond(mat)
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise NearSingularityError(f"I - J is near-singular (condition {cond:.3g})", cond)
        self._lu = lu_factor(mat)
        self._obs_modes = prob.basis.modes[prob.window.indices]

    def states(self, heads: np.ndarray, forced: bool) -> np.ndarray:
        """Periodic-tail solutions for the head columns ``heads`` (K x m); shape (n_t, N, m)."""
        k = self.prob.split.k
        start = np.zeros((self.sys.n_modes, heads.shape[1]))
        start[:k] = heads
        offset = propagate_batch(self.sys, start, forced=forced)[-1][k:]
        start[k:] = lu_solve(self._lu, offset)
        return propagate_batch(self.sys, start, forced=forced)

    def observe(self, heads: np.ndarray, forced: bool) -> np.ndarray:
        """Solutions on the window nodes, shape (n_omega, n_t, m)."""
        return np.einsum("xn,tnm->xtm", self._obs_modes, self.states(heads, forced))


def _as_perturbation(e, prob: IdentificationProblem) -> Perturbation:
    if not isinstance(e, Perturbation):
        e = Perturbation(e, prob.q, prob.bound_M)
    e.check_membership(prob.grid)
    return e


def objective(e, a_I, prob: IdentificationProblem, seed: int = 0) -> float:
    """``int_{Q_omega} |u(e, a_I) - target|^2`` by space-time trapezoid quadrature."""
    target = prob._require_target()
    fw = _Forward(prob, _as_perturbation(e, prob), seed)
    heads = np.asarray(a_I, dtype=float).reshape(prob.split.k, 1)
    u = fw.observe(heads, forced=True)[:, :, 0]
    return float(np.sum(prob.quadrature() * (u - target) ** 2))


def _head_fit(fw: _Forward, prob: IdentificationProblem, a_init=None, fixed_head=None):
    """Returns ``(a_star, gram_min_eig, objective)`` for one forward model."""
    target = prob._require_target()
    quad = prob.quadrature()
    k = prob.split.k
    base = fw.observe(np.zeros((k, 1)), forced=True)[:, :, 0]
    resid0 = target - base
    if k == 0:
        return np.zeros(0), np.inf, float(np.sum(quad * resid0**2))
    sens = fw.observe(np.eye(k), forced=False).reshape(-1, k)
    qflat = quad.reshape(-1)
    gram = sens.T @ (qflat[:, None] * sens)
    rhs = sens.T @ (qflat * resid0.reshape(-1))
    eigs = np.linalg.eigvalsh(0.5 * (gram + gram.T))
    gmin = float(eigs[0])
    if fixed_head is not None:
        a = np.asarray(fixed_head, dtype=float).reshape(k)
    else:
        if gmin <= GRAM_RTOL * np.trace(gram) / k:
            raise IllPosedObservationError(
                f"Gram matrix is numerically singular (min eigenvalue {gmin:.3g}); "
                "the window does not determine the head coefficients",
                gmin,
            )
        a0 = np.zeros(k) if a_init is None else np.asarray(a_init, dtype=float).reshape(k)
        # one exact Newton correction from a0; the objective is quadratic in a
        a = a0 + cho_solve(cho_factor(gram), rhs - gram @ a0)
    res = resid0 - (sens @ a).reshape(resid0.shape)
    return a, gmin, float(np.sum(quad * res**2))


def solve_head_given_e(e, prob: IdentificationProblem, a_init=None, seed: int = 0):
    """
    Least-squares head coefficients for a fixed perturbation.

    Returns ``(a_star, gram_min_eig)``. The Gram matrix is built from the K
    homogeneous sensitivity solutions observed on the window.
    """
    fw = _Forward(prob, _as_perturbation(e, prob), seed)
    a, gmin, _ = _head_fit(fw, prob, a_init)
    return a, gmin


def gram_matrix(e, prob: IdentificationProblem, seed: int = 0) -> np.ndarray:
    """Observation Gram matrix of the head sensitivities (diagnostic)."""
    fw = _Forward(prob, _as_perturbation(e, prob), seed)
    k = prob.split.k
    sens = fw.observe(np.eye(k), forced=False).reshape(-1, k)
    qflat = prob.quadrature().reshape(-1)
    return sens.T @ (qflat[:, None] * sens)


def twin_target(prob: IdentificationProblem, e, a_I, noise: float = 0.0, seed: int = 0) -> IdentificationProblem:
    """Copy of ``prob`` whose target is the observed solution for ``(e, a_I)`` plus Gaussian noise."""
    fw = _Forward(prob, _as_perturbation(e, prob), seed)
    heads = np.asarray(a_I, dtype=float).reshape(prob.split.k, 1)
    u = fw.observe(heads, forced=True)[:, :, 0]
    if noise > 0:
        u = u + noise * np.random.default_rng(seed).standard_normal(u.shape)
    return replace(prob, target=u)


def identify(prob: IdentificationProblem, config: IdentifyConfig | None = None) -> IdentificationResult:
    """
    Minimize the window mismatch over the coarse perturbation parameters.

    Every evaluation projects the parameters' field onto the M_q ball and solves
    for the optimal head exactly. Steps start from a Barzilai-Borwein estimate and
    are halved until the objective decreases; trial perturbations that break the
    contraction at ``prob.split`` are rejected like non-decreasing steps.
    """
    cfg = config or IdentifyConfig()
    prob._require_target()
    n_p = prob.n_params
    theta = np.broadcast_to(np.asarray(cfg.initial_e, dtype=float), (prob.n_ex, prob.n_et)).astype(float).reshape(-1)

    def evaluate(params):
        fw = _Forward(prob, prob.perturbation(params), cfg.seed)
        a, gmin, obj = _head_fit(fw, prob, fixed_head=cfg.fixed_head)
        if cfg.tikhonov:
            obj += cfg.tikhonov * float(params @ params)
        return obj, a, gmin

    def value(params):
        return evaluate(params)[0]

    try:
        obj, a, gmin = evaluate(theta)
    except (NonContractionError, NearSingularityError) as exc:
        raise ContractionBudgetError(f"initial perturbation already breaks contraction: {exc}") from exc

    history = [obj]
    step = cfg.step
    prev_theta = prev_grad = None
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    iterations = 0
    try:
        for it in range(1, cfg.max_iter + 1):
            if obj <= cfg.tol:
                break
            h = cfg.fd_step
            probes = []
            for p in range(n_p):
                d = np.zeros(n_p)
                d[p] = h
                probes += [theta + d, theta - d]
            vals = list(pool.map(value, probes)) if pool else [value(x) for x in probes]
            grad = (np.array(vals[0::2]) - np.array(vals[1::2])) / (2 * h)
            if not np.any(grad):
                break
            if prev_grad is not None:
                s, y = theta - prev_theta, grad - prev_grad
                sy = float(s @ y)
                if sy > 0:
                    step = float(s @ s) / sy
            accepted = False
            n_lost = n_tries = 0
            while step >= cfg.min_step:
                n_tries += 1
                trial = theta - step * grad
                try:
                    t_obj, t_a, t_gmin = evaluate(trial)
                except (NonContractionError, NearSingularityError):
                    n_lost += 1
                    step *= 0.5
                    continue
                if t_obj < obj:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                if n_tries and n_lost == n_tries:
                    raise ContractionBudgetError(
                        f"every trial perturbation broke contraction at k = {prob.split.k}; "
                        "increase K"
                    )
                break
            iterations = it
            decrease = obj - t_obj
            prev_theta, prev_grad = theta, grad
            theta, obj, a, gmin = trial, t_obj, t_a, t_gmin
            history.append(obj)
            logger.info("identify it=%d objective=%.6e step=%.3g", it, obj, step)
            step *= 2.0
            if decrease < cfg.tol:
                break
    finally:
        if pool:
            pool.shutdown()

    return IdentificationResult(
        e_star=prob.perturbation(theta),
        params=theta.reshape(prob.n_ex, prob.n_et).copy(),
        a_star=np.asarray(a, dtype=float),
        objective=float(obj),
        gram_min_eig=float(gmin),
        iterations=iterations,
        objective_history=tuple(history),
    )
