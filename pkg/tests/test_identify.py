from dataclasses import replace

import numpy as np
import pytest

from periparab.basis import EigenBasis, SpatialGrid, dirichlet_laplacian_basis, lq_norms
from periparab.errors import ContractionBudgetError, IllPosedObservationError, ValidationError
from periparab.galerkin import Forcing, Perturbation, TimeGrid
from periparab.identify import (
    IdentificationProblem,
    IdentifyConfig,
    ObservationWindow,
    gram_matrix,
    hat_matrix,
    identify,
    objective,
    project_onto_mq,
    solve_head_given_e,
    twin_target,
)
from periparab.periodic import SplitIndex

GRID = SpatialGrid(1.0, 101)
TG = TimeGrid(1.0, 100)
BASIS = dirichlet_laplacian_basis(16, GRID)
FORCING = Forcing.from_function(
    lambda x, t: 10 * x * (1 - x) * (1 + t) + 3 * np.sin(3 * np.pi * x) * np.cos(2 * np.pi * t), GRID, TG
)
HEAD = np.array([1.0, -0.5, 0.25])


def _problem(k=3, window=None, **kw):
    window = window or ObservationWindow.from_interval(GRID, 1 / 3, 2 / 3)
    return IdentificationProblem(BASIS, TG, FORCING, SplitIndex(k, 16), window, None, **kw)


def _zero(bound=1.0):
    return Perturbation.zero(GRID, TG, bound_M=bound)


@pytest.fixture(scope="module")
def twin():
    return twin_target(_problem(), _zero(), HEAD)


class TestPieces:
    def test_hat_matrix(self):
        pts = np.linspace(0.0, 1.0, 5)
        h = hat_matrix(pts, 3)
        assert np.allclose(h.sum(axis=1), 1.0)
        assert np.allclose(h[1], [0.5, 0.5, 0.0])
        assert np.array_equal(hat_matrix(pts, 1), np.ones((5, 1)))
        with pytest.raises(ValidationError):
            hat_matrix(pts, 0)

    def test_window(self):
        w = ObservationWindow.from_interval(GRID, 0.2, 0.3)
        assert w.indices[0] == 20 and w.indices[-1] == 30
        assert w.weights(GRID).sum() == pytest.approx(0.1)
        with pytest.raises(ValidationError):
            ObservationWindow(np.r_[np.ones(5), np.zeros(5), np.ones(5)])
        with pytest.raises(ValidationError):
            ObservationWindow.from_interval(GRID, 0.0, 0.02)

    def test_expand_constant(self):
        prob = _problem(n_ex=3, n_et=2)
        assert np.allclose(prob.expand(np.full((3, 2), 0.7)), 0.7)

    def test_target_shape_checked(self):
        with pytest.raises(ValidationError):
            replace(_problem(), target=np.zeros((5, 5)))


class TestProjection:
    def test_scales_to_sphere(self):
        p = project_onto_mq(np.full((GRID.n_nodes, 4), 2.0), 2.0, 1.0, GRID)
        assert np.allclose(p.values, 1.0, rtol=1e-14)

    def test_inside_untouched(self):
        v = np.random.default_rng(0).uniform(-0.5, 0.5, (GRID.n_nodes, 6))
        assert np.array_equal(project_onto_mq(v, 3.0, 1.0, GRID).values, v)

    def test_only_offending_slices(self):
        v = np.ones((GRID.n_nodes, 3))
        v[:, 1] = 4.0
        p = project_onto_mq(v, 2.0, 2.0, GRID).values
        assert np.array_equal(p[:, [0, 2]], v[:, [0, 2]]) and np.allclose(p[:, 1], 2.0)

    @pytest.mark.parametrize("q", [1.5, 2.0, 4.0])
    def test_idempotent(self, q):
        v = np.random.default_rng(1).standard_normal((GRID.n_nodes, 8)) * 3
        once = project_onto_mq(v, q, 1.0, GRID).values
        twice = project_onto_mq(once, q, 1.0, GRID).values
        assert np.array_equal(once, twice)
        assert np.all(lq_norms(once, q, GRID) <= 1.0 + 1e-12)


class TestHeadFit:
    def test_zero_objective_at_truth(self, twin):
        assert objective(_zero(), HEAD, twin) == pytest.approx(0.0, abs=1e-24)

    def test_quadratic_in_head(self, twin):
        # J(a + d v) = d^2 v^T G v when the target is noise free
        g = gram_matrix(_zero(), twin)
        v = np.array([0.3, -1.0, 2.0])
        for d in (1e-2, 1.0):
            assert objective(_zero(), HEAD + d * v, twin) == pytest.approx(d**2 * v @ g @ v, rel=1e-9)

    def test_recovers_head(self, twin):
        a, gmin = solve_head_given_e(_zero(), twin)
        assert np.allclose(a, HEAD, rtol=1e-10)
        assert gmin == pytest.approx(np.linalg.eigh(gram_matrix(_zero(), twin))[0][0], rel=1e-12)

    def test_gram_spd(self, twin):
        g = gram_matrix(_zero(), twin)
        assert np.allclose(g, g.T, atol=1e-15)
        assert np.linalg.eigh(g)[0][0] > 0

    def test_normal_equations(self):
        # noisy target: the gradient in a vanishes at a*
        prob = twin_target(_problem(), _zero(), HEAD, noise=0.05, seed=4)
        a, _ = solve_head_given_e(_zero(), prob)
        h = 1e-5
        for j in range(3):
            d = np.zeros(3)
            d[j] = h
            grad = (objective(_zero(), a + d, prob) - objective(_zero(), a - d, prob)) / (2 * h)
            assert abs(grad) < 1e-8

    def test_independent_of_start(self, twin):
        a1, _ = solve_head_given_e(_zero(), twin)
        a2, _ = solve_head_given_e(_zero(), twin, a_init=[50.0, -7.0, 3.0])
        assert np.max(np.abs(a1 - a2)) < 1e-10

    def test_ill_posed_window(self):
        # head mode supported on (1/2, 1), window inside (0, 1/2)
        x = GRID.nodes
        right = np.where(x >= 0.5, 2 * np.sin(2 * np.pi * (x - 0.5)), 0.0)
        left = np.where(x <= 0.5, 2 * np.sin(2 * np.pi * x), 0.0)
        basis = EigenBasis(np.full(2, 4 * np.pi**2), np.column_stack([right, left]), GRID)
        win = ObservationWindow.from_interval(GRID, 0.1, 0.4)
        prob = IdentificationProblem(basis, TG, FORCING, SplitIndex(1, 2), win, np.zeros((31, TG.n_nodes)))
        with pytest.raises(IllPosedObservationError) as info:
            solve_head_given_e(_zero(), prob)
        assert info.value.gram_min_eig == pytest.approx(0.0, abs=1e-20)

    def test_requires_target(self):
        with pytest.raises(ValidationError):
            objective(_zero(), HEAD, _problem())

    def test_rejects_perturbation_outside_ball(self, twin):
        with pytest.raises(ValidationError):
            objective(Perturbation.constant(3.0, GRID, TG, bound_M=1.0), HEAD, twin)


class TestIdentify:
    def test_recovers_zero_perturbation(self, twin):
        prob = replace(twin, n_ex=2, n_et=2)
        res = identify(prob, IdentifyConfig(initial_e=0.1, max_iter=40))
        assert res.objective < 1e-8
        assert np.allclose(res.a_star, HEAD, rtol=0, atol=1e-4)
        assert np.max(np.abs(res.params)) < 1e-2
        assert np.all(np.diff(res.objective_history) < 0)

    def test_constant_with_fixed_head(self):
        prob = _problem(k=2, window=ObservationWindow.full(GRID), bound_M=2.0, n_ex=1, n_et=1)
        prob = twin_target(prob, Perturbation.constant(0.5, GRID, TG, bound_M=2.0), HEAD[:2])
        res = identify(prob, IdentifyConfig(fixed_head=HEAD[:2]))
        assert res.params[0, 0] == pytest.approx(0.5, rel=1e-4)
        assert np.array_equal(res.a_star, HEAD[:2])

    def test_already_optimal(self, twin):
        res = identify(replace(twin, n_ex=1, n_et=1))
        assert res.iterations == 0 and res.objective < 1e-20

    def test_workers_match_serial(self, twin):
        prob = replace(twin, n_ex=2, n_et=1)
        serial = identify(prob, IdentifyConfig(initial_e=0.2, max_iter=3))
        threaded = identify(prob, IdentifyConfig(initial_e=0.2, max_iter=3, workers=3))
        assert np.array_equal(serial.params, threaded.params)

    def test_contraction_budget(self, twin):
        # e = -39.3 leaves the second mode with decay exp(-0.18) > 3/4
        prob = replace(_problem(k=1, bound_M=50.0), target=twin.target)
        with pytest.raises(ContractionBudgetError):
            identify(replace(prob, n_ex=1, n_et=1), IdentifyConfig(initial_e=-39.3))
