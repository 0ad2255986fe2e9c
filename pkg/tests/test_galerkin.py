import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from periparab.basis import SpatialGrid, dirichlet_laplacian_basis, project
from periparab.errors import IntegrationError, ValidationError
from periparab.galerkin import (
    Forcing,
    GalerkinSystem,
    Perturbation,
    TimeGrid,
    assemble,
    propagate,
    propagate_batch,
)

TINY = np.finfo(float).tiny


def _system(grid, tg, n_modes, e=None, f=None):
    basis = dirichlet_laplacian_basis(n_modes, grid)
    e = e if e is not None else Perturbation.zero(grid, tg)
    f = f if f is not None else Forcing.zero(grid, tg)
    return assemble(basis, e, f, tg)


def test_time_grid():
    tg = TimeGrid(2.0, 8)
    assert tg.dt == 0.25 and tg.times[-1] == 2.0 and tg.n_nodes == 9
    assert tg.index_of(1.5) == 6
    with pytest.raises(ValidationError):
        tg.index_of(0.3)
    with pytest.raises(ValidationError):
        TimeGrid(1.0, 0)


class TestAssemble:
    def test_zero_perturbation_is_diagonal(self, unit_grid):
        tg = TimeGrid(1.0, 10)
        sys = _system(unit_grid, tg, 6)
        for b in sys.coupling:
            assert np.array_equal(b, np.diag(sys.basis.lambdas))

    def test_constant_perturbation(self, unit_grid):
        tg = TimeGrid(1.0, 10)
        sys = _system(unit_grid, tg, 6, e=Perturbation.constant(0.3, unit_grid, tg))
        target = np.diag(sys.basis.lambdas) + 0.3 * np.eye(6)
        assert np.max(np.abs(sys.coupling - target[None])) < 1e-10

    def test_cosine_coupling(self, fine_grid):
        # int_0^1 2 cos(pi x) sin(pi x) sin(2 pi x) dx = 1/2
        tg = TimeGrid(1.0, 4)
        e = Perturbation.from_function(lambda x, t: np.cos(np.pi * x) + 0 * t, fine_grid, tg)
        sys = _system(fine_grid, tg, 2, e=e)
        E = sys.perturbation_blocks
        assert np.allclose(E[:, 0, 1], 0.5, atol=1e-5)
        assert np.allclose(E[:, 0, 0], 0.0, atol=1e-12)

    def test_symmetry_of_perturbation_block(self, unit_grid):
        tg = TimeGrid(1.0, 20)
        e = Perturbation.from_function(lambda x, t: np.exp(x) * np.sin(5 * t) - x**3, unit_grid, tg)
        E = _system(unit_grid, tg, 10, e=e).perturbation_blocks
        assert np.max(np.abs(E - E.transpose(0, 2, 1))) < 1e-10

    def test_forcing_coefficients(self, unit_grid):
        tg = TimeGrid(1.0, 5)
        f = Forcing.from_function(lambda x, t: np.sin(2 * np.pi * x) * (1 + t), unit_grid, tg)
        sys = _system(unit_grid, tg, 4, f=f)
        assert np.allclose(sys.forcing_coeffs[1], (1 + tg.times) / np.sqrt(2), atol=1e-12)
        assert np.allclose(sys.forcing_coeffs[[0, 2, 3]], 0.0, atol=1e-12)

    def test_dimension_mismatch(self, unit_grid):
        tg = TimeGrid(1.0, 5)
        basis = dirichlet_laplacian_basis(3, unit_grid)
        with pytest.raises(ValidationError):
            assemble(basis, Perturbation.zero(unit_grid, TimeGrid(1.0, 6)), Forcing.zero(unit_grid, tg), tg)

    def test_mq_violation(self, unit_grid):
        tg = TimeGrid(1.0, 5)
        basis = dirichlet_laplacian_basis(3, unit_grid)
        e = Perturbation.constant(2.0, unit_grid, tg, q=2.0, bound_M=1.0)
        with pytest.raises(ValidationError):
            assemble(basis, e, Forcing.zero(unit_grid, tg), tg)


class TestPropagate:
    def test_free_decay(self, unit_grid):
        tg = TimeGrid(1.0, 2000)
        sys = _system(unit_grid, tg, 16)
        a = np.linspace(1.0, -1.0, 16)
        u = propagate(sys, a).final
        exact = a * np.exp(-sys.basis.lambdas)
        normal = np.abs(exact) > TINY
        assert np.max(np.abs(u[normal] - exact[normal]) / np.abs(exact[normal])) < 1e-8
        assert np.all(np.abs(u[~normal]) <= TINY)

    def test_constant_forcing_variation_of_constants(self, unit_grid):
        tg = TimeGrid(0.1, 50)
        profile = unit_grid.nodes * (1 - unit_grid.nodes)
        f = Forcing.separable(profile, np.ones(tg.n_nodes))
        sys = _system(unit_grid, tg, 8, f=f)
        fbar = project(profile, sys.basis)
        a = np.ones(8)
        lam = sys.basis.lambdas
        exact = a * np.exp(-lam * 0.1) + fbar * (1 - np.exp(-lam * 0.1)) / lam
        assert np.allclose(propagate(sys, a).final, exact, rtol=1e-12, atol=1e-15)

    def test_zero_data_stays_zero(self, heat_system):
        assert np.all(propagate(heat_system, np.zeros(8)).coeffs == 0.0)

    def test_span(self, heat_system):
        tr = propagate(heat_system, np.ones(8), span=(0.25, 0.5))
        assert tr.coeffs.shape == (8, 51)
        assert tr.times[0] == pytest.approx(0.25) and tr.times[-1] == pytest.approx(0.5)
        exact = np.exp(-heat_system.basis.lambdas * 0.25)
        assert np.allclose(tr.final, exact, rtol=1e-12)

    def test_rejects_wrong_initial(self, heat_system):
        with pytest.raises(ValidationError):
            propagate(heat_system, np.ones(7))

    def test_blow_up_reports_time_node(self, heat_system):
        bad = GalerkinSystem(
            heat_system.coupling - 1e300 * np.eye(8)[None],
            heat_system.forcing_coeffs,
            heat_system.basis,
            heat_system.time_grid,
        )
        with pytest.raises(IntegrationError) as info:
            propagate(bad, np.ones(8))
        assert 1 <= info.value.time_index <= heat_system.time_grid.n_steps

    def test_second_order_in_time(self, unit_grid):
        # e = 0, f = sin(w t) X_1: u_1(T) has a closed form; forcing is sampled and
        # interpolated linearly, which is the only source of error.
        lam, w, T = np.pi**2, 2 * np.pi, 1.0

        def exact(a):
            return a * np.exp(-lam * T) + (lam * np.sin(w * T) - w * np.cos(w * T) + w * np.exp(-lam * T)) / (lam**2 + w**2)

        errs = []
        for n in (100, 200, 400):
            tg = TimeGrid(T, n)
            x1 = np.sqrt(2) * np.sin(np.pi * unit_grid.nodes)
            f = Forcing.separable(x1, np.sin(w * tg.times))
            sys = _system(unit_grid, tg, 3, f=f)
            errs.append(abs(propagate(sys, np.array([1.0, 0, 0])).final[0] - exact(1.0)))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all((ratios >= 3.5) & (ratios <= 4.5)), ratios

    def test_second_order_with_perturbation(self, unit_grid):
        eps = 3.0
        errs = []
        for n in (50, 100, 200):
            tg = TimeGrid(1.0, n)
            sys = _system(unit_grid, tg, 2, e=Perturbation.constant(eps, unit_grid, tg))
            u = propagate(sys, np.array([1.0, 1.0])).final
            errs.append(np.max(np.abs(u - np.exp(-(sys.basis.lambdas + eps)))))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all((ratios >= 3.5) & (ratios <= 4.5)), ratios

    def test_energy_dissipation(self, heat_system):
        tr = propagate(heat_system, np.linspace(1, 2, 8))
        norms = np.sum(tr.coeffs**2, axis=0)
        assert np.all(np.diff(norms) <= 0)

    def test_batch_matches_single(self, unit_grid):
        tg = TimeGrid(1.0, 40)
        e = Perturbation.from_function(lambda x, t: np.cos(3 * x) * (1 + t), unit_grid, tg)
        sys = _system(unit_grid, tg, 5, e=e)
        init = np.random.default_rng(1).standard_normal((5, 3))
        batch = propagate_batch(sys, init)
        for j in range(3):
            assert np.allclose(batch[:, :, j].T, propagate(sys, init[:, j]).coeffs, rtol=0, atol=1e-14)


_GRID = SpatialGrid(1.0, 101)
_TG = TimeGrid(0.5, 50)
_SYS = _system(
    _GRID, _TG, 6, e=Perturbation.from_function(lambda x, t: 2 * np.sin(4 * x + 3 * t), _GRID, _TG)
)


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=6, max_size=6),
    st.lists(st.floats(-10, 10), min_size=6, max_size=6),
    st.floats(-5, 5),
    st.floats(-5, 5),
)
def test_linearity(a, b, alpha, beta):
    a, b = np.array(a), np.array(b)
    lhs = propagate(_SYS, alpha * a + beta * b).coeffs
    rhs = alpha * propagate(_SYS, a).coeffs + beta * propagate(_SYS, b).coeffs
    scale = max(1.0, np.max(np.abs(lhs)))
    assert np.max(np.abs(lhs - rhs)) < 1e-10 * scale
