import numpy as np
import pytest

from periparab.basis import SpatialGrid, dirichlet_laplacian_basis
from periparab.galerkin import Forcing, Perturbation, TimeGrid, assemble


@pytest.fixture
def unit_grid():
    return SpatialGrid(1.0, 201)


@pytest.fixture
def fine_grid():
    return SpatialGrid(1.0, 1001)


@pytest.fixture
def heat_system(unit_grid):
    """Unperturbed heat equation on (0, 1), 8 sine modes, T = 1, no forcing."""
    tg = TimeGrid(1.0, 200)
    basis = dirichlet_laplacian_basis(8, unit_grid)
    return assemble(basis, Perturbation.zero(unit_grid, tg), Forcing.zero(unit_grid, tg), tg)


def smooth_forcing(grid, tg, scale=1.0):
    return Forcing.from_function(
        lambda x, t: scale * (10 * x * (1 - x) * (1 + 0.5 * np.sin(2 * np.pi * t / tg.horizon))
                              + 3 * np.sin(3 * np.pi * x) * np.cos(2 * np.pi * t / tg.horizon)),
        grid,
        tg,
    )


_ACCEPTANCE = []


class _Criterion:
    def __init__(self, number, title):
        self.number, self.title, self.details = number, title, []

    def note(self, text):
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.details)
        line = f"criterion {self.number} [{status}] {self.title}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return False


@pytest.fixture
def criterion():
    """``with criterion(n, title) as c:`` records one pass/fail line for the acceptance summary."""
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
