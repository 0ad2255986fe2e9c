"""Approximate periodic solutions of parabolic equations and identification of their perturbation term."""

__version__ = "0.1.0"

from .basis import (
    EigenBasis,
    OperatorSpec,
    SpatialGrid,
    dirichlet_laplacian_basis,
    lq_norm,
    project,
    solve_operator_eigenproblem,
    synthesize,
)
from .galerkin import Forcing, GalerkinSystem, Perturbation, SpectralTrajectory, TimeGrid, assemble, propagate
from .periodic import (
    ContractionEstimate,
    PeriodicSolution,
    SplitIndex,
    choose_k,
    periodicity_residual,
    solve_direct,
    solve_fixed_point,
    tail_monodromy_norm,
)
from .analysis import EnergyReport, energy_report, evaluate_field
from .identify import (
    IdentificationProblem,
    IdentificationResult,
    IdentifyConfig,
    ObservationWindow,
    identify,
    objective,
    project_onto_mq,
    solve_head_given_e,
    twin_target,
)
