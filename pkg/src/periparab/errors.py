"""Exception hierarchy shared by all modules."""


class PeriparabError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PeriparabError, ValueError):
    """Inputs violate a documented precondition."""


class ResolutionError(ValidationError):
    """A requested mode cannot be represented on the spatial grid."""


class ConsistencyError(PeriparabError):
    """An internal numerical invariant failed (e.g. a matrix lost symmetry)."""


class SolverError(PeriparabError):
    """Base class for failures of the forward / periodic solvers."""


class IntegrationError(SolverError):
    def __init__(self, message, time_index):
        super().__init__(message)
        self.time_index = time_index


class CapacityError(SolverError):
    """No admissible split index exists within the allowed range."""


class NonContractionError(SolverError):
    """The fixed-point map is not contractive on the tail coefficients."""


class ToleranceNotMetError(SolverError):
    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


class NearSingularityError(SolverError):
    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition


class IdentificationError(PeriparabError):
    """Base class for failures of the parameter identification."""


class IllPosedObservationError(IdentificationError):
    def __init__(self, message, gram_min_eig):
        super().__init__(message)
        self.gram_min_eig = gram_min_eig


class ContractionBudgetError(IdentificationError):
    """Every trial perturbation left the contraction regime at the chosen split."""
