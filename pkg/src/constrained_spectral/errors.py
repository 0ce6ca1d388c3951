class GraphParseError(ValueError):
    """Malformed edge-list input."""


class GraphValidationError(ValueError):
    """Structurally invalid graph or query."""


class EmptyConstraintError(ValueError):
    """A constraint column (or a whole constraint matrix) has no usable entries."""


class SolverDegeneracy(RuntimeError):
    """The eigensolver cannot proceed, e.g. the start vector lies in range(C)."""


class UndefinedMetricError(ValueError):
    """A ranking metric needs both positive and negative examples."""


class TrainingAborted(RuntimeError):
    """Training hit a non-finite loss."""


class RankDeficiencyError(RuntimeError):
    """Constraint matrix handed to the projector is not of full column rank."""
