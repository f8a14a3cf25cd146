"""Exception hierarchy. Every domain failure carries a stable ``kind`` name."""

from __future__ import annotations


class GridSwitchError(Exception):
    kind = "GridSwitchError"


class GridValidationError(GridSwitchError, ValueError):
    kind = "GridValidation"


class DisconnectedGraphError(GridSwitchError):
    kind = "Disconnected"


class NonConvergenceError(GridSwitchError):
    kind = "NonConvergence"


class InsecureEquilibriumError(GridSwitchError):
    kind = "InsecureEquilibrium"


class NonPositiveDampingError(GridSwitchError):
    kind = "NonPositiveDamping"


class NotHurwitzError(GridSwitchError):
    kind = "NotHurwitz"


class ResidualError(GridSwitchError):
    kind = "ResidualFailure"


class AssumptionViolatedError(GridSwitchError):
    """Disturbance/damping ratios are not uniform; carries the observed spread."""

    kind = "AssumptionViolated"

    def __init__(self, message: str, spread: float = float("nan")):
        super().__init__(message)
        self.spread = spread


class DecompositionError(GridSwitchError):
    kind = "Decomposition"


class DisconnectedLoadGraphError(DecompositionError):
    kind = "DisconnectedLoadGraph"


class SingularLHHError(DecompositionError):
    kind = "SingularL_HH"


class EmptyCandidatesError(GridSwitchError):
    kind = "EmptyCandidates"


class SelfCheckError(GridSwitchError):
    kind = "SelfCheckFailed"
