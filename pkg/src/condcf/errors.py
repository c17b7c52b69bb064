"""Exception types shared across the package."""


class CondcfError(Exception):
    """Base class for every package-specific error."""


class DataError(CondcfError):
    """Input data violate the documented column, shape, or value contract."""


class SupportTooLarge(CondcfError):
    """An exhaustive enumeration was requested beyond the configured cap."""

    def __init__(self, count, cap):
        super().__init__(f"support size {count} exceeds cap {cap}")
        self.count = count
        self.cap = cap


class PlanIncompatible(CondcfError):
    """A split plan cannot be applied to the given design or realized data."""


class DegenerateStratum(PlanIncompatible):
    """A stratum is too small for a by-treatment split (needs >= 2 per arm)."""


class DegenerateFold(CondcfError):
    """A realized fold has no units in one treatment arm, so the fold-level
    arm mean cannot be reported."""


class PredictorError(CondcfError):
    """Base class for fit-time prediction failures.

    The cross-fitting pipeline catches these and degrades to a simpler
    predictor instead of aborting the estimate.
    """


class EmptyArm(PredictorError):
    """A training fold has no units in one treatment arm."""


class SingularDesign(PredictorError):
    """The (weighted) regression design is numerically singular."""


class MissingStratum(PredictorError):
    """Prediction was requested for a stratum label absent from training."""


class NoConvergence(PredictorError):
    """An iterative fit did not converge within the iteration budget."""


class Separation(PredictorError):
    """A GLM fit diverged (coefficient norm exceeded the guard threshold)."""


class InsufficientReplication(CondcfError):
    """A variance formula needs at least two units (or pairs) per cell."""
