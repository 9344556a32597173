"""Exception types shared across the package."""


class CtmdpReachError(Exception):
    """Base class for all package-specific errors."""


class AbsorbingSourceError(CtmdpReachError):
    """Jump probability requested from a state with exit rate zero."""


class IllConditionedError(CtmdpReachError):
    """Closed-form reconstruction failed its accuracy check."""


class IdenticallyZeroError(CtmdpReachError):
    """Operation requires a not-identically-zero observable."""


class BudgetExceededError(CtmdpReachError):
    """Subdivision or refinement budget exhausted before certification."""


class OrderCapExceededError(CtmdpReachError):
    """Contact-order search exceeded the configured derivative cap."""


class AmbiguousSimultaneityError(CtmdpReachError):
    """Candidate switch brackets can neither be merged nor separated."""


class MaxSwitchesExceededError(CtmdpReachError):
    """Policy synthesis found more switches than the configured cap."""


class DegenerateGammaError(CtmdpReachError):
    """Scaling constant of the sub-stochastic embedding is zero."""


class AllMomentsZeroError(CtmdpReachError):
    """Every moment of the embedded observable vanishes (trivial instance)."""


class TrivialInstanceError(CtmdpReachError):
    """Instance has the identically-zero solution; reduction not meaningful."""


class TooManyVectorsError(CtmdpReachError):
    """Stationary-policy enumeration guard tripped."""
