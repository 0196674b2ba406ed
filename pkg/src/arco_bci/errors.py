"""Exception types shared across the package."""


class ArcoBciError(Exception):
    """Base class for all package-specific errors."""


class DuplicateIndexError(ArcoBciError):
    """A variable index occurs more than once in an order."""


class IndexOutOfRangeError(ArcoBciError):
    """A variable index lies outside 0..d-1."""


class EmptyRemainingError(ArcoBciError):
    """Logit normalisation was asked for an empty remaining set."""


class WeightMismatchError(ArcoBciError):
    """Order weights do not match the orders or are not normalised."""


class FactorizationError(ArcoBciError):
    """Covariance factorisation failed even after jitter escalation."""


class NonFiniteObjectiveError(ArcoBciError):
    """Hyperparameter objective evaluated to NaN or infinity."""


class AllNegInfiniteError(ArcoBciError):
    """Every log score is -inf; weights are undefined."""


class TooFewSamplesError(ArcoBciError):
    """Not enough samples for the requested estimator."""


class UnknownVariableError(ArcoBciError):
    """An intervention or query referenced a variable that does not exist."""


class UnknownQueryError(ArcoBciError):
    """Query specification string could not be parsed."""


class ConfigError(ArcoBciError):
    """Invalid run configuration (bad key, value or missing entry)."""
