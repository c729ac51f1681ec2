"""
Exception hierarchy for Quench Lab.

Input problems subclass ValueError; numerical failures during a quench
integration subclass IntegrationError.
"""


class QuenchError(Exception):
    """Base class for all library errors."""


# ===== Validation =====

class InvalidParameter(QuenchError, ValueError):
    """A scalar parameter is outside its admissible range."""


class InvalidProblem(InvalidParameter):
    """The initial state is not in the seed region of its field."""


class ParamOutOfRange(InvalidParameter):
    """An invariant-region parameter is outside its open interval."""


class SingularInput(InvalidParameter):
    """The state lies on (or numerically at) the singular set."""


class OutOfWindow(InvalidParameter):
    """A closed-form comparison solution was evaluated past its quench time."""


class WrongField(InvalidParameter):
    """A certificate was asked for a field it does not apply to."""


class UnsupportedField(WrongField):
    """No maximum principle is available for this field."""


class Unsupported(InvalidParameter):
    """The operation does not accept this kind of control."""


class EpsilonTooLarge(InvalidParameter):
    """The regularization epsilon does not leave a non-quench window."""


class BudgetExceeded(InvalidParameter):
    """A search would exceed its evaluation budget."""


class MissingQuenchEstimate(InvalidParameter):
    """The trajectory carries no quench estimate."""


# ===== Integration =====

class IntegrationError(QuenchError):
    """A quench integration could not be completed."""


class HorizonExceeded(IntegrationError):
    """The hard horizon t_cap was reached before quench."""


class LeftSeedRegion(IntegrationError):
    """A sampled state crossed to the other branch of the singular set."""


class ModelMismatch(IntegrationError):
    """The tail of a trajectory does not fit the square-root quench model."""
