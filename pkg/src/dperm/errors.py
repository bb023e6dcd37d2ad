"""Exception hierarchy shared by the library and the CLI."""


class DpermError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(DpermError, ValueError):
    """Invalid configuration, file contents, or argument domain."""


class PrivacyRequirementError(DpermError, ValueError):
    """A precondition of the objective-perturbation mechanism is violated.

    Callers must not catch this and continue with weaker parameters; the
    release would no longer carry the advertised guarantee.
    """

    requirement = "privacy requirement"


class EpsilonError(PrivacyRequirementError):
    requirement = "privacy budget must be positive"


class NoiseScaleError(PrivacyRequirementError):
    requirement = "noise scale phi >= 2*kappa violated"


class StrongConvexityError(PrivacyRequirementError):
    requirement = "strong convexity requirement violated"


class NormalizationError(PrivacyRequirementError):
    requirement = "dataset lacks a certified row-norm bound"


class ConvergenceError(DpermError, RuntimeError):
    """The solver stopped before meeting its tolerance."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
