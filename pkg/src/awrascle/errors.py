"""Exception hierarchy.

Every error carries ``condition``: a short label naming the violated
condition of the construction (for instance ``"cc1 mass compatibility"``).
The command line prints it verbatim.
"""


class AwRascleError(Exception):
    condition = "unspecified"

    def __init__(self, message, condition=None):
        super().__init__(message)
        if condition is not None:
            self.condition = condition


class NonZeroMean(AwRascleError):
    condition = "zero-mean solvability"


class DomainViolation(AwRascleError):
    condition = "model domain"


class ContinuityViolated(AwRascleError):
    condition = "i1 continuity"


class BadWindow(AwRascleError):
    condition = "time-shape support windows"


class PositivityFailure(AwRascleError):
    condition = "c6b density positivity"


class IncompatibleMass(AwRascleError):
    condition = "cc1 mass compatibility"


class EndpointMismatch(AwRascleError):
    condition = "cc5 terminal mean momentum"


class NotSolenoidal(AwRascleError):
    condition = "c9 divergence-free v"


class NotTraceless(AwRascleError):
    condition = "cc26 traceless B"


class LambdaDepleted(AwRascleError):
    condition = "c27 admissible energy level"


class FieldFormatError(AwRascleError):
    condition = "field file format"


class ConfigError(AwRascleError):
    condition = "run configuration"
