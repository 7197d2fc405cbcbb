"""Exception hierarchy shared across the simulator."""


class EcramError(Exception):
    """Base class for all simulator errors."""


class DomainError(EcramError, ValueError):
    """An argument lies outside the physical domain of a function."""


class ConvergenceFailure(EcramError):
    """An iterative solver did not reach its residual tolerance."""


class StiffnessFailure(EcramError):
    """The cell integrator hit its minimum substep.

    ``time`` and ``state`` record where the integration stalled.
    """

    def __init__(self, message, time=None, state=None):
        super().__init__(message)
        self.time = time
        self.state = state


class StabilityFailure(EcramError):
    """An explicit phase-field step was requested with an unstable dt."""

    def __init__(self, message, dt=None):
        super().__init__(message)
        self.dt = dt


class UnknownScenario(EcramError, KeyError):
    pass


class ConfigError(EcramError, ValueError):
    """Malformed run configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key

    def __str__(self):
        return self.args[0]


class ProtocolError(EcramError):
    """A protocol step failed; wraps the underlying error with its index."""

    def __init__(self, message, step_index, cause=None):
        super().__init__(message)
        self.step_index = step_index
        self.cause = cause


class NonMonotonicTime(EcramError, ValueError):
    pass


class WindowTooShort(EcramError, ValueError):
    pass


class NonPositiveCurrent(EcramError, ValueError):
    pass


class DuplicateTemperature(EcramError, ValueError):
    pass


class InsufficientData(EcramError, ValueError):
    pass
