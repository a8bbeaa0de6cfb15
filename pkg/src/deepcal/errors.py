"""Exception hierarchy shared by all deepcal modules."""


class DeepCalError(Exception):
    """Base class for every error raised by deepcal."""


class InvalidParamsError(DeepCalError, ValueError):
    pass


class DomainError(DeepCalError, ArithmeticError):
    """A volatility left the domain of the log-Laplace transform.

    ``path`` holds the offending path index when raised from a simulation.
    """

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class InversionError(DeepCalError):
    """Characteristic-function inversion produced an unusable distribution."""


class NetworkFormatError(DeepCalError, ValueError):
    pass


class UnsupportedVersionError(NetworkFormatError):
    pass


class TrainingError(DeepCalError):
    pass


class ChainError(DeepCalError, ValueError):
    """Option chain could not be parsed, or nothing survived filtering."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
