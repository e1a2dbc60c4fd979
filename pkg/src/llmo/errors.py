"""Exception hierarchy shared by every module."""


class LlmoError(Exception):
    """Base class for all errors raised by the package."""


class StructuralError(LlmoError):
    """A container (memory, population) does not have the required shape."""


class BoundsError(LlmoError, ValueError):
    """A value lies outside its declared box constraints."""


class ParseError(LlmoError):
    """Agent text could not be turned into a population."""


class ShapeError(ParseError):
    pass


class FormatError(ParseError):
    pass


class DegenerateError(LlmoError):
    """A quantity is undefined for the given input (e.g. zero normaliser)."""


class ValidationError(LlmoError):
    """An input matrix or distribution violates a stochasticity requirement."""


class CapacityError(LlmoError):
    """An enumeration would exceed the configured size cap."""


class ModelError(LlmoError):
    """A reward model was evaluated outside its admissible parameter range."""


class FitError(LlmoError):
    """Not enough data for a least-squares fit."""


class ConfigError(LlmoError):
    """One or more configuration problems; ``problems`` lists all of them."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


class AgentFailure(LlmoError):
    """An agent could not produce a population."""


class TransportFailure(AgentFailure):
    """Connection error or timeout talking to a remote model."""


class ApiFailure(AgentFailure):
    """The remote model answered with a non-2xx status or an unusable body."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class RewardEvaluationError(LlmoError):
    """The reward model raised while scoring an action; the run is aborted."""
