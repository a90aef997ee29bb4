"""Exception hierarchy shared by every module of the package."""


class RwRangeError(Exception):
    """Base class for all package errors."""


class ValidationError(RwRangeError, ValueError):
    """Invalid input; the CLI maps these to exit status 2."""


class BudgetError(RwRangeError):
    """A configured size, memory or step budget was exhausted (exit status 3)."""


# graph-core
class NonPositiveWeight(ValidationError):
    pass


class SelfLoop(ValidationError):
    pass


class DuplicateEdge(ValidationError):
    pass


class UnknownVertex(ValidationError, KeyError):
    pass


class AsymmetricEdge(ValidationError):
    pass


# builders
class SizeOverflow(BudgetError):
    pass


class NotATree(ValidationError):
    pass


class LowInternalDegree(ValidationError):
    pass


class SpecInvariantViolated(ValidationError):
    pass


# resistance
class PartialFunction(ValidationError):
    pass


class DisconnectedSets(ValidationError):
    pass


class SolverDivergence(RwRangeError):
    pass


class BallCoversGraph(ValidationError):
    """The requested ball reaches the edge of the materialized graph."""


class HypothesisViolated(ValidationError):
    pass


# walk-engine / range-laws / uniformity
class NotLayered(ValidationError):
    pass


class BudgetExceeded(BudgetError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DegreeTooSmall(ValidationError):
    pass


class InvalidInterval(ValidationError):
    pass


class NoReturnMass(ValidationError):
    pass


class InsufficientGrid(ValidationError):
    pass


class ConfigInvalid(ValidationError):
    pass
