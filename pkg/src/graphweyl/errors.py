"""Exception hierarchy shared by all graphweyl modules."""


class GraphWeylError(Exception):
    """Base class for every error raised by the library."""


class ConfigurationError(GraphWeylError):
    """Invalid user input (maps, dimensions, experiment configs)."""


class MapValidationError(ConfigurationError):
    """A candidate interval map violates one or more admissibility conditions.

    ``violations`` holds one :class:`Violation` per failed check, so a single
    exception reports everything that is wrong with the candidate.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid interval map: {lines}")


class NonIntegerGridImage(MapValidationError):
    pass


class SlopeTooSmall(MapValidationError):
    pass


class NotMeasurePreserving(MapValidationError):
    pass


class NotMultipleOfM0(ConfigurationError):
    pass


class OddDimension(ConfigurationError):
    pass


class DimensionMismatch(ConfigurationError):
    pass


class CutoffTooLarge(ConfigurationError):
    pass


class PowerBeyondEhrenfest(ConfigurationError):
    pass


class DegreeTooSmall(ConfigurationError):
    pass


class IndexOutOfRange(ConfigurationError):
    pass


class BadDimension(ConfigurationError):
    pass


class SplitWindowTooLarge(ConfigurationError):
    pass


class EmptyBin(GraphWeylError):
    pass


class InvariantViolation(GraphWeylError):
    """A checked mathematical invariant failed; signals a bug or a bad input matrix."""


class NotBistochastic(InvariantViolation):
    pass


class BoundViolated(InvariantViolation):
    pass


class MultiplePathsFound(InvariantViolation):
    pass


class IdentityViolated(InvariantViolation):
    pass


class PatternViolated(InvariantViolation):
    pass


class NonIntegerTrace(InvariantViolation):
    pass


class NotUnitary(InvariantViolation):
    pass


class EigensolverFailure(InvariantViolation):
    pass


class QuadratureFailure(GraphWeylError):
    pass


class ConstructionFailure(GraphWeylError):
    """No quantization could be built for the given Markov matrix."""


class NoBlockStructureFound(ConstructionFailure):
    def __init__(self, message, component=None):
        self.component = component
        super().__init__(message)


class VerificationFailed(ConstructionFailure):
    pass
