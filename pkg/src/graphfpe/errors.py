"""Exception hierarchy shared by all modules."""


class GraphFPEError(Exception):
    """Base class for all library errors."""


# graph construction
class GraphError(GraphFPEError, ValueError):
    pass


class DisconnectedGraph(GraphError):
    pass


class NonpositiveWeight(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class AsymmetricWeight(GraphError):
    pass


class InvalidSize(GraphError):
    pass


class InvalidVertex(GraphError):
    pass


# densities and potentials
class NonpositiveEntry(GraphFPEError, ValueError):
    pass


class UnsupportedExponent(GraphFPEError, ValueError):
    pass


class OverflowInExp(GraphFPEError, ArithmeticError):
    pass


# operators and metric
class NonpositiveArgument(GraphFPEError, ValueError):
    pass


class NotInTangentSpace(GraphFPEError, ValueError):
    pass


class SolverFailure(GraphFPEError, RuntimeError):
    pass


class ContinuityViolation(GraphFPEError, ValueError):
    pass


class OptimizerDiverged(GraphFPEError, RuntimeError):
    pass


# dynamics and analysis
class StepSizeUnderflow(GraphFPEError, RuntimeError):
    pass


class ScenarioUndefinedOnTruncation(GraphFPEError, ValueError):
    pass


# configuration
class ParseError(GraphFPEError, ValueError):
    pass


class ValidationError(GraphFPEError, ValueError):
    pass
