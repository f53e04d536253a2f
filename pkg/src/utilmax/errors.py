"""Exception hierarchy shared by the solver modules and the CLI."""


class UtilMaxError(Exception):
    """Base class; the CLI maps subclasses to exit codes via ``exit_code``."""

    exit_code = 1


class MalformedInput(UtilMaxError):
    pass


class InvalidProbabilities(MalformedInput):
    pass


class BrokenFiliation(MalformedInput):
    pass


class LeafNode(UtilMaxError):
    pass


class NotConcaveOnGrid(UtilMaxError):
    pass


class DegenerateSupport(UtilMaxError):
    pass


class ArbitrageDetected(UtilMaxError):
    exit_code = 2

    def __init__(self, node, witness, message=None):
        self.node = node
        self.witness = witness
        super().__init__(message or f"arbitrage at node {node}: witness {list(witness)}")


class UnboundedObjective(UtilMaxError):
    pass


class InfeasibleCone(UtilMaxError):
    pass


class ValueDiverged(UtilMaxError):
    exit_code = 3


class GridNotConverged(UtilMaxError):
    exit_code = 3


class BoundaryOptimum(UtilMaxError):
    exit_code = 3


class ZeroDerivative(UtilMaxError):
    pass


class BracketFailure(UtilMaxError):
    pass


class AENotSatisfied(UtilMaxError):
    exit_code = 3
