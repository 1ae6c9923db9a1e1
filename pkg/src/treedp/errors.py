"""Exception hierarchy.

Two families matter to callers (and to the CLI exit codes):
``InputError`` for malformed or unsupported inputs, and ``DomainError``
for well-formed inputs whose sets turn out empty, infeasible or unbounded.
"""


class TreeDPError(Exception):
    """Base class for all package errors."""


class InputError(TreeDPError):
    pass


class DomainError(TreeDPError):
    pass


class NotATree(InputError):
    def __init__(self, message, edge=None, component=None):
        super().__init__(message)
        self.edge = edge
        self.component = component


class SharedVariableError(InputError):
    """A variable is referenced by three or more subsystems."""


class Unsupported(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class MultipleInterconnections(InputError):
    pass


class InconsistentEqualities(DomainError):
    pass


class EmptyPolyhedron(DomainError):
    pass


class UnboundedRadius(DomainError):
    pass


class Unbounded(DomainError):
    pass


class EmptyOrLowerDimensional(DomainError):
    pass


class DegenerateImage(DomainError):
    pass


class DegenerateHull(DomainError):
    pass


class Infeasible(DomainError):
    pass


class NumericalFailure(TreeDPError):
    pass


class SingularJacobian(NumericalFailure):
    pass


class MaxIterations(NumericalFailure):
    pass


class EmptyCouplingSet(DomainError):
    def __init__(self, subsystem, message=None):
        super().__init__(message or f"coupling set of subsystem {subsystem} is empty")
        self.subsystem = subsystem


class SubproblemInfeasible(DomainError):
    """Forward-sweep subproblem infeasible; with certified sets this is a defect."""

    def __init__(self, subsystem, message=None):
        super().__init__(message or f"forward subproblem of subsystem {subsystem} is infeasible")
        self.subsystem = subsystem


class UncertifiedInnerApproximation(DomainError):
    pass


class NoFeasibleSamples(DomainError):
    pass


class ComponentUnbounded(DomainError):
    pass
