"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """A precondition on an argument was violated."""


class InfeasibleDesign(RuntimeError):
    """No realizable parameter set was found for the requested design."""


class PartialDesign(RuntimeError):
    """A generator gave up before producing the requested number of points.

    Attributes
    ----------
    achieved : int
        Number of points placed before the budget ran out.
    """

    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved


class NumericalFailure(RuntimeError):
    """A numerical routine (factorization, synthesis) broke down."""
