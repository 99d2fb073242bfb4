"""Exception hierarchy shared by every module.

The CLI maps :class:`PreconditionError` to exit status 2 and
:class:`NumericalToleranceError` to exit status 3.
"""


class WedgeLabError(Exception):
    pass


class PreconditionError(WedgeLabError, ValueError):
    """An input violates an operation's precondition."""


class NotSimpleError(PreconditionError):
    pass


class HypothesisViolation(PreconditionError):
    """A per-simplex projection hypothesis failed; ``index`` names the simplex."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NumericalToleranceError(WedgeLabError, ArithmeticError):
    """A computed quantity missed a stated tolerance."""


class OutsideHypothesisWarning(UserWarning):
    """A bound was evaluated outside the range where it is proven."""
