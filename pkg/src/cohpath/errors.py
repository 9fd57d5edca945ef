"""Exception taxonomy shared across the package.

Contract violations (bad shapes, out-of-domain arguments) raise
``ValueError`` subclasses; resource refusals (dimension budgets, basis
truncation) raise ``RuntimeError`` subclasses carrying enough detail to
act on.  The CLI maps these onto distinct exit codes.
"""

__all__ = [
    "DimensionMismatchError",
    "PreconditionError",
    "BudgetError",
    "TruncationError",
    "OperatorFormatError",
]


class DimensionMismatchError(ValueError):
    """Objects built over different mode spaces (or array shapes) were mixed."""


class PreconditionError(ValueError):
    """An argument violates a documented precondition (domain, sign, finiteness)."""


class BudgetError(RuntimeError):
    """A deterministic enumeration would exceed the configured budget.

    The message always states the budget and the requested size, so the
    caller can shrink the request instead of guessing.
    """


class TruncationError(RuntimeError):
    """A truncated-basis computation cannot meet its accuracy contract.

    Attributes
    ----------
    required_size : int or None
        Estimated basis size that would satisfy the contract, when known.
    """

    def __init__(self, message, required_size=None):
        super().__init__(message)
        self.required_size = required_size


class OperatorFormatError(ValueError):
    """An operator term string failed to parse; message points at the term."""
