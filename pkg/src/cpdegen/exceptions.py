"""Exception types raised by cpdegen."""


class InvalidArgument(ValueError):
    """Shapes, modes, indices or options that violate an operation's contract."""


class DegenerateComponentError(ValueError):
    """A CP component has a zero factor column and cannot be normalized."""


class ContractViolation(ValueError):
    """An input claims a representation it does not satisfy (e.g. unnormalized columns)."""


class UndefinedMetricError(ValueError):
    """A metric was requested on input for which it is not defined."""


class ClosedFormUndefined(ValueError):
    """Closed-form eigenvectors need distinct eigenvalues and nonzero denominators."""
