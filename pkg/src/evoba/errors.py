"""Exception types shared across the package."""


class ContractViolationError(ValueError):
    """An argument or call violated a documented precondition."""


class AlreadyMisclassifiedError(ContractViolationError):
    """Attack was given an image the target already misclassifies.

    Attacks only make sense against correctly classified inputs; such a run
    is rejected outright instead of being counted as a trivial success.
    """


class IdxFormatError(ValueError):
    """An IDX file failed to parse (bad magic or truncated payload)."""


class InsufficientPoolError(ContractViolationError):
    """Not enough correctly classified images to build an evaluation pool."""
