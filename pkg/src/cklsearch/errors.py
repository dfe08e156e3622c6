"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an operation receives arguments violating its contract."""


class BudgetExceededError(RuntimeError):
    """Raised when a search exhausts its step budget before terminating.

    Carries the partial trace collected so far in ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ExhaustedError(RuntimeError):
    """Raised when a discrete search runs out of unused items to query."""


class DegenerateBeliefError(RuntimeError):
    """Raised when a belief update would leave zero total mass."""


class TrainingDivergedError(RuntimeError):
    """Raised when embedding training produces a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class SessionError(RuntimeError):
    """Raised when an interactive answer source fails mid-search.

    Carries the partial stage log in ``records``.
    """

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records
