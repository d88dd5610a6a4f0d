"""Exception hierarchy shared by all modules."""


class PeriodicCLTError(Exception):
    """Base class for every error raised by this package."""


class NotPrimitive(PeriodicCLTError, ValueError):
    pass


class BudgetExceeded(PeriodicCLTError):
    pass


class NoPath(PeriodicCLTError, ValueError):
    pass


class GapTooShort(PeriodicCLTError, ValueError):
    pass


class WindowTooShort(PeriodicCLTError, ValueError):
    pass


class IncompatibleSchedule(PeriodicCLTError, ValueError):
    pass


class IndexOutOfRange(PeriodicCLTError, IndexError):
    pass


class ValidationFailure(PeriodicCLTError):
    """An invariant that construction guarantees did not hold.

    Always signals a bug; never caught internally.
    """


class EmptyInput(PeriodicCLTError, ValueError):
    pass


class ConfigError(PeriodicCLTError, ValueError):
    pass
