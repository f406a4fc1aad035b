"""Exception hierarchy shared by all modules."""


class QstbcError(Exception):
    """Base class for errors raised by this package."""


class UsageError(QstbcError, ValueError):
    """Bad arguments: wrong sizes, non power-of-two antenna counts, etc."""


class DomainError(QstbcError, ValueError):
    """Argument outside the mathematical domain of a special function."""


class StructuralViolation(QstbcError, RuntimeError):
    """A structural identity of the code/channel pipeline does not hold.

    Carries the name of the failing invariant so the CLI can report it.
    """

    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        msg = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(msg)


class DegenerateChannelError(QstbcError, ArithmeticError):
    """Equivalent channel is singular (probability-zero event)."""
