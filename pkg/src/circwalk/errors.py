"""Exception hierarchy shared by the library and the command line."""


class CircwalkError(Exception):
    """Base class for all package errors."""


class DataError(CircwalkError):
    """Malformed or inconsistent observed data (CLI exit code 3)."""


class NumericalError(CircwalkError):
    """A numerical procedure failed or met a degenerate configuration (exit code 4)."""


class EmptyStateError(NumericalError):
    """A hidden state received (numerically) zero posterior mass."""

    def __init__(self, state, message="empty state"):
        self.state = state
        super().__init__(f"{message}: state {state + 1} has no posterior mass")


class AscentError(NumericalError):
    """The observed log-likelihood decreased during EM."""
