"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical failures with 3.
"""


class FlybyError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(FlybyError, ValueError):
    """A parameter set violates a documented invariant."""


class ContractError(FlybyError, ValueError):
    """Arguments are individually valid but inconsistent (e.g. grid mismatch)."""


class NumericalError(FlybyError, ArithmeticError):
    """A computation produced NaN/Inf or otherwise failed numerically."""


class BoundaryContactError(NumericalError):
    """Probability density reached the edge of the periodic box."""


class ConvergenceError(NumericalError):
    """A solver result failed its own quality check."""


class ObservableError(FlybyError, ValueError):
    """An observable is undefined for the given state (e.g. zero norm)."""


class InteractionActiveError(FlybyError, RuntimeError):
    """Branch or channel analysis requested while the coupling is still on."""


class DomainError(FlybyError, ValueError):
    """A potential was evaluated outside the range where it is defined."""
