"""Exception types shared across the package.

Invalid arguments raise ValueError subclasses so callers can keep using
ordinary try/except ValueError at the API boundary; runtime failures of the
numerics (cone exits, Newton stalls, timeouts) get their own hierarchy.
"""

from __future__ import annotations


class HessflowError(Exception):
    """Base class for runtime failures of the numerics."""


class ConeViolationError(HessflowError):
    """An eigenvalue point left the operator's admissibility cone.

    Carries the measured relative margin and the offending point.
    """

    def __init__(self, margin, point=None, where=None):
        self.margin = float(margin)
        self.point = point
        self.where = where
        loc = f" at {where}" if where is not None else ""
        super().__init__(f"cone violation{loc}: relative margin {self.margin:.3e}")


class FormViolationError(HessflowError):
    """Exponential-form right-hand side hit a nonpositive operator value."""

    def __init__(self, value, where=None):
        self.value = float(value)
        self.where = where
        loc = f" at {where}" if where is not None else ""
        super().__init__(f"operator value {self.value:.3e} <= 0{loc}; "
                         "exponential form needs f > 0")


class ConstraintViolationError(HessflowError):
    """A test-function smallness constraint failed; message cites the bound."""


class InvalidConfigurationError(HessflowError, ValueError):
    """A run or certification setup is structurally unusable."""


class StepFailureError(HessflowError):
    """A time step could not be completed (admissibility or Newton stall)."""

    def __init__(self, message, worst_node=None, diagnostics=None):
        self.worst_node = worst_node
        self.diagnostics = diagnostics
        super().__init__(message)


class SteadyStateTimeoutError(HessflowError):
    """Steady-state iteration exhausted its step budget."""

    def __init__(self, residual, steps):
        self.residual = float(residual)
        self.steps = int(steps)
        super().__init__(
            f"no steady state after {steps} steps; last sup|u_t| = {self.residual:.3e}")


class ConfigError(HessflowError, ValueError):
    """Config text could not be parsed or validated; carries a line number."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
