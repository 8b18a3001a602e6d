"""
Errors - Exception hierarchy shared by every pybrach module.

Each class carries the exit code the command-line front end reports for it, so
library code only ever raises and ``cli.main.run`` is the single place that
translates failures into process status.
"""

from typing import Optional


class PybrachError(Exception):
    """Base class for all pybrach failures."""

    exit_code = 1


class UsageError(PybrachError):
    """Unknown command or malformed command-line flags."""

    exit_code = 1


class ConfigError(PybrachError, ValueError):
    """Malformed configuration or physically invalid parameter values."""

    exit_code = 2


class NotCertifiedError(PybrachError):
    """A funnel could not be certified, or a state lies outside every funnel."""

    exit_code = 3

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NumericalFailure(PybrachError):
    """Singular matrices, non-finite derivatives, solver breakdown."""

    exit_code = 4


class DivergenceError(PybrachError):
    """A simulated state became non-finite."""

    exit_code = 5

    def __init__(self, time: float, message: Optional[str] = None):
        super().__init__(message or f"state diverged at t = {time:.6g} s")
        self.time = time


class MissingInputError(PybrachError):
    """An input artifact required by a command does not exist."""

    exit_code = 6


class HorizonError(PybrachError, ValueError):
    """A query time lies outside a funnel or trajectory horizon."""

    exit_code = 2
