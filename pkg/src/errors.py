"""
Exception types raised by the simulation lab.

Configuration and domain problems subclass ValueError so callers that
only know the generic contract can still catch them.
"""

from typing import Any, Dict, Optional


class DomainError(ValueError):
    """A parameter lies outside the range an operator is defined on."""


class StructuralError(ValueError):
    """Array shape or grid does not match what the operation expects."""


class EmptyBandError(ValueError):
    """A Littlewood-Paley band has no lattice frequency inside it."""


class ResolutionError(ValueError):
    """A dilation or rescaling needs frequencies or space the grid does not have."""


class ParameterError(ValueError):
    """An experiment recipe cannot produce the requested data.

    Attributes:
        table: Diagnostic values collected while trying (e.g. energy per width)
    """

    def __init__(self, message: str, table: Optional[Dict[Any, Any]] = None):
        super().__init__(message)
        self.table = table or {}


class BracketError(ValueError):
    """Both ends of a minimal-mass bracket returned the same verdict."""


class ScheduleError(ValueError):
    """A concentration schedule violates the vanishing-ratio condition."""


class IntegratorDivergedError(RuntimeError):
    """A time step produced non-finite values."""


class NoConvergenceError(RuntimeError):
    """Fixed-point iteration failed to contract.

    Attributes:
        diagnostics: Residuals and contraction ratios per iteration
    """

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ValueError):
    """An experiment file is unreadable or fails validation.

    Attributes:
        key: Dotted path of the first offending key, when known
    """

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key
