"""Exception hierarchy shared by the reshaping toolkit.

Every error raised on purpose by the package derives from `ReshaperError`,
so the CLI can map failures onto exit codes without catching unrelated bugs.
"""

from typing import Optional


class ReshaperError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(ReshaperError, ValueError):
    """Invalid parameters, mismatched grids or a malformed experiment config.

    `field` names the offending config path (e.g. ``shapes.se_tau_ps``) when
    the error comes from a config document.
    """

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class AliasingError(ConfigurationError):
    """Comb span reaches the Nyquist limit of the time grid."""


class TruncationError(ReshaperError, ValueError):
    """Pulse support does not fit inside one comb period."""


class NumericalBlowupError(ReshaperError, ArithmeticError):
    """Non-finite field values appeared during propagation."""

    def __init__(self, z: float):
        super().__init__(f"non-finite field values at z = {z:.6g}")
        self.z = z


class UndefinedMetricError(ReshaperError, ValueError):
    """A metric was requested for a zero-energy envelope."""


class ObjectiveError(ReshaperError, RuntimeError):
    """Objective evaluation failed for a candidate pump comb."""

    def __init__(self, message: str, comb=None):
        super().__init__(message)
        self.comb = comb


class SweepError(ReshaperError, RuntimeError):
    """A propagation inside a power sweep failed."""

    def __init__(self, message: str, scale: float):
        super().__init__(f"{message} (pump_scale = {scale:.6g})")
        self.scale = scale
