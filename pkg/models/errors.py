"""
Error types shared across the circuit, geometry, inference and training code.

Each error subclasses the builtin a caller would naturally catch, so code
that only knows about ValueError or ArithmeticError keeps working.
"""

from typing import Any, Optional


class StructureError(ValueError):
    """Circuit graph is malformed: cycle, dangling child id, bad node record."""

    def __init__(self, message: str, node_id: Optional[int] = None):
        super().__init__(message)
        self.node_id = node_id


class ArgumentError(ValueError):
    """A precondition on an operation's arguments does not hold."""


class GeometryError(ValueError):
    """Tessellation is degenerate (for example duplicate centroids)."""


class ConfigError(ValueError):
    """Configuration value is missing, malformed or out of range."""


class TractabilityError(ValueError):
    """Exact inference met a gating cell that does not factorize into intervals."""

    def __init__(self, message: str, node_id: Optional[int] = None):
        super().__init__(message)
        self.node_id = node_id


class NumericError(ArithmeticError):
    """A computation produced a non-finite value.

    Carries the node id (evaluation) or parameter path (gradients) where the
    value first appeared.
    """

    def __init__(self, message: str, node_id: Optional[int] = None,
                 parameter: Optional[str] = None):
        super().__init__(message)
        self.node_id = node_id
        self.parameter = parameter


class UndefinedBoundError(ArithmeticError):
    """A ratio bound is undefined because the denominator may be zero."""


class LPSolverError(ArithmeticError):
    """The simplex solver hit its iteration cap or an unbounded direction."""


class TrainingAborted(NumericError):
    """Training stopped on a non-finite loss.

    ``snapshot`` is the last good circuit and ``trace`` the records collected
    before the failure.
    """

    def __init__(self, message: str, snapshot: Any = None, trace: Any = None,
                 parameter: Optional[str] = None):
        super().__init__(message, parameter=parameter)
        self.snapshot = snapshot
        self.trace = trace
