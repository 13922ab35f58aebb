"""Exception types raised by the library."""


class MpccError(Exception):
    """Base class for all library errors."""


class InvalidStateError(MpccError):
    """State or input outside the model's validity region (vx floor, non-finite values)."""


class FrictionViolationError(MpccError):
    """Longitudinal axle force exceeds the friction circle beyond the allowed slack."""


class PathError(MpccError):
    """Base class for reference-path problems."""


class PathValidationError(PathError):
    """Sample table violates the reference-path invariants."""


class PathTooShortError(PathError):
    """Path does not cover the horizon's progress range."""


class AmbiguousProjectionError(PathError):
    """Two projection candidates are equally close but far apart in arc length."""


class InvalidGeometryError(MpccError):
    """Scenario geometry is unusable (no corridor, obstacle off track, ...)."""


class InfeasibleInitialStateError(MpccError):
    """Initial state grossly violates the friction bound."""


class QpInfeasibleError(MpccError):
    """Quadratic subproblem has an empty feasible set."""


class ConfigError(MpccError):
    """Configuration file missing, unreadable, or inconsistent."""
