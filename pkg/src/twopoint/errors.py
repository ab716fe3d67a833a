"""Exception types shared across the package."""


class TwoPointError(Exception):
    """Base class for all package errors."""


class DomainViolation(TwoPointError, ValueError):
    """A point pair or parameter leaves the region where the geometry is well defined."""


class DegenerateSpan(TwoPointError, ValueError):
    pass


class DegenerateSegment(TwoPointError, ValueError):
    """Raised when a geodesic segment is requested between coincident points."""


class BaseMismatch(TwoPointError, ValueError):
    pass


class GridMismatch(TwoPointError, ValueError):
    pass


class SolverFailure(TwoPointError, RuntimeError):
    pass


class ConeViolation(TwoPointError, ValueError):
    pass


class ConfigError(TwoPointError, ValueError):
    pass
