"""Shared exception types."""


class FunnelrcError(Exception):
    """Base class for all package errors."""


class ContractError(FunnelrcError):
    """An argument violates a documented interface contract (shape, type, range)."""


class DomainError(FunnelrcError):
    """Evaluation requested outside the declared domain (e.g. polytope exterior)."""


class GeometryError(FunnelrcError):
    """Degenerate geometry: a waypoint sits on or outside a constraint half-space."""


class NumericalError(FunnelrcError):
    """A computation produced non-finite values or a backend failed numerically."""


class FunnelInfeasible(FunnelrcError):
    """The contraction argument fails (k >= 1); no finite invariant funnel exists."""


class ConfigError(FunnelrcError):
    """A configuration file or run configuration is invalid."""
