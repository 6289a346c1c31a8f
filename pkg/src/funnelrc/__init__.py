"""Funnel-based online recovery control.

Learns unknown dynamics online with a certified recurrent equilibrium
network, synthesizes time-varying tracking gains through a one-step
matrix-inequality program, derives invariant funnel ellipsoids around the
nominal trajectory, and drives a 4-generator DC-microgrid recovery
benchmark end to end.
"""

from . import conic, microgrid, plant, ren, runner, synthesis
from .errors import (ConfigError, ContractError, DomainError, FunnelInfeasible,
                     FunnelrcError, GeometryError, NumericalError)

__version__ = "0.1.0"

__all__ = [
    "conic", "microgrid", "plant", "ren", "runner", "synthesis",
    "ConfigError", "ContractError", "DomainError", "FunnelInfeasible",
    "FunnelrcError", "GeometryError", "NumericalError", "__version__",
]
