"""Exception types raised by the simulator."""


class RisError(Exception):
    """Base class for simulator errors."""


class DegenerateDirection(RisError, ValueError):
    """Horizontal displacement between two points is zero."""


class UncertaintyTooLarge(RisError, ValueError):
    """Uncertainty disk reaches the reference point."""


class GeometryOverlap(RisError, ValueError):
    """Two distinct dipoles intersect."""


class SingularNetwork(RisError, ArithmeticError):
    """Port impedance matrix is numerically singular."""


class PhaseAtBranchPoint(RisError, ValueError):
    """Phase too close to 0 mod 2*pi, where the reactance diverges."""


class ConfigError(RisError, ValueError):
    """Invalid scenario or experiment configuration."""
