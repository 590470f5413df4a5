"""Exception types raised across the package."""


class VPLError(Exception):
    """Base class for every error raised by the simulator."""


class ConfigError(VPLError):
    """Invalid configuration value, key, or grid parameter."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(VPLError):
    """Array shape does not match the grid it is used with."""


class CflError(VPLError):
    """Velocity shift too large for the periodised box."""


class QuadratureError(VPLError):
    """Adaptive radial quadrature missed its absolute tolerance."""


class TagError(VPLError):
    """Operation requires a different stored unknown (f, g or h)."""


class MeanError(VPLError):
    """Density has a non-negligible spatial mean."""


class RegimeError(VPLError):
    """Potential outside the perturbative regime."""


class BlowupError(VPLError):
    """Norm grew by more than a factor 10 in one step."""


class DomainError(VPLError):
    """Transform evaluated outside its half-plane."""


class ResolutionError(VPLError):
    """Grid refinement changed a reported value by too much."""


class SingularError(VPLError):
    """Dispersion function vanishes on the scanned grid."""


class GridError(VPLError):
    """Time grids of two series do not match."""


class TailError(VPLError):
    """Kernel tail is not resolved within the sampled window."""


class InterpolationError(VPLError):
    """Samples too sparse for linear interpolation in time."""


class GuardError(VPLError):
    """Velocity weight exponent too large for the box."""


class FitError(VPLError):
    """Not enough data points for a fit."""


class NotReachedError(VPLError):
    """Series never dropped to the requested level."""


class FormatError(VPLError):
    """Binary file has a bad magic, version or length."""


class IoError(VPLError):
    """File could not be read or written."""


class ConsistencyError(VPLError):
    """Two independent evaluations of the same quantity disagree."""
