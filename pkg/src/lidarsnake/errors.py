"""Exception types raised by the package.

Grouped by failure class so the CLI can map them onto exit codes:
configuration problems, missing inputs, and numerical failures.
"""


class LidarSnakeError(Exception):
    """Base class for all package errors."""


class ConfigError(LidarSnakeError):
    """Invalid or unparseable configuration."""


class MissingInput(LidarSnakeError):
    """A referenced input file does not exist."""


class NumericalError(LidarSnakeError):
    """Base class for numerical failures during iteration."""


class EmptyCloud(LidarSnakeError):
    """No point of the cloud lands inside the raster extent."""


class EmptySparse(LidarSnakeError):
    """A sparse elevation raster has no filled pixels."""


class NonFinite(NumericalError):
    """An iteration produced NaN or infinity (step size too large)."""


class Unstable(NumericalError):
    """Field values exceeded the stability bound (time step too large)."""


class DimMismatch(LidarSnakeError):
    """Two rasters that must share a shape do not."""


class MissingBand(LidarSnakeError):
    """A required multispectral band is absent."""


class DegenerateNormal(LidarSnakeError):
    """Contour normal undefined because neighbouring points coincide."""


class SingularOperator(NumericalError):
    """The implicit contour-update operator is not invertible."""


class Diverged(NumericalError):
    """The contour left the raster entirely."""


class Collapsed(NumericalError):
    """The contour shrank below one square pixel of enclosed area."""
