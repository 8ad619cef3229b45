"""Exception types shared across the package."""


class RingSegError(Exception):
    """Base class for all ringseg errors."""


class FileFormatError(RingSegError):
    """A binary file (point cloud, label file, sample archive) is malformed."""


class AlignmentError(RingSegError):
    """Parallel per-point data does not match the cloud it belongs to."""


class InvalidClassError(RingSegError):
    """A class id outside the supported range was encountered."""


class ScanFormatError(RingSegError):
    """The point ordering is incompatible with the assumed scan pattern."""


class DegenerateGeometryError(RingSegError):
    """A geometric fit has no unique solution (too few or collinear points)."""


class SceneValidationError(RingSegError):
    """A synthetic scene description violates its physical constraints."""


class ConfigError(RingSegError):
    """A configuration key is unknown or carries an invalid value."""

    def __init__(self, key: str, reason: str):
        super().__init__(f"config key '{key}': {reason}")
        self.key = key
        self.reason = reason
