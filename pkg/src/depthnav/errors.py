"""Exception types shared across the package."""


class DepthNavError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DepthNavError):
    """Tensor or image dimensions do not match what an operation requires."""


class TrainingError(DepthNavError):
    """Training aborted (bad dataset, non-finite loss or gradients)."""


class CheckpointError(DepthNavError):
    """Checkpoint file is malformed, corrupt, or incompatible."""


class DatasetError(DepthNavError):
    """Dataset container or import directory is malformed or inconsistent."""


class WorldError(DepthNavError):
    """Invalid world geometry, state, or simulation request."""


class PlannerError(DepthNavError):
    """Invalid planner configuration or input (e.g. non-PSD covariance)."""


class ConfigError(DepthNavError):
    """Bad configuration file or parameter value."""
