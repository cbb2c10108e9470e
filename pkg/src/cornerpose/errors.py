"""Exception hierarchy shared across the toolkit."""


class CornerPoseError(Exception):
    """Base class for all toolkit errors."""


class BehindCameraError(CornerPoseError):
    """A point lies at or behind the camera plane (Z <= near)."""


class MeshError(CornerPoseError, ValueError):
    """Invalid mesh geometry or topology."""


class DegenerateConfigurationError(CornerPoseError):
    """Correspondences do not determine a pose (rank deficiency)."""


class TooFewPointsError(CornerPoseError, ValueError):
    pass


class DivergenceError(CornerPoseError):
    """Iterative refinement could not keep points in front of the camera."""


class SymmetryDomainError(CornerPoseError, ValueError):
    pass


class EmptyMaskError(CornerPoseError, ValueError):
    pass


class RenderError(CornerPoseError):
    pass


class SamplingError(CornerPoseError):
    """Rejection sampling exhausted its draw budget."""


class FormatError(CornerPoseError, ValueError):
    """Malformed input file or record."""
