"""Exception types raised across the package."""


class SrpairError(Exception):
    """Base class for all package errors."""


class SingularTransformError(SrpairError, ValueError):
    pass


class LayoutError(SrpairError, ValueError):
    pass


class MarkerNotFoundError(SrpairError):
    def __init__(self, index, reason):
        self.index = index
        self.reason = reason
        super().__init__(f"marker {index} not found: {reason}")


class DegenerateAnchorsError(SrpairError, ValueError):
    pass


class InsufficientOverlapError(SrpairError):
    pass


class DimensionMismatchError(SrpairError, ValueError):
    pass


class StageError(SrpairError):
    """Wraps an upstream failure with the pipeline stage it happened in."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
