"""Exception types raised across the package."""


class UnmixingError(Exception):
    """Base class for all polyunmix failures."""


class BundleError(UnmixingError, ValueError):
    """A dataset or result bundle on disk is missing, corrupt or inconsistent."""


class DegenerateError(UnmixingError, ValueError):
    """Input is geometrically or numerically degenerate for the requested step."""


class ConvergenceError(UnmixingError, RuntimeError):
    """An iterative solver hit its iteration cap.

    The last observed residual is kept on ``residual`` so callers can decide
    whether the partial answer is usable.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual
