"""Exception types shared across the package."""


class MeshError(ValueError):
    """Invalid mesh geometry or topology."""


class PotentialError(ValueError):
    """Potential outside L-infinity-plus (non-positive or non-finite values)."""


class PatchError(ValueError):
    """Invalid boundary patch selection or mismatched patches."""


class SolverError(RuntimeError):
    """Linear solve failed to meet its residual contract.

    Attributes
    ----------
    residual : float
        Relative residual achieved before giving up.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class IndefiniteMatrixError(SolverError):
    """System matrix is not positive definite."""


class NoContrastError(ValueError):
    """Target region carries no potential contrast."""
