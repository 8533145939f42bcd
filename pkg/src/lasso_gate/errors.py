"""Exception types shared across the package."""


class ConstantColumn(ValueError):
    """A marker column has (near) zero sample variance."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"marker column {column} is constant within tolerance")


class DegenerateResponse(ValueError):
    """The response vector has (near) zero sample variance."""


class NotSymmetric(ValueError):
    """A matrix expected to be symmetric is not, beyond tolerance."""


class NoConvergence(RuntimeError):
    """Coordinate descent hit its sweep limit before the certificate passed."""

    def __init__(self, max_sweeps: int, lam: float):
        self.max_sweeps = max_sweeps
        self.lam = lam
        super().__init__(
            f"no convergence within {max_sweeps} sweeps at lambda={lam:g}"
        )


class UnderdeterminedUnpenalized(ValueError):
    """An unpenalized fit was requested but least squares is underdetermined."""


class InsufficientReplicates(ValueError):
    """Too few replicates to realize the requested quantile order statistic."""


class FingerprintMismatch(ValueError):
    """A calibration table was built for a different covariance model."""


class DegenerateFit(ArithmeticError):
    """A single-marker regression left no residual variance to test against."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"residual variance underflow in marker {column}")


class IoFailure(OSError):
    """Reading or writing an artifact file failed."""
