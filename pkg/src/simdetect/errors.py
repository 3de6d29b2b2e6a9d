"""Exception and warning types shared across the package."""


class SimDetectError(Exception):
    """Base class for package errors."""


class NumericalError(SimDetectError):
    """A computation could not be carried out for numerical reasons."""


class NotPositiveDefinite(NumericalError):
    def __init__(self, min_eigenvalue, message=None):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            message
            or f"covariance is not positive definite (smallest eigenvalue {self.min_eigenvalue:.3e})"
        )


class TooFewObservations(SimDetectError):
    pass


class ZeroBeta(SimDetectError):
    pass


class EnumerationTooLarge(SimDetectError):
    pass


class DidNotConverge(NumericalError):
    """Raised by the SDP solver; ``result`` holds the best feasible iterate."""

    def __init__(self, result):
        self.result = result
        super().__init__(
            f"SDP solver stopped after {result.iterations} iterations "
            f"(primal {result.residuals[0]:.2e}, dual {result.residuals[1]:.2e}, gap {result.gap:.2e})"
        )


class ThresholdMismatch(SimDetectError):
    pass


class DegenerateResponse(NumericalError):
    pass


class TiesUnbrokenWarning(UserWarning):
    """More than 10% of response values are tied; slicing falls back to index order."""
