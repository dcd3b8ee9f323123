"""Exception types shared across the package."""


class StochvecError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(StochvecError):
    """Operands live in incompatible spatial dimensions or grid shapes."""


class KernelUnderresolved(StochvecError):
    """Mollifier width is below the grid spacing."""


class MissingDerivatives(StochvecError):
    """An analytic field does not expose the derivative order required."""


class InvalidConfig(StochvecError):
    """Experiment configuration failed validation."""


class DegenerateSample(StochvecError):
    """A norm in a denominator vanished."""


class InsufficientSamples(StochvecError):
    """Fewer samples than the estimator requires."""


class BlowUp(StochvecError):
    """A particle left the safety shell; indicates an integrator bug."""


class InverseToleranceExceeded(StochvecError):
    """Round-trip residual of the inverse flow exceeded its tolerance."""

    def __init__(self, residual, tol):
        super().__init__(f"inverse-flow round-trip residual {residual:.3e} > tol {tol:.3e}")
        self.residual = residual
        self.tol = tol


class StepRejected(StochvecError):
    """A parabolic step produced nonfinite values even after halving."""


class TolExceeded(StochvecError):
    """A comparison exceeded its configured tolerance; carries the report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
