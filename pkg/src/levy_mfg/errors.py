"""Exception hierarchy shared by the solver modules."""


class LevyMfgError(Exception):
    """Base class for all solver errors."""


class NonIntegrableMeasure(LevyMfgError):
    """The Levy measure violates the integrability condition on min(1, z^2)."""


class InvalidTruncation(LevyMfgError):
    """Small-jump truncation radius outside (0, 1]."""


class DegenerateIntensity(LevyMfgError):
    """An operation needs a positive large-jump intensity but lambda_r == 0."""


class UnboundedControlSearch(LevyMfgError):
    """The HJB minimizer sits on the control search box after refinement."""


class TimeOutOfRange(LevyMfgError):
    """Requested time lies outside [0, T]."""


class NegativeMass(LevyMfgError):
    """The density update produced a negative cell mass."""


class NoConvergence(LevyMfgError):
    """The fixed-point iteration did not reach the tolerance."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class MassMismatch(LevyMfgError):
    """Two measures compared by the flat distance carry different mass."""


class IncompatibleRuns(LevyMfgError):
    """Two runs cannot be compared (domain, horizon or resolution)."""


class CFLViolation(LevyMfgError):
    """A discretization ratio exceeds the configured CFL threshold."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
