"""Exception types raised by the numerical pipeline."""


class PhasekitError(Exception):
    """Base class for numerical/analysis failures (CLI exit code 3)."""


class DivergenceError(PhasekitError):
    """Integration produced a non-finite state."""

    def __init__(self, first_bad_time: float):
        self.first_bad_time = first_bad_time
        super().__init__(f"non-finite state first encountered at t={first_bad_time!r}")


class NotOscillatingError(PhasekitError):
    """No sustained oscillation was detected."""


class ConvergenceError(PhasekitError):
    """An iterative settling/measurement loop failed to converge."""


class PeriodUnstableError(PhasekitError):
    """Successive period estimates disagree beyond tolerance."""


class TooStrongImpulseError(PhasekitError):
    """Measured phase shift too large for the weak-injection regime."""


class FourierFitError(PhasekitError):
    """Truncated Fourier series cannot represent the sampled curve."""


class OrbitAccuracyError(PhasekitError):
    """Adjoint normalization drifted; the stored orbit is too coarse."""


class IncompatibleCurvesError(PhasekitError):
    """Curves from different limit cycles cannot be compared."""


class ConfigError(PhasekitError):
    """Invalid experiment configuration (CLI exit code 2)."""
