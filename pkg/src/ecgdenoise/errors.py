"""Exception types raised by the library."""


class EcgDenoiseError(Exception):
    """Base class for all library-specific errors."""


class IntegrationDivergedError(EcgDenoiseError):
    """Non-finite state encountered while integrating the ODE."""

    def __init__(self, step, trace_index=0):
        self.step = int(step)
        self.trace_index = int(trace_index)
        super().__init__(
            f"integration produced a non-finite state at step {self.step}"
            f" (trace {self.trace_index})"
        )


class InvalidJitterError(EcgDenoiseError):
    """Jitter resampling exhausted its retry budget."""


class WindowTooLongError(EcgDenoiseError, ValueError):
    """Requested beat window exceeds one full cycle."""


class NoBeatsError(EcgDenoiseError):
    """No usable beats were found in a trace."""


class InsufficientReplicatesError(EcgDenoiseError, ValueError):
    """Noise estimation needs at least two beats per sample."""


class ZeroNoiseError(EcgDenoiseError):
    """All beat replicates are identical; the noise scale is unidentifiable."""


class FitDivergedError(EcgDenoiseError):
    """An EM fit produced a non-finite log-likelihood or collapsed."""


class EmptyInputError(EcgDenoiseError, ValueError):
    """An operation received an empty report or sample set."""
