"""Exception types raised across the package."""


class CausalAttnError(Exception):
    """Base class for all package errors."""


class DomainError(CausalAttnError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class TruncationError(CausalAttnError):
    """A truncated sum cannot be certified at the requested cutoff."""


class RangeError(CausalAttnError, ValueError):
    """An argument lies outside the validated evaluation range."""


class ConfigError(CausalAttnError, ValueError):
    """Invalid experiment configuration or sampler specification."""


class StepError(CausalAttnError, ValueError):
    """Invalid time-step request for the integrator."""


class CheckpointError(CausalAttnError, KeyError):
    """The requested time was not recorded in the ensemble."""


class InsufficientReplicates(CausalAttnError):
    """Too few replicates for the requested estimator."""


class OrderError(CausalAttnError, ValueError):
    """Source position is not strictly before the observed position."""


class SamplerError(CausalAttnError):
    """Initial data are incompatible with the requested observable."""


class ConditionError(CausalAttnError):
    """Hypotheses of the U-shape analysis are not met."""


class TruncationWarning(UserWarning):
    """The spectral tail exceeded its monitor threshold."""
