"""Exception types shared across the solver suite."""


class ColnoiseError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(ColnoiseError):
    """A parameter is outside its admissible range."""


class ConfigError(ColnoiseError):
    """A run configuration failed validation.

    Carries the offending field path so CLI users can locate typos in
    physics parameters quickly.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ClosureMismatchError(ColnoiseError):
    """A closure was evaluated on a drift it does not support."""


class DivergentDiffusionError(ColnoiseError):
    """A stationary diffusion coefficient diverges on the solve domain."""


class MissingHistoryError(ColnoiseError):
    """The moment history does not cover the requested time."""


class UnsupportedCoefficientError(ColnoiseError):
    """Assembly was asked for a non-polynomial coefficient field."""


class AssemblyError(ColnoiseError):
    """A discrete operator could not be built or factorised."""


class StepFailureError(ColnoiseError):
    """A time step failed (singular system or non-convergent correction)."""


class SizeError(ColnoiseError):
    """A combinatorial computation exceeds its supported size."""


class StationarityError(ColnoiseError):
    """Stationarity was not reached within the simulated horizon."""
