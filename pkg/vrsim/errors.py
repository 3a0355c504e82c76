"""Exception hierarchy.

Every domain failure is a ``ValueError`` subclass so callers that only know
about ``ValueError`` keep working.
"""


class VrsimError(ValueError):
    """Base class for all simulator errors."""


class ConfigError(VrsimError):
    """Invalid run or experiment configuration."""


class DataError(VrsimError):
    """Dataset construction or ingestion failed."""


class SchedulerError(VrsimError):
    """The delay scheduler could not place a job."""


class SimulationError(VrsimError):
    """A simulation reached an invalid state."""

    def __init__(self, message: str, iteration: int | None = None):
        self.iteration = iteration
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)


class TheoryError(VrsimError):
    """A closed-form bound was requested outside its hypothesis."""


class OutputConflictError(VrsimError):
    """Refusing to overwrite an output file with different content."""


class PlotError(VrsimError):
    """Trace files cannot be plotted together."""
