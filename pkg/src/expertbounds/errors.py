"""Exception hierarchy shared by every module of the testbed."""


class ExpertBoundsError(Exception):
    """Base class for all errors raised by expertbounds."""


class DimensionError(ExpertBoundsError, ValueError):
    """Array shapes or lengths do not match what an operation requires."""


class NumericDomainError(ExpertBoundsError, ValueError):
    """Input lies outside an operation's numeric domain (NaN/Inf, off-simplex, nonpositive)."""


class ParameterError(ExpertBoundsError, ValueError):
    """An operation parameter is out of range."""


class ConfigError(ExpertBoundsError, ValueError):
    """Configuration is missing a key, has an unknown key, or is inconsistent."""


class GenerationError(ExpertBoundsError, RuntimeError):
    """Benchmark or pair generation could not satisfy its constraints."""


class StorageError(ExpertBoundsError, OSError):
    """Reading or writing an artifact file failed."""


class ParseError(ExpertBoundsError, ValueError):
    """An artifact file is malformed."""

    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class TrainingError(ExpertBoundsError, RuntimeError):
    """A training routine cannot run on the data it was given."""


class StatsError(ExpertBoundsError, ValueError):
    """Distribution statistics cannot be fitted."""


class CalibrationError(ExpertBoundsError, ValueError):
    """Calibration parameters cannot be fitted."""


class ConvergenceError(ExpertBoundsError, RuntimeError):
    """An iterative routine stopped before reaching its tolerance."""

    def __init__(self, message: str, deviation: float) -> None:
        super().__init__(f"{message} (final deviation {deviation:.3e})")
        self.deviation = deviation


class PreconditionError(ExpertBoundsError, ValueError):
    """An operation's precondition on its inputs does not hold."""


class UnknownDomainError(ExpertBoundsError, LookupError):
    """A domain id is not part of the benchmark."""


class UnknownExpertError(ExpertBoundsError, LookupError):
    """An expert id is not part of the system."""


class UndefinedMetricError(ExpertBoundsError, ValueError):
    """A metric is mathematically undefined on the given data."""


class ComparisonError(ExpertBoundsError, ValueError):
    """Two run artifacts cannot be compared."""


class EmissionError(ExpertBoundsError, RuntimeError):
    """A report cannot be emitted from an incomplete artifact."""

    def __init__(self, missing_stages: list[str]) -> None:
        super().__init__(f"run artifact is incomplete, missing stages: {', '.join(missing_stages)}")
        self.missing_stages = missing_stages


class StageError(ExpertBoundsError, RuntimeError):
    """A pipeline stage failed."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
