class DegaaError(Exception):
    """Base error for the DEGAA pipeline."""


class DegaaConfigError(DegaaError):
    """Raised when configuration is invalid or missing."""


class DimensionError(DegaaError, ValueError):
    """Raised when tensor shapes do not conform for an operation."""


class NumericError(DegaaError, ArithmeticError):
    """Raised when a non-finite value reaches an op boundary."""


class ContractError(DegaaError):
    """Raised when an operation precondition does not hold."""


class MissingPrerequisiteError(DegaaError):
    """Raised when a stage's input artifact has not been produced yet."""


class ArtifactIOError(DegaaError):
    """Raised for unexpected I/O failures that should stop the pipeline."""


class PipelineCancelled(DegaaError):
    """Raised when a pipeline run is cancelled."""
