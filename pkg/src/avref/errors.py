"""Exception hierarchy shared across the package."""


class AvrefError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AvrefError):
    """Bad dimensions, invalid slot combinations, missing classes, etc."""


class DomainError(AvrefError):
    """Input outside the mathematical domain of an operation."""


class TrainingError(AvrefError):
    """Raised when optimization goes numerically wrong (NaN gradients...)."""


class CheckError(AvrefError):
    """Gradient check could not be evaluated (non-finite loss)."""


class ParseError(AvrefError):
    """Instruction matched no template.

    ``position`` is the index of the first token that could not be matched
    (over the longest-matching template); ``token`` is its text, or None when
    the input ended early.
    """

    def __init__(self, message, position=0, token=None):
        super().__init__(message)
        self.position = position
        self.token = token


class UnknownObjectError(ParseError):
    """Template shape matched but an object slot held an unknown word."""


class EncodeError(AvrefError):
    """Language encoder received an empty token sequence."""


class DspError(AvrefError):
    """Signal too short or otherwise unusable for feature extraction."""


class GroundingError(AvrefError):
    """No candidate regions to attend over."""


class CalibrationError(AvrefError):
    """Calibration unfitted, degenerate, or residual too large."""


class SceneGenerationError(AvrefError):
    """Rejection sampling failed to place the scene's objects."""


class EvaluationError(AvrefError):
    """Trace unterminated or otherwise unscorable."""


class MissingArtifactError(AvrefError):
    """A required checkpoint or data file does not exist."""
