"""Exception hierarchy for the semantic white balance toolkit."""


class SemanticWBError(Exception):
    """Base class for all toolkit errors."""


class ImageFormatError(SemanticWBError):
    """An image or mask file cannot be decoded or has an unsupported layout."""


class ShapeMismatchError(SemanticWBError, ValueError):
    """Two arrays that must agree in shape do not."""

    def __init__(self, what: str, expected: tuple[int, ...], actual: tuple[int, ...]):
        super().__init__(f"{what}: expected shape {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class LabelRangeError(SemanticWBError, ValueError):
    """A semantic mask holds a label outside [0, K-1]."""


class ParameterError(SemanticWBError, ValueError):
    """A correction/distortion parameter or range is invalid."""


class DegenerateImageError(SemanticWBError, ValueError):
    """An image channel carries no signal for a statistics-based estimator."""


class ManifestError(SemanticWBError):
    """A dataset manifest is malformed or has an unsupported version."""


class CheckpointError(SemanticWBError):
    """A checkpoint is malformed or does not match the network."""


class TrainingError(SemanticWBError):
    """Training cannot continue (e.g. the loss became non-finite)."""


class ConfigError(SemanticWBError, ValueError):
    """An experiment configuration is invalid."""


class StageError(SemanticWBError):
    """A pipeline stage failed.

    Attributes:
        stage: Name of the failed stage (e.g. "synthesize", "train-rgb").
    """

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
