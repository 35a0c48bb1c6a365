class MetaNeRVError(Exception):
    """Base error for the application."""


class ConfigurationError(MetaNeRVError):
    """Raised when required configuration is missing or invalid."""


class StorageError(MetaNeRVError):
    """Raised when a file or directory cannot be read or written."""

    def __init__(self, message: str, path: str | None = None) -> None:
        super().__init__(f"{message}: {path}" if path else message)
        self.path = path


# Tensor engine


class EngineError(MetaNeRVError):
    """Base error for tensor engine operations."""


class ShapeMismatchError(EngineError):
    """Raised when operand shapes disagree."""


class InvalidShapeError(EngineError):
    """Raised when a shape violates an operation's contract."""


class InvalidKernelError(EngineError):
    """Raised for convolution kernels the engine does not support."""


class NotScalarError(EngineError):
    """Raised when backward is called on a non-scalar tensor."""


class DetachedTensorError(EngineError):
    """Raised when a tensor was not produced through the given tape."""


class NonFiniteError(EngineError):
    """Raised when an operation would produce NaN or Inf."""


# Model


class ModelError(MetaNeRVError):
    """Base error for generator configuration and parameters."""


class DomainError(ModelError):
    """Raised when a frame time lies outside [0, 1]."""


class LengthMismatchError(ModelError):
    """Raised when a flat parameter vector does not fit the configuration."""


# Losses and metrics


class LossError(MetaNeRVError):
    """Base error for losses and metrics."""


class WindowTooLargeError(LossError):
    """Raised when the SSIM window does not fit the frame."""


class NonIntegerFactorError(LossError):
    """Raised when a frame cannot be pooled to the requested resolution."""


# Meta-learning


class MetaLearningError(MetaNeRVError):
    """Base error for meta-training and adaptation."""


class EmptyVideoError(MetaLearningError):
    """Raised when a video or dataset has no frames."""


class NonFiniteLossError(MetaLearningError):
    """Raised when an inner-loop loss is NaN or Inf."""


# Compression


class CompressionError(MetaNeRVError):
    """Base error for pruning, quantization and containers."""


class InvalidRatioError(CompressionError):
    """Raised for pruning ratios outside [0, 1)."""


class InvalidBitsError(CompressionError):
    """Raised for quantization bit widths outside [2, 16]."""


class ChecksumMismatchError(CompressionError):
    """Raised when a container payload fails its CRC-32 check."""


class BadMagicError(CompressionError):
    """Raised when a container does not start with the expected magic."""


class VersionUnsupportedError(CompressionError):
    """Raised for container versions this build cannot read."""


# Video IO


class VideoIOError(MetaNeRVError):
    """Base error for frame ingestion and persistence."""


class VideoNotFoundError(VideoIOError):
    """Raised when a video path does not exist."""


class BadHeaderError(VideoIOError):
    """Raised when a raw video file has a malformed header."""


class MixedResolutionsError(VideoIOError):
    """Raised when frames of one video differ in size."""
