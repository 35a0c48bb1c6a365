"""Structured public type exports for backend consumers."""

from metanerv.types.config import (
    AdaptConfig,
    CompressionConfig,
    ConfigOverrides,
    DatasetConfig,
    DenoiseConfig,
    RunConfig,
)
from metanerv.types.errors import (
    BadHeaderError,
    BadMagicError,
    ChecksumMismatchError,
    CompressionError,
    ConfigurationError,
    DetachedTensorError,
    DomainError,
    EmptyVideoError,
    EngineError,
    InvalidBitsError,
    InvalidKernelError,
    InvalidRatioError,
    InvalidShapeError,
    LengthMismatchError,
    LossError,
    MetaLearningError,
    MetaNeRVError,
    MixedResolutionsError,
    ModelError,
    NonFiniteError,
    NonFiniteLossError,
    NonIntegerFactorError,
    NotScalarError,
    ShapeMismatchError,
    StorageError,
    VersionUnsupportedError,
    VideoIOError,
    VideoNotFoundError,
    WindowTooLargeError,
)
from metanerv.types.events import (
    AdaptStepEvent,
    ErrorEvent,
    OperationTimingEvent,
    OuterStepEvent,
    ReportWrittenEvent,
)
from metanerv.types.models import (
    AdamState,
    AdaptResult,
    CompressedModel,
    GradMode,
    InnerResult,
    LossConfig,
    MetaConfig,
    MetaState,
    ModelConfig,
    ModelParams,
    MultiResOutput,
    QuantizedTensor,
    SyntheticFamily,
    SyntheticSpec,
    TimeNorm,
    TrainLogRow,
    Video,
    VideoFormat,
)

__all__ = [
    "AdaptConfig",
    "CompressionConfig",
    "ConfigOverrides",
    "DatasetConfig",
    "DenoiseConfig",
    "RunConfig",
    "AdamState",
    "AdaptResult",
    "CompressedModel",
    "GradMode",
    "InnerResult",
    "LossConfig",
    "MetaConfig",
    "MetaState",
    "ModelConfig",
    "ModelParams",
    "MultiResOutput",
    "QuantizedTensor",
    "SyntheticFamily",
    "SyntheticSpec",
    "TimeNorm",
    "TrainLogRow",
    "Video",
    "VideoFormat",
    "AdaptStepEvent",
    "ErrorEvent",
    "OperationTimingEvent",
    "OuterStepEvent",
    "ReportWrittenEvent",
    "MetaNeRVError",
    "ConfigurationError",
    "StorageError",
    "EngineError",
    "ShapeMismatchError",
    "InvalidShapeError",
    "InvalidKernelError",
    "NotScalarError",
    "DetachedTensorError",
    "NonFiniteError",
    "ModelError",
    "DomainError",
    "LengthMismatchError",
    "LossError",
    "WindowTooLargeError",
    "NonIntegerFactorError",
    "MetaLearningError",
    "EmptyVideoError",
    "NonFiniteLossError",
    "CompressionError",
    "InvalidRatioError",
    "InvalidBitsError",
    "ChecksumMismatchError",
    "BadMagicError",
    "VersionUnsupportedError",
    "VideoIOError",
    "VideoNotFoundError",
    "BadHeaderError",
    "MixedResolutionsError",
]
