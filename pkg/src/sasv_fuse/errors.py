"""
Exception hierarchy shared by every sasv_fuse module.

Each error knows which module raised it (``module``) and which process exit
code the command line maps it to (``exit_code``).
"""

from typing import Optional


class SasvFuseError(Exception):
    """Root of all sasv_fuse errors."""

    module = "sasv_fuse"
    exit_code = 2

    def __init__(self, message: str, module: Optional[str] = None):
        super().__init__(message)
        if module is not None:
            self.module = module


class UsageError(SasvFuseError):
    module = "cli"
    exit_code = 1


class DataError(SasvFuseError):
    """Invalid input data or configuration (exit code 2)."""

    exit_code = 2


class NumericalError(SasvFuseError):
    """Training produced non-finite values (exit code 3)."""

    module = "backends"
    exit_code = 3


# protocol


class ProtocolParseError(DataError):
    module = "protocol"

    def __init__(self, message: str, line_no: int):
        super().__init__(f"{message} at line {line_no}")
        self.line_no = line_no


class TrialFileError(DataError):
    module = "protocol"


# embstore


class StoreLoadError(DataError):
    module = "embstore"

    def __init__(self, message: str, record_index: Optional[int] = None):
        if record_index is not None:
            message = f"record {record_index}: {message}"
        super().__init__(message)
        self.record_index = record_index


class BadMagicError(StoreLoadError):
    pass


class TruncatedRecordError(StoreLoadError):
    pass


class DimMismatchError(StoreLoadError):
    pass


class NonFiniteValueError(StoreLoadError):
    pass


class EmbeddingLookupError(DataError):
    module = "embstore"


# features


class AssemblyError(DataError):
    module = "features"


class FeatureError(DataError):
    module = "features"


# backends


class TrainingError(DataError):
    module = "backends"


class KernelSizeError(TrainingError):
    pass


class ModelFormatError(DataError):
    module = "backends"


# metrics


class MetricError(DataError):
    module = "metrics"


# pipeline


class ConfigError(DataError):
    module = "config"


class ScoreFileError(DataError):
    module = "pipeline"


class CoverageError(DataError):
    module = "pipeline"


class LeakageError(DataError):
    module = "pipeline"


# vad


class WavLoadError(DataError):
    module = "vad"


class CodecError(DataError):
    module = "vad"


class SilentInputError(DataError):
    module = "vad"
