"""
Errors / 异常定义

All pipeline failures derive from MPWLError so the CLI can report them uniformly.
所有流水线异常都继承自 MPWLError，便于 CLI 统一处理。
"""

from typing import Any, Iterable, Optional


class MPWLError(Exception):
    """流水线异常基类"""


class ConfigError(MPWLError):
    """配置无效或引用的文件不存在"""


# 数值 / 形状错误 ------------------------------------------------------------

class ZeroColumn(MPWLError, ValueError):
    """A matrix column has (numerically) zero norm."""


class ZeroVector(MPWLError, ValueError):
    """A vector has (numerically) zero norm."""


class DimensionMismatch(MPWLError, ValueError):
    """Operands disagree on a shared dimension."""


class ShapeError(MPWLError, ValueError):
    """Input shape does not fit the model parameters."""


class HeadDivisibility(ShapeError):
    """Model dimension is not divisible by the number of attention heads."""


class EmptySequence(MPWLError, ValueError):
    """LSTM input sequence is empty."""


# 后端 / 端口 ---------------------------------------------------------------

class BackendFailure(MPWLError):
    """
    A model backend (port) failed / 模型后端调用失败

    `context` carries the identity of the input (image path, prompt hash, ...).
    """

    def __init__(self, message: str, **context: Any):
        self.context = context
        details = ", ".join(f"{k}={v}" for k, v in context.items())
        super().__init__(f"{message} ({details})" if details else message)


# 文本处理 -------------------------------------------------------------------

class EmptyCandidates(MPWLError, ValueError):
    """No caption candidates to choose from."""


class DegenerateSentence(MPWLError, ValueError):
    """Removing the token leaves an empty sentence."""


class MissingPlaceholder(MPWLError, ValueError):
    """Template is missing a required placeholder."""

    def __init__(self, names: Iterable[str]):
        self.names = sorted(names)
        super().__init__(f"template is missing placeholders: {', '.join(self.names)}")


class UnknownPlaceholder(MPWLError, ValueError):
    """Template uses a placeholder this renderer does not know, or repeats one."""

    def __init__(self, names: Iterable[str]):
        self.names = sorted(names)
        super().__init__(f"unknown or repeated placeholders: {', '.join(self.names)}")


class EmptyTweet(MPWLError, ValueError):
    """Tweet text (or prompt) is empty."""


class MalformedResponse(MPWLError):
    """Judge response could not be parsed into a full ScoreCard."""

    def __init__(self, message: str, missing: Iterable[str] = (), raw: str = ""):
        self.missing = list(missing)
        self.raw = raw
        if self.missing:
            message = f"{message}; missing aspects: {', '.join(self.missing)}"
        super().__init__(message)


# 训练 ----------------------------------------------------------------------

class EmptyDataset(MPWLError, ValueError):
    """Training dataset has no samples."""


class SingleClassDataset(MPWLError, ValueError):
    """Training dataset contains fewer than two classes."""


class CheckpointError(MPWLError):
    """Checkpoint file is missing, truncated or inconsistent."""


# 图像 ----------------------------------------------------------------------

class TooManyImages(MPWLError, ValueError):
    """Grid composition accepts at most nine images."""


# 批处理 / 缓存 ---------------------------------------------------------------

class ManifestUnreadable(MPWLError):
    """Batch manifest cannot be read."""


class CacheCorruption(MPWLError):
    """Cached record failed its checksum."""


class StageError(MPWLError):
    """
    A pipeline stage failed / 流水线某阶段失败

    Keeps the stage name and the partial RunRecord collected so far.
    """

    def __init__(self, stage: str, cause: BaseException, partial_record: Optional[Any] = None):
        self.stage = stage
        self.cause = cause
        self.partial_record = partial_record
        super().__init__(f"stage '{stage}' failed: {cause}")
