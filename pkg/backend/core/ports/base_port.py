"""
端口基类

Abstract model-backend interfaces. Every port has a stub (deterministic,
offline) and a live adapter; the pipeline only sees these base classes.
模型后端的抽象接口，每个端口都有离线确定性的 stub 与真实模型的 live 适配器。
"""

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from core.errors import BackendFailure
from models.schemas import DetectionBox

ImageRef = Union[str, Path]


def load_image(image: ImageRef) -> Image.Image:
    """读取图片并转换为 RGB，失败时抛出 BackendFailure"""
    try:
        with Image.open(image) as img:
            return img.convert("RGB")
    except (OSError, UnidentifiedImageError, ValueError) as e:
        raise BackendFailure("unreadable image", image=str(image)) from e


def image_identity(image: ImageRef) -> str:
    """Content hash of the image file; stable across paths and machines."""
    try:
        blob = Path(image).read_bytes()
    except OSError as e:
        raise BackendFailure("unreadable image", image=str(image)) from e
    return hashlib.sha256(blob).hexdigest()[:16]


def stable_unit(*parts: str) -> float:
    """Hash the parts to a reproducible float in [0, 1]."""
    digest = hashlib.sha256("\x00".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / float(2 ** 64 - 1)


class BasePort(ABC):
    """端口基类"""

    name: str = "base"
    # 可否被多个 worker 共享；否则批处理为每个 worker 单独创建实例
    concurrency_safe: bool = False


class CaptionerPort(BasePort):
    """图像描述生成端口"""

    @abstractmethod
    def generate(self, image: ImageRef, k: int, seed: int) -> List[str]:
        """
        生成 k 条候选描述

        Args:
            image: 图片路径
            k: 候选数量
            seed: 随机种子（相同种子输出相同）

        Returns:
            List[str]: 恰好 k 条描述（可能重复）
        """


class SimilarityPort(BasePort):
    """图文相似度端口，返回 [-1, 1]"""

    @abstractmethod
    def score(self, image: ImageRef, text: str) -> float:
        pass


class TextEncoderPort(BasePort):
    """文本编码端口"""

    dim: int = 768

    @abstractmethod
    def encode(self, sentence: str) -> np.ndarray:
        """句向量（长度 dim），对同一输入确定"""

    @abstractmethod
    def encode_tokens(self, tokens: List[str]) -> np.ndarray:
        """词级特征矩阵 (dim x n)"""


class ImageEncoderPort(BasePort):
    """图像编码端口"""

    dim: int = 384

    @abstractmethod
    def encode_patches(self, image: ImageRef) -> np.ndarray:
        """图块特征矩阵 (dim x m)"""


class TaggerPort(BasePort):
    """词性标注端口，输出 Universal POS 标签"""

    @abstractmethod
    def tag(self, tokens: List[str]) -> List[str]:
        pass


class DetectorPort(BasePort):
    """开放词汇检测端口"""

    @abstractmethod
    def detect(self, image: Image.Image, query: str) -> List[DetectionBox]:
        """返回按置信度降序排列、位于图像范围内的检测框"""


@dataclass(frozen=True)
class ChatOptions:
    temperature: float = 0.7
    seed: int = 0
    model: Optional[str] = None


class ChatPort(BasePort):
    """对话补全端口"""

    max_inflight: int = 1

    @abstractmethod
    async def complete(self, prompt: str, options: ChatOptions) -> str:
        """
        补全一次对话

        Args:
            prompt: 用户提示词
            options: 温度、种子、模型 ID

        Returns:
            str: 模型回复原文
        """
