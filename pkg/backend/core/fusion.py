"""
Multimodal Fusion / 多模态特征融合

Cross-modal attention between unit-norm image features I (l x m) and text
features W (l x n):

    C     = softmax(I^T W / sqrt(l))    row-wise over the n text tokens
    I_hat = W C^T                       (l x m)
    W_hat = I C                         (l x n)

A fixed, seeded linear projection reconciles encoder widths to the common l.
固定种子的线性投影把不同编码器宽度映射到公共维度 l。
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from loguru import logger

from core.errors import DimensionMismatch, ShapeError
from core.features import FeatureMatrix, as_matrix, normalize_columns, softmax


@dataclass(frozen=True)
class FusionOutput:
    """C (m x n), I_hat (l x m), W_hat (l x n)"""
    C: np.ndarray
    I_hat: np.ndarray
    W_hat: np.ndarray


def attention_map(I, W) -> np.ndarray:
    """
    Attention map C / 注意力图

    Each image column attends over text tokens; rows of C sum to 1.

    Raises:
        DimensionMismatch: I and W disagree on l
    """
    i_mat = as_matrix(I)
    w_mat = as_matrix(W)
    if i_mat.ndim != 2 or w_mat.ndim != 2:
        raise ShapeError("fusion inputs must be 2-D matrices")
    if i_mat.shape[0] != w_mat.shape[0]:
        raise DimensionMismatch(
            f"image features have l={i_mat.shape[0]}, text features have l={w_mat.shape[0]}"
        )
    l = i_mat.shape[0]
    return softmax(i_mat.T @ w_mat / np.sqrt(l), axis=1)


def regenerate(I, W, C) -> Tuple[np.ndarray, np.ndarray]:
    """
    Regenerate representations / 重建表示

    Returns:
        (I_hat, W_hat) = (W C^T, I C)
    """
    i_mat = as_matrix(I)
    w_mat = as_matrix(W)
    c_mat = np.asarray(C, dtype=np.float64)
    if i_mat.shape[0] != w_mat.shape[0]:
        raise DimensionMismatch(f"l mismatch: {i_mat.shape[0]} vs {w_mat.shape[0]}")
    if c_mat.shape != (i_mat.shape[1], w_mat.shape[1]):
        raise DimensionMismatch(
            f"C must be {i_mat.shape[1]}x{w_mat.shape[1]}, got {c_mat.shape[0]}x{c_mat.shape[1]}"
        )
    return w_mat @ c_mat.T, i_mat @ c_mat


def fuse(I, W) -> FusionOutput:
    """attention_map 与 regenerate 的组合"""
    C = attention_map(I, W)
    I_hat, W_hat = regenerate(I, W, C)
    return FusionOutput(C=C, I_hat=I_hat, W_hat=W_hat)


class ModalityProjector:
    """
    Modality Projector / 模态投影器

    Maps raw image features (image_dim x m) and text features (text_dim x n)
    to the common dimension l with fixed Gaussian matrices drawn from `seed`,
    then normalizes columns. When a width already equals l the identity is used.
    """

    def __init__(self, image_dim: int, text_dim: int, l: int, seed: int = 7):
        self.image_dim = image_dim
        self.text_dim = text_dim
        self.l = l
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.image_proj = self._make(rng, image_dim)
        self.text_proj = self._make(rng, text_dim)
        logger.debug(f"投影矩阵已初始化: image {image_dim}->{l}, text {text_dim}->{l}, seed={seed}")

    def _make(self, rng: np.random.Generator, width: int) -> np.ndarray:
        if width == self.l:
            return np.eye(self.l)
        return rng.standard_normal((self.l, width)) / np.sqrt(self.l)

    def project_image(self, raw) -> FeatureMatrix:
        data = as_matrix(raw)
        if data.shape[0] != self.image_dim:
            raise DimensionMismatch(f"image features have width {data.shape[0]}, expected {self.image_dim}")
        return normalize_columns(self.image_proj @ data)

    def project_text(self, raw) -> FeatureMatrix:
        data = as_matrix(raw)
        if data.shape[0] != self.text_dim:
            raise DimensionMismatch(f"text features have width {data.shape[0]}, expected {self.text_dim}")
        return normalize_columns(self.text_proj @ data)
