"""
Feature Core / 特征基础运算

Column normalization, cosine similarity and softmax in float64.
列归一化、余弦相似度与 softmax（64 位浮点）。
"""

from dataclasses import dataclass

import numpy as np

from core.errors import DimensionMismatch, ShapeError, ZeroColumn, ZeroVector

# 容差常量集中定义
NORM_EPS = 1e-12
UNIT_NORM_TOL = 1e-6
PROB_SUM_TOL = 1e-9


@dataclass(frozen=True)
class FeatureMatrix:
    """
    Feature Matrix / 特征矩阵

    l x k matrix whose columns are token / patch embeddings. Matrices built by
    `normalize_columns` have unit-norm columns.
    """
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeError(f"feature matrix must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ShapeError(f"feature matrix needs l > 0 and k > 0, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ShapeError("feature matrix has non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def l(self) -> int:
        return self.data.shape[0]

    @property
    def k(self) -> int:
        return self.data.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.data[:, j]

    def is_unit_norm(self, tol: float = UNIT_NORM_TOL) -> bool:
        norms = np.linalg.norm(self.data, axis=0)
        return bool(np.all(np.abs(norms - 1.0) <= tol))


def as_matrix(m) -> np.ndarray:
    """Accept a FeatureMatrix or anything array-like."""
    if isinstance(m, FeatureMatrix):
        return m.data
    return np.asarray(m, dtype=np.float64)


def normalize_columns(m) -> FeatureMatrix:
    """
    Scale each column to unit Euclidean norm / 每列归一化为单位向量

    Raises:
        ZeroColumn: a column norm is below 1e-12
    """
    data = as_matrix(m)
    if data.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {data.shape}")
    norms = np.linalg.norm(data, axis=0)
    bad = np.flatnonzero(norms < NORM_EPS)
    if bad.size:
        raise ZeroColumn(f"zero-norm column(s) at index {bad.tolist()}")
    return FeatureMatrix(data / norms)


def cosine(u, v) -> float:
    """
    Cosine similarity clamped to [-1, 1] / 余弦相似度

    Raises:
        ZeroVector: either vector has zero norm
        DimensionMismatch: lengths differ
    """
    a = np.asarray(u, dtype=np.float64).ravel()
    b = np.asarray(v, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector lengths differ: {a.shape[0]} vs {b.shape[0]}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < NORM_EPS or nb < NORM_EPS:
        raise ZeroVector("cosine of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def softmax(v, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max subtracted) along `axis`."""
    x = np.asarray(v, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)
