"""
特征基础运算测试
"""

import numpy as np
import pytest

from core.errors import DimensionMismatch, ShapeError, ZeroColumn, ZeroVector
from core.features import FeatureMatrix, cosine, normalize_columns, softmax


def test_normalize_columns_gives_unit_columns():
    rng = np.random.default_rng(1)
    m = normalize_columns(rng.standard_normal((8, 5)) * 7.0)
    assert m.is_unit_norm()
    assert np.allclose(np.linalg.norm(m.data, axis=0), 1.0)


def test_normalize_columns_keeps_direction():
    m = normalize_columns([[3.0, 0.0], [4.0, 2.0]])
    assert np.allclose(m.column(0), [0.6, 0.8])
    assert np.allclose(m.column(1), [0.0, 1.0])


def test_normalize_columns_rejects_zero_column():
    with pytest.raises(ZeroColumn):
        normalize_columns(np.array([[1.0, 0.0], [2.0, 0.0]]))


def test_feature_matrix_rejects_bad_shapes():
    with pytest.raises(ShapeError):
        FeatureMatrix(np.zeros(3))
    with pytest.raises(ShapeError):
        FeatureMatrix(np.zeros((3, 0)))
    with pytest.raises(ShapeError):
        FeatureMatrix(np.array([[np.nan]]))


def test_cosine_basic_values():
    assert cosine([1, 0], [1, 0]) == pytest.approx(1.0)
    assert cosine([1, 0], [0, 2]) == pytest.approx(0.0)
    assert cosine([1, 1], [-2, -2]) == pytest.approx(-1.0)


def test_cosine_is_clamped_and_symmetric():
    rng = np.random.default_rng(2)
    for _ in range(20):
        u, v = rng.standard_normal(6), rng.standard_normal(6)
        c = cosine(u, v)
        assert -1.0 <= c <= 1.0
        assert c == pytest.approx(cosine(v, u))
    assert cosine([1e-3, 1e-3], [5.0, 5.0]) <= 1.0


def test_cosine_errors():
    with pytest.raises(ZeroVector):
        cosine([0, 0], [1, 1])
    with pytest.raises(DimensionMismatch):
        cosine([1, 2, 3], [1, 2])


def test_softmax_sums_to_one_and_is_stable():
    p = softmax([1000.0, 1000.0, 999.0])
    assert p.sum() == pytest.approx(1.0)
    assert np.all(np.isfinite(p))
    assert p[0] == pytest.approx(p[1])


def test_softmax_rows():
    x = np.array([[0.0, 0.0], [0.0, np.log(3.0)]])
    p = softmax(x, axis=1)
    assert np.allclose(p[0], [0.5, 0.5])
    assert np.allclose(p[1], [0.25, 0.75])


def test_normalize_columns_is_idempotent():
    rng = np.random.default_rng(3)
    for _ in range(20):
        once = normalize_columns(rng.standard_normal((int(rng.integers(1, 10)), int(rng.integers(1, 6)))) * 5.0)
        twice = normalize_columns(once)
        assert np.allclose(twice.data, once.data, atol=1e-12)


def test_softmax_is_shift_invariant():
    rng = np.random.default_rng(4)
    for _ in range(20):
        v = rng.standard_normal(int(rng.integers(1, 10))) * 3.0
        shift = float(rng.uniform(-100.0, 100.0))
        assert np.allclose(softmax(v + shift), softmax(v), atol=1e-12)


def test_cosine_is_scale_invariant():
    rng = np.random.default_rng(5)
    for _ in range(20):
        u, v = rng.standard_normal(7), rng.standard_normal(7)
        a, b = rng.uniform(0.01, 100.0, size=2)
        assert cosine(a * u, b * v) == pytest.approx(cosine(u, v), abs=1e-12)
        assert cosine(u, u) == pytest.approx(1.0)
