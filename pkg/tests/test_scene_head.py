"""
场景识别与多头注意力测试
"""

import numpy as np
import pytest
import torch

from core.errors import HeadDivisibility, ShapeError
from core.features import normalize_columns
from core.heads.base_head import DTYPE
from core.heads.scene_head import (
    SCENE_DEFAULTS,
    AttentionBundle,
    AttentionParams,
    SceneHead,
    match_tokens,
    multi_head_attention,
    predict_scene,
    scene_classify,
    scene_decoder,
    scene_encoder,
    scene_forward,
    scene_train,
)
from core.settings import SCENE15_VOCABULARY


def _softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _numpy_mha(Q, K, V, params, heads):
    """Q, K, V token-major numpy arrays"""
    Wq, Wk, Wv, Wo = (p.weight.detach().numpy() for p in (params.q, params.k, params.v, params.o))
    q, k, v = Q @ Wq.T, K @ Wk.T, V @ Wv.T
    d = Q.shape[-1]
    dh = d // heads
    outs = []
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        weights = _softmax(q[:, sl] @ k[:, sl].T / np.sqrt(dh))
        outs.append(weights @ v[:, sl])
    return np.concatenate(outs, axis=1) @ Wo.T


def _params(d, seed):
    torch.manual_seed(seed)
    return AttentionParams(d).to(DTYPE)


def test_attention_matches_numpy_oracle():
    rng = np.random.default_rng(0)
    shapes = [(8, 2, 3, 5), (6, 3, 4, 1), (4, 1, 2, 2)]
    for _ in range(47):
        heads = int(rng.integers(1, 5))
        shapes.append((heads * int(rng.integers(1, 4)), heads, int(rng.integers(1, 7)), int(rng.integers(1, 7))))
    for trial, (d, heads, n_q, n_k) in enumerate(shapes):
        params = _params(d, seed=trial)
        Q, K, V = (rng.standard_normal((n, d)) for n in (n_q, n_k, n_k))
        bundle = AttentionBundle(*(torch.as_tensor(x, dtype=DTYPE) for x in (Q, K, V)), heads=heads)
        with torch.no_grad():
            out = multi_head_attention(bundle, params).numpy()
        assert out.shape == (n_q, d)
        assert np.allclose(out, _numpy_mha(Q, K, V, params, heads), atol=1e-10)


def test_attention_weights_rows_sum_to_one():
    rng = np.random.default_rng(1)
    params = _params(8, seed=1)
    bundle = AttentionBundle.of(rng.standard_normal((8, 3)), rng.standard_normal((8, 5)),
                                rng.standard_normal((8, 5)), heads=4)
    with torch.no_grad():
        _, weights = multi_head_attention(bundle, params, return_weights=True)
    assert weights.shape == (4, 3, 5)
    assert torch.allclose(weights.sum(dim=-1), torch.ones(4, 3, dtype=DTYPE))


def test_single_key_returns_its_value_everywhere():
    rng = np.random.default_rng(2)
    params = AttentionParams.identity(4)
    value = rng.standard_normal((1, 4))
    bundle = AttentionBundle(
        Q=torch.as_tensor(rng.standard_normal((3, 4)), dtype=DTYPE),
        K=torch.as_tensor(rng.standard_normal((1, 4)), dtype=DTYPE),
        V=torch.as_tensor(value, dtype=DTYPE),
        heads=2,
    )
    with torch.no_grad():
        out = multi_head_attention(bundle, params).numpy()
    assert np.allclose(out, np.repeat(value, 3, axis=0))


def test_duplicate_keys_match_a_single_key():
    rng = np.random.default_rng(3)
    params = _params(6, seed=3)
    Q = torch.as_tensor(rng.standard_normal((2, 6)), dtype=DTYPE)
    K = torch.as_tensor(rng.standard_normal((1, 6)), dtype=DTYPE)
    V = torch.as_tensor(rng.standard_normal((1, 6)), dtype=DTYPE)
    with torch.no_grad():
        single = multi_head_attention(AttentionBundle(Q, K, V, heads=3), params)
        doubled = multi_head_attention(AttentionBundle(Q, K.repeat(2, 1), V.repeat(2, 1), heads=3), params)
    assert torch.allclose(single, doubled)


def test_attention_validates_shapes():
    params = _params(6, seed=4)
    q = torch.zeros(2, 6, dtype=DTYPE)
    with pytest.raises(HeadDivisibility):
        multi_head_attention(AttentionBundle(q, q, q, heads=4), params)
    with pytest.raises(ShapeError):
        multi_head_attention(AttentionBundle(q, torch.zeros(3, 6, dtype=DTYPE), q, heads=2), params)
    with pytest.raises(ShapeError):
        multi_head_attention(AttentionBundle(q, q, q, heads=2), _params(4, seed=4))


def test_match_tokens_pools_patches():
    values = torch.arange(8, dtype=DTYPE).reshape(4, 2)
    pooled = match_tokens(values, 2)
    assert torch.allclose(pooled, torch.tensor([[1.0, 2.0], [5.0, 6.0]], dtype=DTYPE))
    assert match_tokens(values, 4) is values


def test_head_requires_divisible_width():
    with pytest.raises(HeadDivisibility):
        SceneHead(l=10, heads=4)


def test_stages_have_expected_shapes():
    rng = np.random.default_rng(5)
    head = SceneHead(l=8, heads=2, ff_hidden=6, seed=0)
    I, W, W_hat = rng.standard_normal((8, 7)), rng.standard_normal((8, 4)), rng.standard_normal((8, 4))
    R = scene_decoder(I, W, W_hat, head)
    assert R.shape == (8, 4)
    E = scene_encoder(R, W, head)
    assert E.shape == (8, 4)
    probs = scene_classify(E, head)
    assert probs.shape == (len(SCENE15_VOCABULARY),)
    assert np.allclose(probs, scene_forward(I, W, W_hat, head))
    assert predict_scene(probs, head) in SCENE15_VOCABULARY


def test_encoder_output_is_layer_normalized():
    rng = np.random.default_rng(6)
    head = SceneHead(l=8, heads=2, ff_hidden=6, seed=1)
    E = scene_encoder(rng.standard_normal((8, 3)), rng.standard_normal((8, 3)), head)
    # LayerNorm 初始仿射为恒等
    assert np.allclose(E.mean(axis=0), 0.0, atol=1e-9)


def test_token_count_mismatch_raises():
    head = SceneHead(l=8, heads=2, ff_hidden=6)
    with pytest.raises(ShapeError):
        scene_forward(np.ones((8, 3)), np.ones((8, 2)), np.ones((8, 4)), head)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    head = SceneHead(l=4, labels=["a", "b", "c"], heads=2, ff_hidden=3, seed=2)
    inputs = tuple(
        torch.as_tensor(rng.standard_normal((1, k, 4)), dtype=DTYPE).requires_grad_()
        for k in (5, 3, 3)
    )
    assert torch.autograd.gradcheck(head.forward_batch, inputs)


def _toy_scenes(rng, labels, count=200, l=8):
    dataset = []
    for i in range(count):
        index = i % len(labels)
        W = rng.standard_normal((l, 3)) * 0.1
        W[index, :] += 3.0
        dataset.append((rng.standard_normal((l, 5)), W, rng.standard_normal((l, 3)), labels[index]))
    return dataset


def test_default_training_generalizes_to_the_test_split():
    rng = np.random.default_rng(8)
    labels = ["beach", "forest", "street"]
    report = scene_train(_toy_scenes(rng, labels), labels=labels, seed=0)
    assert report.head.labels == labels
    assert report.split_sizes == (160, 20, 20)
    assert len(report.epoch_losses) == SCENE_DEFAULTS["epochs"]
    assert report.test.count == 20
    assert report.test.accuracy >= 0.9


def test_training_accepts_feature_matrices():
    rng = np.random.default_rng(9)
    labels = ["beach", "forest"]
    dataset = [
        (normalize_columns(i), normalize_columns(w), normalize_columns(w_hat), label)
        for i, w, w_hat, label in _toy_scenes(rng, labels, count=10)
    ]
    report = scene_train(dataset, epochs=2, batch=4, lr=0.05, labels=labels, seed=0, heads=2, ff_hidden=4)
    assert report.head.l == 8
