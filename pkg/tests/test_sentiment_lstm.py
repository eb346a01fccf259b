"""
LSTM 情感头测试
"""

import numpy as np
import pytest
import torch

from core.errors import EmptySequence, ShapeError
from core.features import normalize_columns
from core.heads.base_head import DTYPE
from core.heads.sentiment_lstm import (
    SENTIMENT_DEFAULTS,
    LstmParams,
    LstmState,
    SentimentHead,
    lstm_cell,
    lstm_forward,
    lstm_step,
    predict_sentiment,
    sentiment_forward,
    sentiment_train,
)
from models.schemas import SentimentLabel


def _random_params(hidden, input_size, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    w = lambda: torch.as_tensor(rng.standard_normal((hidden, hidden + input_size)) * scale, dtype=DTYPE)
    b = lambda: torch.as_tensor(rng.standard_normal(hidden) * scale, dtype=DTYPE)
    return LstmParams(W_f=w(), W_i=w(), W_o=w(), W_c=w(), b_f=b(), b_i=b(), b_o=b(), b_c=b())


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _numpy_lstm(sequence, p):
    hidden = p.hidden
    c, h = np.zeros(hidden), np.zeros(hidden)
    W = {name: getattr(p, name).numpy() for name in ("W_f", "W_i", "W_o", "W_c", "b_f", "b_i", "b_o", "b_c")}
    for z in sequence:
        hz = np.concatenate([h, z])
        f = _sigmoid(W["W_f"] @ hz + W["b_f"])
        i = _sigmoid(W["W_i"] @ hz + W["b_i"])
        o = _sigmoid(W["W_o"] @ hz + W["b_o"])
        c_tilde = np.tanh(W["W_c"] @ hz + W["b_c"])
        c = f * c + i * c_tilde
        h = o * np.tanh(c)
    return c, h


def test_zero_params_halve_the_cell():
    params = LstmParams.zeros(hidden=3, input_size=2)
    state = LstmState(c=torch.full((3,), 2.0, dtype=DTYPE), h=torch.zeros(3, dtype=DTYPE))
    step = lstm_step(torch.ones(2, dtype=DTYPE), state, params)
    assert torch.allclose(step.f, torch.full((3,), 0.5, dtype=DTYPE))
    assert torch.allclose(step.c_tilde, torch.zeros(3, dtype=DTYPE))
    assert torch.allclose(step.state.c, torch.ones(3, dtype=DTYPE))
    assert torch.allclose(step.state.h, torch.full((3,), 0.5 * np.tanh(1.0), dtype=DTYPE))


def test_zero_state_and_zero_params_stay_at_zero():
    params = LstmParams.zeros(hidden=4, input_size=3)
    final = lstm_forward([np.ones(3)] * 5, params)
    assert torch.allclose(final.c, torch.zeros(4, dtype=DTYPE))
    assert torch.allclose(final.h, torch.zeros(4, dtype=DTYPE))


def test_saturated_gates_write_the_candidate():
    params = LstmParams.zeros(hidden=2, input_size=1)
    params.b_f = torch.full((2,), -50.0, dtype=DTYPE)
    params.b_i = torch.full((2,), 50.0, dtype=DTYPE)
    params.b_o = torch.full((2,), 50.0, dtype=DTYPE)
    params.b_c = torch.full((2,), 50.0, dtype=DTYPE)
    state = LstmState(c=torch.full((2,), 7.0, dtype=DTYPE), h=torch.zeros(2, dtype=DTYPE))
    out = lstm_cell([0.0], state, params)
    assert torch.allclose(out.c, torch.ones(2, dtype=DTYPE))
    assert torch.allclose(out.h, torch.full((2,), np.tanh(1.0), dtype=DTYPE))


def test_forward_matches_numpy_oracle():
    rng = np.random.default_rng(5)
    for hidden, input_size, steps in ((3, 2, 1), (5, 4, 6), (2, 7, 3)):
        params = _random_params(hidden, input_size, seed=hidden)
        sequence = [rng.standard_normal(input_size) for _ in range(steps)]
        final = lstm_forward(sequence, params)
        c, h = _numpy_lstm(sequence, params)
        assert np.allclose(final.c.numpy(), c, atol=1e-12)
        assert np.allclose(final.h.numpy(), h, atol=1e-12)


def test_batched_forward_matches_single():
    rng = np.random.default_rng(6)
    params = _random_params(4, 3, seed=1)
    batch = torch.as_tensor(rng.standard_normal((5, 6, 3)), dtype=DTYPE)
    batched = lstm_forward(batch, params)
    for b in range(5):
        single = lstm_forward(batch[b], params)
        assert torch.allclose(batched.h[b], single.h)


def test_forward_composes_over_split_sequences():
    rng = np.random.default_rng(12)
    for trial in range(20):
        params = _random_params(4, 3, seed=trial)
        a = [rng.standard_normal(3) for _ in range(int(rng.integers(1, 5)))]
        b = [rng.standard_normal(3) for _ in range(int(rng.integers(1, 5)))]
        whole = lstm_forward(a + b, params)
        resumed = lstm_forward(b, params, state=lstm_forward(a, params))
        assert torch.allclose(whole.c, resumed.c, atol=1e-12)
        assert torch.allclose(whole.h, resumed.h, atol=1e-12)


def test_state_stays_bounded():
    rng = np.random.default_rng(7)
    params = _random_params(4, 3, seed=2, scale=3.0)
    state = LstmState.zeros(4)
    for _ in range(50):
        step = lstm_step(rng.standard_normal(3) * 10, state, params)
        for gate in (step.f, step.i, step.o):
            assert torch.all((gate >= 0) & (gate <= 1))
        assert torch.all(step.c_tilde.abs() <= 1)
        state = step.state
        assert torch.all(state.h.abs() <= 1)


def test_empty_sequence_raises():
    params = LstmParams.zeros(hidden=2, input_size=2)
    with pytest.raises(EmptySequence):
        lstm_forward([], params)
    with pytest.raises(EmptySequence):
        lstm_forward(torch.zeros(0, 2, dtype=DTYPE), params)


def test_shape_mismatch_raises():
    params = LstmParams.zeros(hidden=2, input_size=3)
    with pytest.raises(ShapeError):
        lstm_cell(np.ones(4), LstmState.zeros(2), params)
    with pytest.raises(ShapeError):
        lstm_cell(np.ones(3), LstmState.zeros(5), params)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(8)
    tensors = [
        torch.as_tensor(rng.standard_normal(shape) * 0.5, dtype=DTYPE).requires_grad_()
        for shape in [(3, 5)] * 4 + [(3,)] * 4
    ]
    sequence = torch.as_tensor(rng.standard_normal((4, 2)), dtype=DTYPE)

    def run(*values):
        params = LstmParams(*values)
        return lstm_forward(sequence, params).h

    assert torch.autograd.gradcheck(run, tuple(tensors))


def test_head_probabilities_and_prediction():
    rng = np.random.default_rng(9)
    head = SentimentHead(l=8, hidden=5, seed=1)
    probs = sentiment_forward(rng.standard_normal((8, 4)), head)
    assert probs.shape == (3,)
    assert probs.sum() == pytest.approx(1.0)
    assert predict_sentiment([0.1, 0.1, 0.8]) == SentimentLabel.NEUTRAL
    assert predict_sentiment([0.4, 0.4, 0.2]) == SentimentLabel.POSITIVE


def test_head_init_is_small_and_seeded():
    a, b = SentimentHead(l=6, hidden=4, seed=3), SentimentHead(l=6, hidden=4, seed=3)
    for (name, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(pa, pb), name
        assert pa.abs().max() <= 0.1


def test_head_rejects_wrong_width():
    head = SentimentHead(l=8, hidden=4)
    with pytest.raises(ShapeError):
        sentiment_forward(np.ones((7, 3)), head)


def _toy_sentiment(rng, count=200, l=8, n=3):
    labels = list(SentimentLabel)
    dataset = []
    for i in range(count):
        index = i % len(labels)
        w = rng.standard_normal((l, n)) * 0.1
        w[index, :] += 3.0
        dataset.append((w, labels[index]))
    return dataset


def test_default_training_generalizes_to_the_test_split():
    rng = np.random.default_rng(10)
    report = sentiment_train(_toy_sentiment(rng), seed=0)
    assert report.split_sizes == (160, 20, 20)
    assert len(report.epoch_losses) == SENTIMENT_DEFAULTS["epochs"]
    assert report.epoch_losses[-1] < report.epoch_losses[0]
    assert report.test.count == 20
    assert report.test.accuracy >= 0.9


def test_training_accepts_feature_matrices():
    rng = np.random.default_rng(11)
    dataset = [(normalize_columns(w), label) for w, label in _toy_sentiment(rng, count=12)]
    report = sentiment_train(dataset, epochs=2, batch=4, lr=0.05, seed=0, hidden=4)
    assert report.head.l == 8


def test_label_order_matches_head_outputs():
    assert [label.value for label in SentimentLabel] == ["positive", "negative", "neutral"]
    for i, label in enumerate(SentimentLabel):
        assert predict_sentiment(np.eye(3)[i]) == label
