"""
关键词提取测试
"""

import numpy as np
import pytest

from core.errors import DegenerateSentence, ShapeError
from core.keywords import (
    TokenizedSentence,
    extract_keywords,
    filter_pos,
    importance,
    score_candidates,
    tokenize,
)
from core.ports.stub_ports import ConstantEncoder, LexiconTagger, RandomProjectionEncoder, StubCaptioner

SENTENCES = list(StubCaptioner.CAPTIONS) + [
    "the quick brown fox jumps over the lazy dog",
    "a red car parked near the old station",
    "people walk along a snowy road",
    "a happy dog catches a frisbee",
    "a bright kitchen with wooden chairs",
    "a tall man holds a blue kite",
    "young students watch a movie",
    "an empty street at night",
]


@pytest.fixture
def encoder():
    return RandomProjectionEncoder(dim=64, seed=3)


@pytest.fixture
def tagger():
    return LexiconTagger()


def _oracle(sentence: TokenizedSentence, encoder, count):
    full = encoder.encode(" ".join(sentence.tokens))
    scores = []
    for k in filter_pos(sentence):
        masked = encoder.encode(" ".join(t for i, t in enumerate(sentence.tokens) if i != k))
        h = float(full @ masked / (np.linalg.norm(full) * np.linalg.norm(masked)))
        scores.append((h, k))
    scores.sort(key=lambda item: item[0])
    return [k for _, k in scores[:count]], dict((k, h) for h, k in scores)


def test_tagger_spots_open_classes(tagger):
    sentence = tokenize("the quick brown fox jumps over the lazy dog", tagger)
    tags = dict(zip(sentence.tokens, sentence.pos_tags))
    assert tags["the"] == "DET"
    assert tags["quick"] == "ADJ"
    assert tags["fox"] == "NOUN"
    assert tags["jumps"] == "VERB"
    assert tags["over"] == "ADP"
    assert [sentence.tokens[i] for i in filter_pos(sentence)] == ["quick", "brown", "fox", "jumps", "lazy", "dog"]


def test_matches_numpy_oracle_over_many_sentences(encoder, tagger):
    assert len(SENTENCES) >= 20
    for text in SENTENCES:
        sentence = tokenize(text, tagger)
        expected, h_values = _oracle(sentence, encoder, 3)
        selected = extract_keywords(sentence, encoder, 3)
        assert [s.token_index for s in selected] == expected, text
        for s in selected:
            assert s.h == pytest.approx(h_values[s.token_index], abs=1e-9)


def test_keywords_are_sorted_by_importance(encoder, tagger):
    selected = extract_keywords(tokenize("a child flying a kite on a sunny beach", tagger), encoder, 5)
    hs = [s.h for s in selected]
    assert hs == sorted(hs)
    assert all(-1.0 <= h <= 1.0 for h in hs)


def test_count_larger_than_candidates_returns_all(encoder, tagger):
    sentence = tokenize("a happy dog", tagger)
    assert len(extract_keywords(sentence, encoder, 10)) == len(filter_pos(sentence))


def test_no_candidates_returns_empty(encoder, tagger):
    assert extract_keywords(tokenize("the and of", tagger), encoder, 3) == []


def test_constant_encoder_ties_keep_sentence_order(tagger):
    sentence = tokenize("happy dog runs fast", tagger)
    selected = extract_keywords(sentence, ConstantEncoder([1.0, 2.0, 3.0]), 2)
    assert [s.h for s in selected] == pytest.approx([1.0, 1.0])
    assert [s.token_index for s in selected] == filter_pos(sentence)[:2]


def test_sole_token_is_maximally_important(encoder, tagger):
    scores = score_candidates(tokenize("dog", tagger), encoder)
    assert len(scores) == 1
    assert scores[0].h == -1.0
    with pytest.raises(DegenerateSentence):
        importance(tokenize("dog", tagger), 0, encoder)


def test_importance_rejects_bad_index(encoder, tagger):
    with pytest.raises(IndexError):
        importance(tokenize("a dog", tagger), 5, encoder)


def test_tokenize_rejects_empty_text(tagger):
    with pytest.raises(ShapeError):
        tokenize("   ...   ", tagger)
