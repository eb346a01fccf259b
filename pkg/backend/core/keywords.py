"""
Keyword Extraction / 关键词提取

1. POS filtering keeps adjectives, nouns / proper nouns and verbs as candidates.
2. Importance of word w_k: h(w_k) = cos(enc(S), enc(S without w_k)).
   Smaller h means removing the word changes the sentence more.
3. The `count` candidates with the smallest h are the keywords.
"""

import re
from dataclasses import dataclass
from typing import List

from loguru import logger

from core.errors import DegenerateSentence, ShapeError
from core.features import cosine
from core.ports.base_port import TaggerPort, TextEncoderPort
from models.schemas import KeywordScore

# "names" 理解为名词与专有名词
CANDIDATE_TAGS = frozenset({"ADJ", "NOUN", "PROPN", "VERB"})

_WORD = re.compile(r"[A-Za-z0-9]+(?:'[A-Za-z]+)?")


@dataclass(frozen=True)
class TokenizedSentence:
    """分词及词性标注后的句子"""
    tokens: List[str]
    pos_tags: List[str]

    def __post_init__(self):
        if len(self.tokens) != len(self.pos_tags):
            raise ShapeError(f"{len(self.tokens)} tokens but {len(self.pos_tags)} tags")
        if not self.tokens:
            raise ShapeError("sentence has no tokens")

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def without(self, k: int) -> str:
        """Sentence with token k removed, remaining tokens joined by single spaces."""
        return " ".join(t for i, t in enumerate(self.tokens) if i != k)


def tokenize(text: str, tagger: TaggerPort) -> TokenizedSentence:
    """按词切分并标注词性"""
    tokens = _WORD.findall(text)
    if not tokens:
        raise ShapeError(f"no words in '{text}'")
    return TokenizedSentence(tokens=tokens, pos_tags=[t.upper() for t in tagger.tag(tokens)])


def filter_pos(sentence: TokenizedSentence) -> List[int]:
    """候选词下标（保持原顺序）"""
    return [i for i, tag in enumerate(sentence.pos_tags) if tag in CANDIDATE_TAGS]


def importance(sentence: TokenizedSentence, k: int, encoder: TextEncoderPort) -> KeywordScore:
    """
    h(w_k) / 词重要度

    Raises:
        DegenerateSentence: removing token k leaves nothing
        IndexError: k out of range
    """
    if not 0 <= k < len(sentence.tokens):
        raise IndexError(f"token index {k} out of range for {len(sentence.tokens)} tokens")
    masked = sentence.without(k)
    if not masked:
        raise DegenerateSentence(f"removing '{sentence.tokens[k]}' leaves an empty sentence")
    h = cosine(encoder.encode(sentence.text), encoder.encode(masked))
    return KeywordScore(token_index=k, word=sentence.tokens[k], h=h)


def score_candidates(sentence: TokenizedSentence, encoder: TextEncoderPort) -> List[KeywordScore]:
    """
    为全部候选词打分

    A sole-token sentence has nothing left once its word is removed; that word
    scores h = -1 (as important as a word can be).
    """
    scores = []
    for k in filter_pos(sentence):
        try:
            scores.append(importance(sentence, k, encoder))
        except DegenerateSentence:
            scores.append(KeywordScore(token_index=k, word=sentence.tokens[k], h=-1.0))
    return scores


def extract_keywords(sentence: TokenizedSentence, encoder: TextEncoderPort, count: int = 3) -> List[KeywordScore]:
    """
    Select keywords / 选取关键词

    Returns the `count` candidates with the smallest h in ascending-h order;
    equal scores keep sentence order.
    """
    scores = score_candidates(sentence, encoder)
    ranked = sorted(scores, key=lambda s: s.h)
    selected = ranked[:count]
    logger.debug(f"关键词: {[s.word for s in selected]} (候选 {len(scores)} 个)")
    return selected
