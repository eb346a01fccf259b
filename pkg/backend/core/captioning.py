"""
Crude Content Generation / 初始描述生成

Draws k candidate captions from the captioner port and keeps the one the
similarity port scores highest against the image.
从描述端口生成 k 条候选，再用相似度端口挑出与图片最匹配的一条。
"""

from typing import List, Tuple

from loguru import logger

from core.errors import BackendFailure, EmptyCandidates
from core.ports.base_port import CaptionerPort, ImageRef, SimilarityPort
from models.schemas import CaptionCandidate

DEFAULT_K = 4


def generate_candidates(
    image: ImageRef,
    k: int,
    seed: int,
    port: CaptionerPort
) -> List[str]:
    """
    生成 k 条候选描述（通常 k = DEFAULT_K）

    Raises:
        BackendFailure: the port failed; the image path is attached
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    try:
        captions = port.generate(image, k, seed)
    except BackendFailure:
        raise
    except Exception as e:
        logger.error(f"❌ 描述生成失败: {image}: {e}")
        raise BackendFailure("captioner failed", image=str(image)) from e

    if len(captions) != k or not all(c and c.strip() for c in captions):
        raise BackendFailure(f"captioner returned {len(captions)} usable captions, expected {k}", image=str(image))
    return list(captions)


def score_candidates(image: ImageRef, candidates: List[str], port: SimilarityPort) -> List[CaptionCandidate]:
    """为每条候选打分"""
    scored = []
    for text in candidates:
        try:
            similarity = port.score(image, text)
        except BackendFailure:
            raise
        except Exception as e:
            raise BackendFailure("similarity scorer failed", image=str(image)) from e
        scored.append(CaptionCandidate(text=text, similarity=max(-1.0, min(1.0, similarity))))
    return scored


def select_best(
    image: ImageRef,
    candidates: List[str],
    port: SimilarityPort
) -> CaptionCandidate:
    """
    选出相似度最高的描述，平局取最靠前的

    Raises:
        EmptyCandidates: no candidates given
    """
    best, _ = rank(image, candidates, port)
    return best


def rank(
    image: ImageRef,
    candidates: List[str],
    port: SimilarityPort
) -> Tuple[CaptionCandidate, List[CaptionCandidate]]:
    """Best candidate plus every scored candidate in input order."""
    if not candidates:
        raise EmptyCandidates("no caption candidates to select from")
    scored = score_candidates(image, candidates, port)
    best = scored[0]
    for candidate in scored[1:]:
        if candidate.similarity > best.similarity:
            best = candidate
    logger.debug(f"🎯 选中描述: '{best.text}' (similarity={best.similarity:.4f})")
    return best, scored
