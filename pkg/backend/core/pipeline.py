"""
流水线编排器
图片 → 描述 → 关键词 → 融合 → {话题, 情感, 场景} → 提示词 → 推文 → 评分 → 拼图

Every stage writes its output into the RunRecord as it finishes; the first
failing stage raises StageError carrying its name and the partial record,
which is also written to `<output_dir>/records/`.
"""

import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from core.cache_manager import CacheManager, make_key
from core.captioning import generate_candidates, rank
from core.errors import CheckpointError, StageError
from core.fusion import FusionOutput, ModalityProjector, fuse
from core.heads.checkpoint import load_head
from core.heads.scene_head import SceneHead, predict_scene, scene_forward
from core.heads.sentiment_lstm import SentimentHead, predict_sentiment, sentiment_forward
from core.heads.topic_head import TopicHead, predict_topic, topic_forward
from core.image_composer import compose_from_paths
from core.keywords import extract_keywords, tokenize
from core.llm_gateway import LLMGateway
from core.ports.base_port import ImageRef, image_identity
from core.ports.registry import PortSet, build_port_set
from core.prompt_engine import PromptTemplate, load_templates, render_eval_prompt, render_prompt
from core.settings import PipelineConfig
from models.schemas import PromptBundle, RunRecord, TweetPost

STAGES = (
    "caption", "keywords", "fusion", "topic", "sentiment", "scene",
    "render", "generate", "evaluate", "compose",
)


@dataclass
class EncodedPair:
    """一对图文的投影特征与融合结果"""
    tokens: List[str]
    I: np.ndarray
    W: np.ndarray
    fusion: FusionOutput


def encode_pair(
    image: ImageRef,
    text: str,
    ports: PortSet,
    projector: ModalityProjector
) -> EncodedPair:
    """
    Encode, project and fuse one image-text pair / 编码、投影并融合

    The heads are trained and run on exactly this representation.
    """
    sentence = tokenize(text, ports.tagger)
    I = projector.project_image(ports.image_encoder.encode_patches(image)).data
    W = projector.project_text(ports.encoder.encode_tokens(sentence.tokens)).data
    return EncodedPair(tokens=sentence.tokens, I=I, W=W, fusion=fuse(I, W))


def make_projector(config: PipelineConfig) -> ModalityProjector:
    return ModalityProjector(
        image_dim=config.fusion.image_dim,
        text_dim=config.fusion.text_dim,
        l=config.fusion.l,
        seed=config.fusion.projection_seed,
    )


class HeadBank:
    """
    三个任务头，按需加载

    A head without a configured checkpoint is seeded from the config seed and
    logged as untrained; a configured checkpoint that cannot be loaded raises.
    """

    def __init__(self, config: PipelineConfig):
        self.config = config
        self._topic: Optional[TopicHead] = None
        self._sentiment: Optional[SentimentHead] = None
        self._scene: Optional[SceneHead] = None

    def _load(self, kind: str, path: Optional[str]):
        if path is None:
            return None
        if not Path(path).exists():
            raise CheckpointError(f"{kind} checkpoint not found: {path}")
        head = load_head(path, expected_kind=kind)
        if head.l != self.config.fusion.l:
            raise CheckpointError(f"{kind} checkpoint has l={head.l}, fusion.l is {self.config.fusion.l}")
        return head

    @property
    def topic(self) -> TopicHead:
        if self._topic is None:
            head = self._load("topic", self.config.checkpoints.topic)
            if head is None:
                logger.warning("⚠️ 未配置 topic 权重，使用按种子初始化的任务头")
                head = TopicHead(
                    l=self.config.fusion.l,
                    ff_hidden=self.config.heads.topic_ff_hidden,
                    pooled_size=self.config.heads.topic_pooled_size,
                    seed=self.config.seed,
                )
            self._topic = head
        return self._topic

    @property
    def sentiment(self) -> SentimentHead:
        if self._sentiment is None:
            head = self._load("sentiment", self.config.checkpoints.sentiment)
            if head is None:
                logger.warning("⚠️ 未配置 sentiment 权重，使用按种子初始化的任务头")
                head = SentimentHead(
                    l=self.config.fusion.l,
                    hidden=self.config.heads.sentiment_hidden,
                    seed=self.config.seed,
                )
            self._sentiment = head
        return self._sentiment

    @property
    def scene(self) -> SceneHead:
        if self._scene is None:
            head = self._load("scene", self.config.checkpoints.scene)
            if head is None:
                logger.warning("⚠️ 未配置 scene 权重，使用按种子初始化的任务头")
                head = SceneHead(
                    l=self.config.fusion.l,
                    labels=self.config.scene_vocabulary(),
                    heads=self.config.heads.scene_heads,
                    ff_hidden=self.config.heads.scene_ff_hidden,
                    seed=self.config.seed,
                )
            elif self.config.scene.vocabulary_file and head.labels != self.config.scene_vocabulary():
                logger.warning("⚠️ scene 权重中的词表与配置不一致，使用权重中的词表")
            self._scene = head
        return self._scene


class TweetPipeline:
    """推文生成流水线"""

    def __init__(
        self,
        config: PipelineConfig,
        ports: Optional[PortSet] = None,
        cache: Optional[CacheManager] = None,
        heads: Optional[HeadBank] = None,
        templates: Optional[Tuple[PromptTemplate, PromptTemplate]] = None
    ):
        self.config = config
        self.ports = ports or build_port_set(config)
        self.cache = cache
        self.heads = heads or HeadBank(config)
        self.projector = make_projector(config)
        self.generate_template, self.evaluate_template = templates or load_templates(
            config.templates.generate, config.templates.evaluate
        )
        self.gateway = LLMGateway(
            self.ports.chat,
            evaluate_template=self.evaluate_template,
            temperature_generate=config.llm.temperature_generate,
            temperature_evaluate=config.llm.temperature_evaluate,
            retries=config.llm.retries,
            seed=config.seed,
            model=config.llm.model if config.ports.llm == "live" else None,
            cache=cache,
            max_inflight=config.llm.max_inflight,
        )
        self.records_dir = Path(config.output_dir) / "records"
        self.grids_dir = Path(config.output_dir) / "grids"

    @contextmanager
    def _stage(self, name: str, record: RunRecord) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            logger.error(f"❌ 阶段 {name} 失败 ({record.image_id}): {e}")
            record.failed_stage = name
            record.error = f"{type(e).__name__}: {e}"
            raise StageError(name, e, record) from e
        finally:
            record.timings[name] = round(time.perf_counter() - start, 6)

    async def _captions(self, image: ImageRef, image_id: str) -> List[str]:
        cfg = self.config
        captioner = self.ports.captioner

        def call() -> List[str]:
            return generate_candidates(image, cfg.captioning.k_candidates, cfg.seed, captioner)

        if self.cache is None:
            return call()
        key = make_key(
            "caption", image=image_id, k=cfg.captioning.k_candidates, seed=cfg.seed, port=captioner.name
        )

        async def compute() -> List[str]:
            return call()

        return await self.cache.get_or_compute(key, compute)

    def save_record(self, record: RunRecord) -> Path:
        self.records_dir.mkdir(parents=True, exist_ok=True)
        path = self.records_dir / f"{record.image_id}.json"
        path.write_text(record.canonical_json(), encoding="utf-8")
        return path

    async def run(
        self,
        image: ImageRef,
        images: Optional[Sequence[ImageRef]] = None,
        record_id: Optional[str] = None
    ) -> Tuple[TweetPost, RunRecord]:
        """
        运行完整流水线

        Args:
            image: image that drives text generation
            images: every image for the grid (defaults to [image])
            record_id: record name; defaults to the image file stem

        Raises:
            StageError: first failing stage, with the partial RunRecord
        """
        record = self._new_record(image, images, record_id)
        try:
            return await self._run(image, record)
        except StageError as e:
            self.save_record(e.partial_record or record)
            raise

    async def prepare(self, image: ImageRef, record_id: Optional[str] = None) -> RunRecord:
        """
        只运行到提示词渲染（caption → render）

        Raises:
            StageError: first failing stage
        """
        record = self._new_record(image, None, record_id)
        await self._prepare(image, record)
        return record

    def _new_record(
        self,
        image: ImageRef,
        images: Optional[Sequence[ImageRef]],
        record_id: Optional[str]
    ) -> RunRecord:
        return RunRecord(
            image_id=record_id or Path(str(image)).stem,
            image_paths=[str(p) for p in (images or [image])],
            config_fingerprint=self.config.fingerprint(),
            ablated=sorted(self.config.prompt.ablate),
        )

    async def _prepare(self, image: ImageRef, record: RunRecord) -> PromptBundle:
        cfg = self.config
        logger.info(f"🔄 开始处理: {record.image_id}")

        with self._stage("caption", record):
            content_id = image_identity(image)
            candidates = await self._captions(image, content_id)
            best, scored = rank(image, candidates, self.ports.similarity)
            record.candidates = scored
            record.selected_caption = best.text

        with self._stage("keywords", record):
            sentence = tokenize(best.text, self.ports.tagger)
            keyword_scores = extract_keywords(sentence, self.ports.encoder, cfg.keywords.count)
            record.keyword_scores = keyword_scores

        with self._stage("fusion", record):
            pair = encode_pair(image, best.text, self.ports, self.projector)
            W_hat = pair.fusion.W_hat

        with self._stage("topic", record):
            topic_probs = topic_forward(W_hat, self.heads.topic)
            record.topic_probs = topic_probs.tolist()

        with self._stage("sentiment", record):
            sentiment_probs = sentiment_forward(W_hat, self.heads.sentiment)
            record.sentiment_probs = sentiment_probs.tolist()

        with self._stage("scene", record):
            scene_head = self.heads.scene
            scene_probs = scene_forward(pair.I, pair.W, W_hat, scene_head)
            record.scene_probs = scene_probs.tolist()

        with self._stage("render", record):
            bundle = PromptBundle(
                topic=predict_topic(topic_probs),
                sentiment=predict_sentiment(sentiment_probs),
                keywords=[k.word for k in keyword_scores],
                scene=predict_scene(scene_probs, scene_head),
                caption=best.text,
            )
            record.bundle = bundle
            record.rendered_prompt = render_prompt(
                bundle, self.generate_template, cfg.prompt.max_len, cfg.prompt.ablate
            )
        return bundle

    async def _run(self, image: ImageRef, record: RunRecord) -> Tuple[TweetPost, RunRecord]:
        cfg = self.config
        bundle = await self._prepare(image, record)

        with self._stage("generate", record):
            text = await self.gateway.generate(record.rendered_prompt, cfg.prompt.max_len)
            record.tweet_text = text

        tweet = TweetPost(text=text, prompt_bundle=bundle)

        if cfg.llm.evaluate:
            with self._stage("evaluate", record):
                record.eval_prompt = render_eval_prompt(text, bundle.caption, self.evaluate_template)
                tweet.scorecard = await self.gateway.evaluate(tweet)
                record.scorecard = tweet.scorecard

        with self._stage("compose", record):
            grid = compose_from_paths(
                record.image_paths,
                self.ports.detector,
                self.grids_dir / f"{record.image_id}.png",
                cell=cfg.composer.cell,
                background=cfg.composer.background,
                query=cfg.composer.query,
                strategy=cfg.composer.strategy,
            )
            tweet.image = str(grid)
            record.grid_image = str(grid)

        self.save_record(record)
        if self.cache is not None:
            key = make_key("run", image=record.image_id, paths=record.image_paths, config=record.config_fingerprint)
            await self.cache.put(key, record.model_dump(mode="json", exclude={"timings"}))
        logger.info(f"✅ 完成: {record.image_id} → '{text}' ({len(text)} 字符)")
        return tweet, record


async def run_pipeline(
    image: ImageRef,
    config: PipelineConfig,
    ports: Optional[PortSet] = None,
    cache: Optional[CacheManager] = None,
    images: Optional[Sequence[ImageRef]] = None,
    record_id: Optional[str] = None
) -> Tuple[TweetPost, RunRecord]:
    """
    Run the full image → tweet pipeline for one image / 单张图片的完整流水线

    Raises:
        StageError: names the first failing stage; the partial record is saved
    """
    pipeline = TweetPipeline(config, ports=ports, cache=cache)
    return await pipeline.run(image, images=images, record_id=record_id)
