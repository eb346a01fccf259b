"""
Port Registry / 端口注册表

Builds the set of ports a pipeline worker uses from configuration.
根据配置为流水线 worker 构建端口集合。
"""

from dataclasses import dataclass, fields
from typing import Optional

from loguru import logger

from core.errors import ConfigError
from core.ports.base_port import (
    CaptionerPort,
    ChatPort,
    DetectorPort,
    ImageEncoderPort,
    SimilarityPort,
    TaggerPort,
    TextEncoderPort,
)
from core.ports.stub_ports import (
    LexiconTagger,
    RandomProjectionEncoder,
    StubCaptioner,
    StubChatPort,
    StubDetector,
    StubImageEncoder,
    StubSimilarity,
)
from core.settings import PipelineConfig, Secrets
from models.schemas import DetectionBox


@dataclass
class PortSet:
    """一个 worker 持有的全部端口"""
    captioner: CaptionerPort
    similarity: SimilarityPort
    encoder: TextEncoderPort
    image_encoder: ImageEncoderPort
    tagger: TaggerPort
    detector: DetectorPort
    chat: ChatPort

    def concurrency_safe(self) -> bool:
        return all(getattr(self, f.name).concurrency_safe for f in fields(self))


def build_port_set(config: PipelineConfig, secrets: Optional[Secrets] = None) -> PortSet:
    """
    Build ports for one worker / 为一个 worker 构建端口

    Raises:
        ConfigError: a live port is selected but cannot be created
    """
    ports = config.ports
    live = config.live_models
    seed = config.seed

    try:
        if ports.captioner == "live":
            from core.ports.hf_ports import HFCaptioner
            captioner = HFCaptioner(live.captioner, live.captioner_top_k, live.captioner_temperature, live.device)
        else:
            captioner = StubCaptioner()

        if ports.similarity == "live":
            from core.ports.hf_ports import CLIPSimilarity
            similarity = CLIPSimilarity(live.similarity, live.device)
        else:
            similarity = StubSimilarity()

        if ports.encoder == "live":
            from core.ports.hf_ports import BertEncoder
            encoder = BertEncoder(live.encoder, live.device)
        else:
            encoder = RandomProjectionEncoder(dim=config.fusion.text_dim, seed=seed)

        if ports.image_encoder == "live":
            from core.ports.hf_ports import ViTPatchEncoder
            image_encoder = ViTPatchEncoder(live.image_encoder, live.device)
        else:
            image_encoder = StubImageEncoder(dim=config.fusion.image_dim, seed=seed)

        if ports.tagger == "live":
            from core.ports.hf_ports import HFTagger
            tagger = HFTagger(live.tagger, live.device)
        else:
            tagger = LexiconTagger()

        if ports.detector == "live":
            from core.ports.hf_ports import GroundingDINODetector
            detector = GroundingDINODetector(live.detector, live.box_threshold, live.text_threshold, live.device)
        else:
            detector = StubDetector([DetectionBox(**box) for box in config.composer.stub_boxes])

        if ports.llm == "live":
            from core.ports.chat_port import HttpChatPort
            secrets = secrets or Secrets()
            chat = HttpChatPort(
                api_key=secrets.llm_api_key or "",
                endpoint=config.llm.endpoint,
                model=config.llm.model,
                max_inflight=config.llm.max_inflight,
                timeout=config.llm.timeout,
            )
        else:
            chat = StubChatPort()
    except ImportError as e:
        raise ConfigError(f"live port selected but its dependency is missing: {e}") from e

    for name, port, width in (
        ("encoder", encoder, config.fusion.text_dim),
        ("image_encoder", image_encoder, config.fusion.image_dim),
    ):
        if port.dim != width:
            raise ConfigError(f"{name} emits width {port.dim} but fusion expects {width}")

    logger.info(f"✓ 端口已就绪: {', '.join(f'{k}={v}' for k, v in ports.model_dump().items())}")
    return PortSet(
        captioner=captioner,
        similarity=similarity,
        encoder=encoder,
        image_encoder=image_encoder,
        tagger=tagger,
        detector=detector,
        chat=chat,
    )
