"""
Live Ports / 真实模型端口

HuggingFace-backed adapters: ViT+GPT-2 captioner, CLIP similarity, BERT text
encoder, ViT patch encoder, BERT POS tagger and GroundingDINO detector.
transformers is imported lazily so the offline path never needs it.
transformers 延迟导入，离线路径无需安装。
"""

from typing import List

import numpy as np
import torch
from loguru import logger
from PIL import Image

from core.errors import BackendFailure
from core.ports.base_port import (
    CaptionerPort,
    DetectorPort,
    ImageEncoderPort,
    ImageRef,
    SimilarityPort,
    TaggerPort,
    TextEncoderPort,
    load_image,
)
from models.schemas import DetectionBox


class HFCaptioner(CaptionerPort):
    """ViT 编码 + GPT-2 解码的描述模型，Top-k 采样产生多样候选"""

    name = "hf-captioner"

    def __init__(self, model_id: str, top_k: int = 50, temperature: float = 1.0, device: str = "cpu"):
        from transformers import AutoTokenizer, ViTImageProcessor, VisionEncoderDecoderModel

        self.device = device
        self.top_k = top_k
        self.temperature = temperature
        self.processor = ViTImageProcessor.from_pretrained(model_id)
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = VisionEncoderDecoderModel.from_pretrained(model_id).to(device).eval()
        logger.info(f"✅ 描述模型已加载: {model_id}")

    def generate(self, image: ImageRef, k: int, seed: int) -> List[str]:
        img = load_image(image)
        try:
            torch.manual_seed(seed)
            pixel_values = self.processor(images=img, return_tensors="pt").pixel_values.to(self.device)
            with torch.no_grad():
                output_ids = self.model.generate(
                    pixel_values,
                    do_sample=True,
                    top_k=self.top_k,
                    temperature=self.temperature,
                    max_length=32,
                    num_return_sequences=k,
                )
        except RuntimeError as e:
            raise BackendFailure("captioner failed", image=str(image)) from e
        captions = self.tokenizer.batch_decode(output_ids, skip_special_tokens=True)
        return [c.strip() for c in captions]


class CLIPSimilarity(SimilarityPort):
    """CLIP 归一化嵌入的余弦相似度"""

    name = "clip-similarity"

    def __init__(self, model_id: str, device: str = "cpu"):
        from transformers import CLIPModel, CLIPProcessor

        self.device = device
        self.processor = CLIPProcessor.from_pretrained(model_id)
        self.model = CLIPModel.from_pretrained(model_id).to(device).eval()

    def score(self, image: ImageRef, text: str) -> float:
        img = load_image(image)
        inputs = self.processor(text=[text], images=img, return_tensors="pt", padding=True, truncation=True).to(self.device)
        with torch.no_grad():
            outputs = self.model(**inputs)
        image_embeds = outputs.image_embeds / outputs.image_embeds.norm(dim=-1, keepdim=True)
        text_embeds = outputs.text_embeds / outputs.text_embeds.norm(dim=-1, keepdim=True)
        return float((image_embeds @ text_embeds.T).clamp(-1.0, 1.0).item())


class BertEncoder(TextEncoderPort):
    """
    BERT 编码器

    Sentence vector: attention-masked mean of the last hidden layer.
    Word features: mean of each word's sub-word vectors.
    """

    name = "bert-encoder"

    def __init__(self, model_id: str, device: str = "cpu"):
        from transformers import AutoModel, AutoTokenizer

        self.device = device
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id).to(device).eval()
        self.dim = self.model.config.hidden_size

    def encode(self, sentence: str) -> np.ndarray:
        inputs = self.tokenizer(sentence, return_tensors="pt", truncation=True).to(self.device)
        with torch.no_grad():
            hidden = self.model(**inputs).last_hidden_state[0]
        mask = inputs["attention_mask"][0].unsqueeze(-1).to(hidden.dtype)
        pooled = (hidden * mask).sum(dim=0) / mask.sum()
        return pooled.double().cpu().numpy()

    def encode_tokens(self, tokens: List[str]) -> np.ndarray:
        inputs = self.tokenizer(tokens, is_split_into_words=True, return_tensors="pt", truncation=True)
        word_ids = inputs.word_ids(0)
        with torch.no_grad():
            hidden = self.model(**inputs.to(self.device)).last_hidden_state[0].double().cpu().numpy()
        columns = []
        for index in range(len(tokens)):
            rows = [pos for pos, wid in enumerate(word_ids) if wid == index]
            if not rows:
                raise BackendFailure("token lost during sub-word truncation", token=tokens[index])
            columns.append(hidden[rows].mean(axis=0))
        return np.stack(columns, axis=1)


class ViTPatchEncoder(ImageEncoderPort):
    """ViT 图块特征（去掉 CLS）"""

    name = "vit-encoder"

    def __init__(self, model_id: str, device: str = "cpu"):
        from transformers import ViTImageProcessor, ViTModel

        self.device = device
        self.processor = ViTImageProcessor.from_pretrained(model_id)
        self.model = ViTModel.from_pretrained(model_id).to(device).eval()
        self.dim = self.model.config.hidden_size

    def encode_patches(self, image: ImageRef) -> np.ndarray:
        img = load_image(image)
        inputs = self.processor(images=img, return_tensors="pt").to(self.device)
        with torch.no_grad():
            hidden = self.model(**inputs).last_hidden_state[0, 1:]
        return hidden.double().cpu().numpy().T


class HFTagger(TaggerPort):
    """BERT 词性标注（取每个词首个子词的标签）"""

    name = "hf-tagger"

    def __init__(self, model_id: str, device: str = "cpu"):
        from transformers import AutoModelForTokenClassification, AutoTokenizer

        self.device = device
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForTokenClassification.from_pretrained(model_id).to(device).eval()

    def tag(self, tokens: List[str]) -> List[str]:
        inputs = self.tokenizer(tokens, is_split_into_words=True, return_tensors="pt", truncation=True)
        word_ids = inputs.word_ids(0)
        with torch.no_grad():
            logits = self.model(**inputs.to(self.device)).logits[0]
        predicted = logits.argmax(dim=-1).tolist()
        labels = self.model.config.id2label
        tags = ["X"] * len(tokens)
        seen = set()
        for pos, wid in enumerate(word_ids):
            if wid is not None and wid not in seen:
                seen.add(wid)
                tags[wid] = labels[predicted[pos]].upper()
        return tags


class GroundingDINODetector(DetectorPort):
    """GroundingDINO 开放词汇检测"""

    name = "grounding-dino"

    def __init__(self, model_id: str, box_threshold: float = 0.35, text_threshold: float = 0.25, device: str = "cpu"):
        from transformers import AutoModelForZeroShotObjectDetection, AutoProcessor

        self.device = device
        self.box_threshold = box_threshold
        self.text_threshold = text_threshold
        self.processor = AutoProcessor.from_pretrained(model_id)
        self.model = AutoModelForZeroShotObjectDetection.from_pretrained(model_id).to(device).eval()

    def detect(self, image: Image.Image, query: str) -> List[DetectionBox]:
        # GroundingDINO 要求查询小写并以句点结尾
        text = query.lower().strip().rstrip(".") + "."
        inputs = self.processor(images=image, text=text, return_tensors="pt").to(self.device)
        with torch.no_grad():
            outputs = self.model(**inputs)
        results = self.processor.post_process_grounded_object_detection(
            outputs,
            inputs.input_ids,
            box_threshold=self.box_threshold,
            text_threshold=self.text_threshold,
            target_sizes=[image.size[::-1]],
        )[0]

        width, height = image.size
        boxes = []
        for i in range(results["boxes"].shape[0]):
            x0, y0, x1, y1 = (float(v) for v in results["boxes"][i].tolist())
            x0, y0 = max(0.0, x0), max(0.0, y0)
            x1, y1 = min(float(width), x1), min(float(height), y1)
            if x0 >= x1 or y0 >= y1:
                continue
            boxes.append(DetectionBox(
                x0=x0, y0=y0, x1=x1, y1=y1,
                confidence=min(1.0, max(0.0, float(results["scores"][i].item()))),
                label=query,
            ))
        return sorted(boxes, key=lambda b: b.confidence, reverse=True)
