"""
Batch Runner / 批处理运行器

Runs the pipeline over a manifest of images and summarizes the results.
按清单批量运行流水线并汇总结果。

Features / 功能:
- JSONL manifest, one record per line / JSONL 清单，每行一条记录
- Worker fan-out with per-worker ports / 多 worker 并发，各自持有端口
- Per-record failure isolation / 单条失败不影响其他记录
- Summary with mean judged scores / 汇总平均评分
"""

import asyncio
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from loguru import logger
from pydantic import ValidationError

from core.cache_manager import CacheManager
from core.errors import ManifestUnreadable, StageError
from core.llm_gateway import gate_chat_ports
from core.pipeline import HeadBank, TweetPipeline
from core.ports.registry import PortSet, build_port_set
from core.prompt_engine import load_templates
from core.settings import PipelineConfig
from models.schemas import ASPECTS, BatchSummary, FailureEntry, ManifestRecord, RunRecord


@dataclass
class ManifestLine:
    """清单中的一行：下标 + 解析结果或错误"""
    index: int
    record: Optional[ManifestRecord] = None
    error: Optional[str] = None
    record_id: str = ""

    def __post_init__(self):
        if not self.record_id:
            self.record_id = f"line-{self.index + 1}"


def _unique_id(record: ManifestRecord, index: int, seen: Set[str]) -> Optional[str]:
    """
    Record id that no earlier line uses / 生成唯一的记录 ID

    An explicit `id` is kept as is and None is returned when it repeats; a
    file-stem id that repeats gets the line number appended.
    """
    if record.id:
        return None if record.id in seen else record.id
    candidate = Path(record.images[0]).stem
    if candidate in seen:
        candidate = f"{candidate}-line{index + 1}"
    while candidate in seen:
        candidate = f"{candidate}_"
    return candidate


def read_manifest(path) -> List[ManifestLine]:
    """
    读取批处理清单（UTF-8，每行一个 JSON 对象，空行忽略）

    Every parsed line gets a record id unique within the manifest; a line that
    repeats an explicit `id` is kept as a failure.

    Raises:
        ManifestUnreadable: the file is missing or not UTF-8
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ManifestUnreadable(f"cannot read manifest {path}: {e}") from e

    lines: List[ManifestLine] = []
    seen: Set[str] = set()
    for index, raw in enumerate(text.splitlines()):
        if not raw.strip():
            continue
        try:
            record = ManifestRecord(**json.loads(raw))
        except (json.JSONDecodeError, TypeError, ValidationError) as e:
            logger.warning(f"⚠️ 清单第 {index + 1} 行无效: {e}")
            lines.append(ManifestLine(index=index, error=str(e)))
            continue

        record_id = _unique_id(record, index, seen)
        if record_id is None:
            logger.warning(f"⚠️ 清单第 {index + 1} 行的 id '{record.id}' 重复")
            lines.append(ManifestLine(index=index, error=f"duplicate record id '{record.id}'"))
            continue
        seen.add(record_id)
        lines.append(ManifestLine(index=index, record=record, record_id=record_id))
    return lines


def summarize(
    records: Sequence[RunRecord],
    failures: Sequence[FailureEntry],
    ablated: Sequence[str] = ()
) -> BatchSummary:
    """
    汇总批处理结果

    Mean scores are keyed by the judged aspect display names.
    """
    succeeded = [r for r in records if r.failed_stage is None]
    scored = [r for r in succeeded if r.scorecard is not None]
    lengths = [len(r.tweet_text) for r in succeeded if r.tweet_text is not None]

    mean_scores: Dict[str, float] = {}
    if scored:
        for field, display in ASPECTS:
            mean_scores[display] = float(np.mean([getattr(r.scorecard, field) for r in scored]))

    return BatchSummary(
        count=len(succeeded) + len(failures),
        succeeded=len(succeeded),
        failed=len(failures),
        scored=len(scored),
        ablated=sorted(ablated),
        mean_scores=mean_scores,
        mean_tweet_length=float(np.mean(lengths)) if lengths else None,
        max_tweet_length=max(lengths) if lengths else None,
        failures=list(failures),
        record_hashes={r.image_id: r.content_hash() for r in succeeded},
    )


class BatchRunner:
    """批处理运行器"""

    def __init__(
        self,
        config: PipelineConfig,
        cache: Optional[CacheManager] = None,
        port_factory: Optional[Callable[[], PortSet]] = None,
        workers: Optional[int] = None
    ):
        self.config = config
        self.cache = cache
        self.port_factory = port_factory or (lambda: build_port_set(config))
        self.workers = max(1, workers or config.batch.workers)
        self.heads = HeadBank(config)
        self.templates = load_templates(config.templates.generate, config.templates.evaluate)
        self.output_dir = Path(config.output_dir)

    def _pipelines(self, count: int) -> List[TweetPipeline]:
        first = self.port_factory()
        port_sets = [first]
        if not first.concurrency_safe():
            port_sets += [self.port_factory() for _ in range(count - 1)]
        else:
            port_sets += [first] * (count - 1)
        # 全部 worker 共用一个 LLM 并发上限
        gated = gate_chat_ports([p.chat for p in port_sets], self.cache, self.config.llm.max_inflight)
        return [
            TweetPipeline(
                self.config,
                ports=replace(ports, chat=chat),
                cache=self.cache,
                heads=self.heads,
                templates=self.templates,
            )
            for ports, chat in zip(port_sets, gated)
        ]

    async def run(
        self,
        manifest,
        progress_callback: Optional[Callable[[int, int], None]] = None
    ) -> Tuple[BatchSummary, List[RunRecord]]:
        """
        运行整个清单

        Args:
            manifest: path of the JSONL manifest
            progress_callback: called with (done, total) after every record

        Returns:
            (summary, records in manifest order)

        Raises:
            ManifestUnreadable: manifest cannot be read
        """
        lines = read_manifest(manifest)
        total = len(lines)
        logger.info(f"🔄 开始批处理: {total} 条记录, workers={self.workers}")

        results: Dict[int, RunRecord] = {}
        failures: Dict[int, FailureEntry] = {}
        for line in lines:
            if line.record is None:
                failures[line.index] = FailureEntry(record_id=line.record_id, stage="manifest", error=line.error or "")

        queue: asyncio.Queue = asyncio.Queue()
        for line in lines:
            if line.record is not None:
                queue.put_nowait(line)

        done = len(failures)
        if progress_callback and done:
            progress_callback(done, total)

        async def worker(pipeline: TweetPipeline) -> None:
            nonlocal done
            while True:
                try:
                    line = queue.get_nowait()
                except asyncio.QueueEmpty:
                    return
                record = line.record
                try:
                    _, run_record = await pipeline.run(record.images[0], images=record.images, record_id=line.record_id)
                    results[line.index] = run_record
                except StageError as e:
                    failures[line.index] = FailureEntry(record_id=line.record_id, stage=e.stage, error=str(e.cause))
                done += 1
                if progress_callback:
                    progress_callback(done, total)

        if queue.qsize():
            pipelines = self._pipelines(min(self.workers, queue.qsize()))
            await asyncio.gather(*(worker(p) for p in pipelines))

        records = [results[i] for i in sorted(results)]
        summary = summarize(records, [failures[i] for i in sorted(failures)], self.config.prompt.ablate)
        self._save_summary(summary)
        logger.info(
            f"✅ 批处理完成: {summary.succeeded}/{summary.count} 成功, {summary.failed} 失败"
        )
        return summary, records

    def _save_summary(self, summary: BatchSummary) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / "summary.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(summary.model_dump(mode="json"), f, indent=2, ensure_ascii=False)
        return path


async def run_batch(
    manifest,
    config: PipelineConfig,
    cache: Optional[CacheManager] = None,
    port_factory: Optional[Callable[[], PortSet]] = None,
    progress_callback: Optional[Callable[[int, int], None]] = None
) -> BatchSummary:
    """
    批量运行并返回汇总

    Raises:
        ManifestUnreadable: manifest cannot be read
    """
    runner = BatchRunner(config, cache=cache, port_factory=port_factory)
    summary, _ = await runner.run(manifest, progress_callback)
    return summary
