#!/usr/bin/env python3
"""
MPWL Photo-to-Tweet Generator - CLI Tool
命令行工具
"""

import asyncio
import functools
import sys
from pathlib import Path

import click
from dotenv import load_dotenv
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

sys.path.insert(0, str(Path(__file__).parent / "backend"))

from core.errors import MPWLError  # noqa: E402
from core.settings import load_config, setup_logging  # noqa: E402

console = Console()


def handle_errors(func):
    """流水线异常统一输出为红色提示并以非零状态退出"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except MPWLError as e:
            console.print(f"[red]❌ {type(e).__name__}: {e}[/red]")
            sys.exit(1)
    return wrapper


def _config(ctx: click.Context, **sections):
    """合并全局参数与命令参数得到配置"""
    opts = ctx.obj
    overrides = {"seed": opts["seed"], "output_dir": opts["out"]}
    if opts["backend"]:
        overrides["ports"] = {name: opts["backend"] for name in (
            "captioner", "similarity", "encoder", "image_encoder", "tagger", "detector", "llm"
        )}
    for section, values in sections.items():
        overrides[section] = {k: v for k, v in values.items() if v is not None}
    config = load_config(opts["config"], overrides)
    setup_logging(config.logging)
    config.check_paths()
    return config


def _score_table(card, title: str = "📊 评分") -> Table:
    from models.schemas import ASPECTS

    table = Table(title=title, show_header=True, header_style="bold cyan")
    table.add_column("维度", style="cyan")
    table.add_column("分数", style="green", justify="right")
    for field, display in ASPECTS:
        table.add_row(display, f"{getattr(card, field):.2f}/10")
    return table


@click.group()
@click.version_option(version="1.0.0")
@click.option("--config", "config_path", default=None, help="配置文件 / YAML config file")
@click.option("--seed", type=int, default=None, help="随机种子 / Seed for stubs and heads")
@click.option("--backend", type=click.Choice(["stub", "live"]), default=None, help="所有端口使用 stub 或 live")
@click.option("--out", default=None, help="输出目录 / Output directory")
@click.pass_context
def cli(ctx, config_path, seed, backend, out):
    """🐦 MPWL photo-to-tweet generator - 图片到推文生成系统"""
    load_dotenv()
    ctx.ensure_object(dict)
    ctx.obj.update(config=config_path, seed=seed, backend=backend, out=out)


@cli.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--k", "k_candidates", type=int, default=None, help="候选描述数量 / Number of candidates")
@click.pass_context
@handle_errors
def caption(ctx, image, k_candidates):
    """
    Generate and rank caption candidates / 生成并排序候选描述

    Example / 示例:

    python cli.py caption ./photo.jpg --k 4
    """
    from core.captioning import generate_candidates, rank
    from core.ports.registry import build_port_set

    config = _config(ctx, captioning={"k_candidates": k_candidates})
    ports = build_port_set(config)
    candidates = generate_candidates(image, config.captioning.k_candidates, config.seed, ports.captioner)
    best, scored = rank(image, candidates, ports.similarity)

    table = Table(title="📝 候选描述", show_header=True, header_style="bold cyan")
    table.add_column("#", style="yellow")
    table.add_column("描述", style="cyan")
    table.add_column("相似度", style="green", justify="right")
    for i, candidate in enumerate(scored, start=1):
        marker = " 🎯" if candidate is best else ""
        table.add_row(str(i), candidate.text + marker, f"{candidate.similarity:.4f}")
    console.print(table)


@cli.command()
@click.argument("text")
@click.option("--count", type=int, default=None, help="关键词数量 / Number of keywords")
@click.pass_context
@handle_errors
def keywords(ctx, text, count):
    """
    Extract keywords from a sentence / 提取关键词
    """
    from core.keywords import extract_keywords, score_candidates, tokenize
    from core.ports.registry import build_port_set

    config = _config(ctx, keywords={"count": count})
    ports = build_port_set(config)
    sentence = tokenize(text, ports.tagger)
    selected = {s.token_index for s in extract_keywords(sentence, ports.encoder, config.keywords.count)}

    table = Table(title="🔑 关键词重要度 h（越小越重要）", show_header=True, header_style="bold cyan")
    table.add_column("词", style="cyan")
    table.add_column("词性", style="magenta")
    table.add_column("h", style="green", justify="right")
    table.add_column("选中", style="yellow")
    for score in score_candidates(sentence, ports.encoder):
        table.add_row(
            score.word, sentence.pos_tags[score.token_index], f"{score.h:.6f}",
            "✅" if score.token_index in selected else ""
        )
    console.print(table)


@cli.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--ablate", multiple=True, type=click.Choice(["topic", "sentiment", "scene", "keywords"]),
              help="禁用的子任务 / Subtasks rendered as blanks")
@click.option("--max-len", type=int, default=None, help="推文最大长度 / Character limit")
@click.pass_context
@handle_errors
def prompt(ctx, image, ablate, max_len):
    """
    Render the generation prompt for an image / 渲染图片的生成提示词
    """
    from core.pipeline import TweetPipeline

    config = _config(ctx, prompt={"ablate": list(ablate) or None, "max_len": max_len})
    record = asyncio.run(TweetPipeline(config).prepare(image))
    console.print(f"[yellow]话题:[/yellow] {record.bundle.topic.value}")
    console.print(f"[yellow]情感:[/yellow] {record.bundle.sentiment.value}")
    console.print(f"[yellow]关键词:[/yellow] {', '.join(record.bundle.keywords)}")
    console.print(f"[yellow]场景:[/yellow] {record.bundle.scene}")
    console.print()
    # 原样输出，便于管道使用
    click.echo(record.rendered_prompt, nl=False)


@cli.command()
@click.argument("images", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ablate", multiple=True, type=click.Choice(["topic", "sentiment", "scene", "keywords"]),
              help="禁用的子任务 / Subtasks rendered as blanks")
@click.option("--max-len", type=int, default=None, help="推文最大长度 / Character limit")
@click.option("--evaluate/--no-evaluate", default=None, help="是否评分 / Judge the tweet")
@click.pass_context
@handle_errors
def generate(ctx, images, ablate, max_len, evaluate):
    """
    Generate a tweet from one to nine images / 由 1-9 张图片生成推文

    The first image drives the text; all images go into the grid.

    Example / 示例:

    python cli.py --backend stub generate ./photo.jpg
    """
    from core.cache_manager import get_cache_manager
    from core.pipeline import run_pipeline

    config = _config(
        ctx,
        prompt={"ablate": list(ablate) or None, "max_len": max_len},
        llm={"evaluate": evaluate},
    )
    cache = get_cache_manager(config.cache.directory)

    with console.status("[cyan]生成中..."):
        tweet, record = asyncio.run(run_pipeline(images[0], config, cache=cache, images=list(images)))

    console.print(f"[green]📝 描述:[/green] {record.selected_caption}")
    console.print(f"[bold green]🐦 推文:[/bold green] {tweet.text} [dim]({len(tweet.text)} 字符)[/dim]")
    console.print(f"[green]🖼️  拼图:[/green] {tweet.image}")
    if tweet.scorecard:
        console.print(_score_table(tweet.scorecard))


@cli.command()
@click.option("--tweet", "tweet_text", required=True, help="推文文本 / Tweet text")
@click.option("--caption", "caption_text", required=True, help="图片描述 / Image caption")
@click.pass_context
@handle_errors
def evaluate(ctx, tweet_text, caption_text):
    """
    Judge a tweet against an image caption / 对推文评分
    """
    from core.cache_manager import get_cache_manager
    from core.llm_gateway import LLMGateway
    from core.ports.registry import build_port_set
    from core.prompt_engine import load_templates
    from models.schemas import PromptBundle, SentimentLabel, TopicLabel, TweetPost

    config = _config(ctx)
    ports = build_port_set(config)
    _, evaluate_template = load_templates(config.templates.generate, config.templates.evaluate)
    gateway = LLMGateway(
        ports.chat,
        evaluate_template=evaluate_template,
        temperature_evaluate=config.llm.temperature_evaluate,
        retries=config.llm.retries,
        seed=config.seed,
        cache=get_cache_manager(config.cache.directory),
        max_inflight=config.llm.max_inflight,
    )
    # 评分只用到描述
    bundle = PromptBundle(
        topic=TopicLabel.SPORTS, sentiment=SentimentLabel.NEUTRAL, scene="", caption=caption_text
    )
    card = asyncio.run(gateway.evaluate(TweetPost(text=tweet_text, prompt_bundle=bundle)))
    console.print(_score_table(card))


@cli.command()
@click.argument("images", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--cell", type=int, default=None, help="格子边长 / Cell size in pixels")
@click.option("--strategy", type=click.Choice(["top", "union"]), default=None, help="裁剪中心策略")
@click.option("--output", "-o", default="grid.png", help="输出 PNG / Output PNG")
@click.pass_context
@handle_errors
def compose(ctx, images, cell, strategy, output):
    """
    Crop around people and compose a grid / 人物居中裁剪并拼图

    Example / 示例:

    python cli.py compose a.jpg b.jpg c.jpg --cell 512 -o grid.png
    """
    from core.image_composer import compose_from_paths
    from core.ports.registry import build_port_set

    config = _config(ctx, composer={"cell": cell, "strategy": strategy})
    ports = build_port_set(config)
    path = compose_from_paths(
        images,
        ports.detector,
        output,
        cell=config.composer.cell,
        background=config.composer.background,
        query=config.composer.query,
        strategy=config.composer.strategy,
    )
    console.print(f"[bold green]✅ 拼图完成:[/bold green] {path}")


@cli.command()
@click.argument("kind", type=click.Choice(["topic", "sentiment", "scene"]))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="训练数据 JSONL / Training data")
@click.option("--output", "-o", default=None, help="权重输出路径 / Checkpoint path")
@click.option("--epochs", type=int, default=None)
@click.option("--batch", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.pass_context
@handle_errors
def train(ctx, kind, data_path, output, epochs, batch, lr):
    """
    Train a task head / 训练任务头

    Each data line is {"image": path, "text": caption, "label": name}.

    Example / 示例:

    python cli.py train topic --data ./topics.jsonl -o ./checkpoints/topic.ckpt
    """
    from services.trainer import train_from_file

    config = _config(ctx)
    hyper = getattr(config.training, kind)
    for name, value in (("epochs", epochs), ("batch", batch), ("lr", lr)):
        if value is not None:
            setattr(hyper, name, value)
    output = output or str(Path(config.output_dir) / "checkpoints" / f"{kind}.ckpt")

    console.print(f"[bold cyan]🧠 训练 {kind} 任务头[/bold cyan]")
    console.print(f"[yellow]超参数:[/yellow] epochs={hyper.epochs}, batch={hyper.batch}, lr={hyper.lr}")
    report = train_from_file(kind, data_path, config, output)

    table = Table(title="📈 训练结果", show_header=True, header_style="bold cyan")
    table.add_column("指标", style="cyan")
    table.add_column("值", style="green")
    table.add_row("划分 (train/val/test)", "/".join(str(n) for n in report.split_sizes))
    table.add_row("最佳 epoch", str(report.best_epoch + 1))
    table.add_row("验证准确率", f"{report.val_accuracy[report.best_epoch]:.3f}")
    if report.test and report.test.count:
        table.add_row("测试准确率", f"{report.test.accuracy:.3f}")
        table.add_row("测试宏 F1", f"{report.test.macro_f1:.3f}")
    console.print(table)
    console.print(f"[bold green]✅ 权重已保存:[/bold green] {output}")


@cli.command()
@click.argument("manifest", type=click.Path(dir_okay=False))
@click.option("--workers", type=int, default=None, help="并发 worker 数 / Worker count")
@click.option("--ablate", multiple=True, type=click.Choice(["topic", "sentiment", "scene", "keywords"]),
              help="禁用的子任务 / Subtasks rendered as blanks")
@click.pass_context
@handle_errors
def batch(ctx, manifest, workers, ablate):
    """
    Run the pipeline over a JSONL manifest / 批量生成

    Each manifest line is {"id": ..., "image": path} or {"id": ..., "images": [paths]}.
    """
    from core.cache_manager import get_cache_manager
    from services.batch_runner import BatchRunner

    config = _config(ctx, batch={"workers": workers}, prompt={"ablate": list(ablate) or None})
    runner = BatchRunner(config, cache=get_cache_manager(config.cache.directory))

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        console=console
    ) as progress:
        task = progress.add_task("[cyan]批处理中...", total=None)

        def on_progress(done: int, total: int) -> None:
            progress.update(task, completed=done, total=total)

        summary, _ = asyncio.run(runner.run(manifest, on_progress))

    console.print(f"[green]成功:[/green] {summary.succeeded}/{summary.count}  [red]失败:[/red] {summary.failed}")
    if summary.ablated:
        console.print(f"[yellow]禁用子任务:[/yellow] {', '.join(summary.ablated)}")
    if summary.mean_tweet_length is not None:
        console.print(f"[green]平均长度:[/green] {summary.mean_tweet_length:.1f}  [green]最大长度:[/green] {summary.max_tweet_length}")
    if summary.mean_scores:
        table = Table(title=f"📊 平均评分（{summary.scored} 条）", show_header=True, header_style="bold cyan")
        table.add_column("维度", style="cyan")
        table.add_column("均值", style="green", justify="right")
        for name, value in summary.mean_scores.items():
            table.add_row(name, f"{value:.2f}/10")
        console.print(table)
    for failure in summary.failures:
        console.print(f"[red]✗ {failure.record_id} @ {failure.stage}: {failure.error}[/red]")
    console.print(f"[green]汇总:[/green] {Path(config.output_dir) / 'summary.json'}")


@cli.command()
@click.pass_context
def doctor(ctx):
    """
    Check system environment / 检查系统环境

    Verifies that all dependencies and configurations are properly set up.
    验证所有依赖和配置是否正确设置。

    Checks / 检查项:
    - Python version / Python版本
    - API key / API密钥
    - Required packages / 必需的包
    - Configured checkpoints and cache / 权重文件与缓存
    """
    import importlib

    from core.settings import Secrets

    console.print("[bold cyan]🔍 系统环境检查[/bold cyan]\n")

    checks = []

    python_version = f"{sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}"
    checks.append(("Python 版本", python_version, "✅" if sys.version_info >= (3, 9) else "❌"))

    api_key = Secrets().llm_api_key
    checks.append(("LLM_API_KEY", "已设置" if api_key else "未设置", "✅" if api_key else "⚠️"))

    for package, module in (
        ("NumPy", "numpy"), ("PyTorch", "torch"), ("scikit-learn", "sklearn"),
        ("Pillow", "PIL"), ("httpx", "httpx"), ("aiofiles", "aiofiles"), ("Transformers", "transformers"),
    ):
        try:
            version = getattr(importlib.import_module(module), "__version__", "?")
            checks.append((package, version, "✅"))
        except ImportError:
            checks.append((package, "未安装", "⚠️" if module == "transformers" else "❌"))

    try:
        config = load_config(ctx.obj["config"])
        checks.append(("配置文件", "有效", "✅"))
        live = [name for name, value in config.ports.model_dump().items() if value == "live"]
        checks.append(("live 端口", ", ".join(live) or "无", "✅"))
        for kind in ("topic", "sentiment", "scene"):
            path = getattr(config.checkpoints, kind)
            if path is None:
                checks.append((f"{kind} 权重", "未配置（按种子初始化）", "⚠️"))
            else:
                checks.append((f"{kind} 权重", path, "✅" if Path(path).exists() else "❌"))

        from core.cache_manager import get_cache_manager
        cache = get_cache_manager(config.cache.directory)
        checks.append(("缓存记录", str(cache.get_cache_size()), "✅"))
        stats = cache.get_stats()
        checks.append(("缓存命中率", f"{stats['hit_rate_percent']}%", "✅"))
    except MPWLError as e:
        checks.append(("配置文件", str(e), "❌"))

    table = Table(show_header=True, header_style="bold cyan")
    table.add_column("检查项", style="cyan")
    table.add_column("状态", style="yellow")
    table.add_column("结果", style="green")

    for check_name, status, result in checks:
        table.add_row(check_name, status, result)

    console.print(table)


if __name__ == '__main__':
    cli()
