"""
Image Composer / 图片裁剪与拼图

Person-centred square cropping and grid composition.

- crop_window: pure geometry. The square side is min(W, H); its centre
  follows the highest-confidence person box (or the union of all boxes) and
  is clamped so the square stays inside the image. No boxes: centre crop.
- compose_grid: resizes every image to cell x cell (bilinear) and lays them
  out row-major in the smallest g x g grid with g * g >= count.
"""

import math
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple

from loguru import logger
from PIL import Image

from core.errors import BackendFailure, TooManyImages
from core.ports.base_port import DetectorPort, ImageRef, load_image
from models.schemas import DetectionBox

MAX_GRID_IMAGES = 9
DEFAULT_CELL = 512
PERSON_QUERY = "person"


class CropWindow(NamedTuple):
    """裁剪窗口（左上角 + 边长）"""
    left: int
    top: int
    size: int

    @property
    def box(self) -> Tuple[int, int, int, int]:
        return self.left, self.top, self.left + self.size, self.top + self.size


def _anchor(boxes: Sequence[DetectionBox], strategy: str) -> Optional[Tuple[float, float]]:
    if not boxes:
        return None
    if strategy == "union":
        x0 = min(b.x0 for b in boxes)
        y0 = min(b.y0 for b in boxes)
        x1 = max(b.x1 for b in boxes)
        y1 = max(b.y1 for b in boxes)
        return (x0 + x1) / 2.0, (y0 + y1) / 2.0
    if strategy != "top":
        raise ValueError(f"unknown crop strategy '{strategy}'")
    best = boxes[0]
    for box in boxes[1:]:
        if box.confidence > best.confidence:
            best = box
    return best.center


def _clamp(value: int, low: int, high: int) -> int:
    return max(low, min(high, value))


def crop_window(
    width: int,
    height: int,
    boxes: Sequence[DetectionBox] = (),
    strategy: str = "top"
) -> CropWindow:
    """
    Square crop window / 计算方形裁剪窗口

    Args:
        width, height: image size, both >= 1
        boxes: detected persons
        strategy: "top" (highest-confidence box) or "union" (union of boxes)
    """
    if width < 1 or height < 1:
        raise ValueError(f"image must be non-empty, got {width}x{height}")
    side = min(width, height)
    anchor = _anchor(list(boxes), strategy) or (width / 2.0, height / 2.0)
    left = math.floor(anchor[0] - side / 2.0 + 0.5)
    top = math.floor(anchor[1] - side / 2.0 + 0.5)
    return CropWindow(
        left=_clamp(left, 0, width - side),
        top=_clamp(top, 0, height - side),
        size=side,
    )


def person_center_crop(
    image: Image.Image,
    boxes: Sequence[DetectionBox] = (),
    strategy: str = "top"
) -> Image.Image:
    """以人物为中心的方形裁剪"""
    window = crop_window(image.width, image.height, boxes, strategy)
    return image.crop(window.box)


def detect_and_crop(
    image_path: ImageRef,
    detector: DetectorPort,
    query: str = PERSON_QUERY,
    strategy: str = "top"
) -> Image.Image:
    """
    Detect people and crop around them / 检测人物并裁剪

    Raises:
        BackendFailure: unreadable image or detector failure
    """
    image = load_image(image_path)
    try:
        boxes = detector.detect(image, query)
    except BackendFailure:
        raise
    except Exception as e:
        raise BackendFailure("detector failed", image=str(image_path)) from e

    boxes = [b for b in boxes if b.within(image.width, image.height)]
    if not boxes:
        logger.warning(f"⚠️ 未检测到 '{query}': {image_path}，使用中心裁剪")
    return person_center_crop(image, boxes, strategy)


def grid_size(count: int) -> int:
    """Smallest g with g * g >= count."""
    return max(1, math.isqrt(count - 1) + 1) if count > 0 else 1


def compose_grid(
    images: Sequence[Image.Image],
    cell: int = DEFAULT_CELL,
    background: Tuple[int, int, int] = (255, 255, 255)
) -> Image.Image:
    """
    Compose a g x g grid / 拼接九宫格

    Raises:
        TooManyImages: more than nine images
        ValueError: no images or a non-positive cell size
    """
    if len(images) > MAX_GRID_IMAGES:
        raise TooManyImages(f"a grid holds at most {MAX_GRID_IMAGES} images, got {len(images)}")
    if not images:
        raise ValueError("compose_grid needs at least one image")
    if cell < 1:
        raise ValueError(f"cell must be positive, got {cell}")

    g = grid_size(len(images))
    canvas = Image.new("RGB", (g * cell, g * cell), tuple(background))
    for index, image in enumerate(images):
        row, col = divmod(index, g)
        tile = image.convert("RGB").resize((cell, cell), Image.Resampling.BILINEAR)
        canvas.paste(tile, (col * cell, row * cell))
    logger.debug(f"🧩 拼图 {len(images)} 张 -> {g}x{g} 网格, cell={cell}")
    return canvas


def compose_from_paths(
    paths: Sequence[ImageRef],
    detector: DetectorPort,
    output: ImageRef,
    cell: int = DEFAULT_CELL,
    background: Tuple[int, int, int] = (255, 255, 255),
    query: str = PERSON_QUERY,
    strategy: str = "top"
) -> Path:
    """裁剪全部图片并拼图，输出 PNG"""
    crops: List[Image.Image] = [detect_and_crop(p, detector, query, strategy) for p in paths]
    grid = compose_grid(crops, cell, background)
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    grid.save(output, format="PNG")
    logger.info(f"💾 拼图已保存: {output}")
    return output
