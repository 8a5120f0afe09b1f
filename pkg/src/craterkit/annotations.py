"""YOLO-format crater annotations: parsing, conversion, splitting, cropping, stats.

Label files carry one "class cx cy w h" line per box, values normalized to
the image dimensions. A label file shares its basename with its image; a
missing label file means an image with no boxes.
"""

from __future__ import annotations

import math
import random
import shutil
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .boxes import NormBox, PixelBox, denormalize
from .errors import ClampWarning, LabelParseError, ValidationError
from .geodesy import SceneScale, SizeClass, SizeThresholds, classify_box

IMAGE_SUFFIXES = (".png", ".tif", ".tiff")
SPLIT_NAMES = ("train", "val", "test")

#: Training-time augmentation parameters recorded alongside a split so a
#: model bridge can apply them; this pipeline never applies them itself.
DEFAULT_AUGMENTATION = {
    "rotation_deg": 15.0,
    "horizontal_flip": True,
    "width_shift_frac": 0.10,
    "height_shift_frac": 0.10,
}


@dataclass(frozen=True)
class AnnotatedImage:
    image_path: Path
    width_px: int
    height_px: int
    boxes: tuple[NormBox, ...]

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValidationError(
                f"{self.image_path}: non-positive dims {self.width_px}x{self.height_px}"
            )

    @property
    def image_id(self) -> str:
        return self.image_path.stem

    def pixel_boxes(self) -> list[tuple[int, PixelBox]]:
        """Boxes as (class_id, PixelBox) in this image's pixel frame."""
        return [(b.class_id, denormalize(b, self.width_px, self.height_px)) for b in self.boxes]


@dataclass(frozen=True)
class SplitSpec:
    """Fractions for the train/val/test partition plus the shuffle seed."""

    train_frac: float = 0.6
    val_frac: float = 0.1
    test_frac: float = 0.3
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fracs):
            raise ValidationError(f"negative split fraction in {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValidationError(f"split fractions {fracs} do not sum to 1")


@dataclass
class DatasetLayout:
    root: Path
    splits: dict[str, list[AnnotatedImage]] = field(default_factory=dict)
    augmentation: dict = field(default_factory=lambda: dict(DEFAULT_AUGMENTATION))

    def __post_init__(self):
        seen: dict[str, str] = {}
        for split, images in self.splits.items():
            for img in images:
                key = str(img.image_path)
                if key in seen:
                    raise ValidationError(
                        f"{key} appears in both '{seen[key]}' and '{split}' splits"
                    )
                seen[key] = split

    def all_images(self) -> list[AnnotatedImage]:
        return [img for split in SPLIT_NAMES for img in self.splits.get(split, [])]


def parse_yolo_line(line: str, line_no: int | None = None) -> NormBox:
    """Parse one annotation line; trailing whitespace is fine, extra tokens are not."""
    tokens = line.split()
    if len(tokens) != 5:
        raise LabelParseError(
            f"expected 5 fields 'class cx cy w h', got {len(tokens)}",
            kind="arity",
            line_no=line_no,
        )
    try:
        class_id = int(tokens[0])
        cx, cy, w, h = (float(t) for t in tokens[1:])
    except ValueError as exc:
        raise LabelParseError(
            f"non-numeric field in {tokens!r}", kind="numeric", line_no=line_no
        ) from exc
    try:
        return NormBox(class_id=class_id, cx=cx, cy=cy, w=w, h=h)
    except ValidationError as exc:
        raise LabelParseError(str(exc), kind="range", line_no=line_no) from exc


def serialize_yolo_line(box: NormBox) -> str:
    return f"{box.class_id} {box.cx:.6f} {box.cy:.6f} {box.w:.6f} {box.h:.6f}"


def parse_label_file(path: str | Path) -> list[NormBox]:
    boxes = []
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        boxes.append(parse_yolo_line(line, line_no=i))
    return boxes


def write_label_file(boxes: list[NormBox] | tuple[NormBox, ...], path: str | Path) -> None:
    Path(path).write_text("".join(serialize_yolo_line(b) + "\n" for b in boxes))


def _read_image_dims(path: Path) -> tuple[int, int]:
    with Image.open(path) as img:
        return img.size  # (width, height), header only


def _label_path_for(image_path: Path) -> Path:
    # images/ and labels/ subdirs mirror each other; flat dirs keep both together
    if image_path.parent.name == "images":
        return image_path.parent.parent / "labels" / (image_path.stem + ".txt")
    return image_path.with_suffix(".txt")


def load_annotated_dir(directory: str | Path) -> list[AnnotatedImage]:
    """Scan a directory of images and sibling label files.

    Accepts either a flat dir (image + .txt together) or the
    images/ + labels/ pair convention.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ValidationError(f"not a directory: {directory}")
    image_dir = directory / "images" if (directory / "images").is_dir() else directory
    images = []
    for path in sorted(image_dir.iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        width, height = _read_image_dims(path)
        label_path = _label_path_for(path)
        boxes = parse_label_file(label_path) if label_path.exists() else []
        images.append(
            AnnotatedImage(
                image_path=path, width_px=width, height_px=height, boxes=tuple(boxes)
            )
        )
    return images


def load_dataset(root: str | Path) -> DatasetLayout:
    """Load a split dataset from root/{train,val,test}/{images,labels}/."""
    root = Path(root)
    splits = {}
    for name in SPLIT_NAMES:
        split_dir = root / name
        splits[name] = load_annotated_dir(split_dir) if split_dir.is_dir() else []
    if not any(splits.values()):
        raise ValidationError(f"no images found under {root}")
    return DatasetLayout(root=root, splits=splits)


def remap_class_ids(
    images: list[AnnotatedImage], mapping: dict[int, int]
) -> list[AnnotatedImage]:
    """Rewrite annotation class ids through ``mapping`` (identity when absent).

    Lets foreign datasets with different id conventions feed the pipeline,
    whose ids are fixed at 0=Large, 1=Small, 2=Medium (+3 background).
    """
    out = []
    for img in images:
        boxes = tuple(
            NormBox(mapping.get(b.class_id, b.class_id), b.cx, b.cy, b.w, b.h)
            for b in img.boxes
        )
        out.append(
            AnnotatedImage(
                image_path=img.image_path,
                width_px=img.width_px,
                height_px=img.height_px,
                boxes=boxes,
            )
        )
    return out


def split_dataset(images: list[AnnotatedImage], spec: SplitSpec) -> DatasetLayout:
    """Partition images into train/val/test with a seeded shuffle.

    Counts follow the floor rule: floor(n*train) to train, floor(n*val) to
    val, remainder to test. The shuffle order is fixed by sorting on path
    first, so identical inputs and seed always produce identical splits.
    """
    if not images:
        raise ValidationError("cannot split an empty image list")
    ordered = sorted(images, key=lambda img: str(img.image_path))
    random.Random(spec.seed).shuffle(ordered)
    n = len(ordered)
    n_train = math.floor(n * spec.train_frac)
    n_val = math.floor(n * spec.val_frac)
    splits = {
        "train": ordered[:n_train],
        "val": ordered[n_train : n_train + n_val],
        "test": ordered[n_train + n_val :],
    }
    root = images[0].image_path.parent
    return DatasetLayout(root=root, splits=splits)


def write_split(layout: DatasetLayout, out_root: str | Path) -> None:
    """Materialize a split on disk, copying images and rewriting labels."""
    out_root = Path(out_root)
    for name in SPLIT_NAMES:
        img_dir = out_root / name / "images"
        lbl_dir = out_root / name / "labels"
        img_dir.mkdir(parents=True, exist_ok=True)
        lbl_dir.mkdir(parents=True, exist_ok=True)
        for img in layout.splits.get(name, []):
            shutil.copy2(img.image_path, img_dir / img.image_path.name)
            write_label_file(img.boxes, lbl_dir / (img.image_path.stem + ".txt"))


def pad_to_size(image: np.ndarray, target_w: int, target_h: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Pad an image with black to target dims, content at top-left.

    Returns the padded array and the placement offset of the original
    content (always (0, 0) with top-left placement), so annotations can be
    re-referenced against the new frame.
    """
    h, w = image.shape[:2]
    if w > target_w or h > target_h:
        raise ValidationError(f"image {w}x{h} exceeds pad target {target_w}x{target_h}")
    if w == target_w and h == target_h:
        return image, (0, 0)
    shape = (target_h, target_w) + image.shape[2:]
    padded = np.zeros(shape, dtype=image.dtype)
    padded[:h, :w] = image
    return padded, (0, 0)


def renormalize_for_pad(
    box: NormBox, old_w: int, old_h: int, new_w: int, new_h: int
) -> NormBox:
    """Re-express a box normalized to the pre-pad dims against the padded dims."""
    if new_w < old_w or new_h < old_h:
        raise ValidationError("padded dims must not shrink the image")
    sx, sy = old_w / new_w, old_h / new_h
    return NormBox(box.class_id, box.cx * sx, box.cy * sy, box.w * sx, box.h * sy)


def crop_for_classifier(image: np.ndarray, box: PixelBox, out_size_px: int = 128) -> np.ndarray:
    """Extract a box region and resample it to a square classifier chip.

    The box is clamped to the image (with a warning when that changes it),
    then bilinearly resized to out_size x out_size. Aspect ratio is not
    preserved. A clamped region already at the target size is returned
    bit-for-bit.
    """
    if out_size_px <= 0:
        raise ValidationError(f"chip size must be positive, got {out_size_px}")
    h, w = image.shape[:2]
    x0 = max(0, math.floor(box.x_min))
    y0 = max(0, math.floor(box.y_min))
    x1 = min(w, math.ceil(box.x_max))
    y1 = min(h, math.ceil(box.y_max))
    if x1 <= x0 or y1 <= y0:
        raise ValidationError(f"box {box} lies fully outside the {w}x{h} image")
    if box.x_min < 0 or box.y_min < 0 or box.x_max > w or box.y_max > h:
        warnings.warn(
            f"box ({box.x_min:.1f}, {box.y_min:.1f}, {box.x_max:.1f}, {box.y_max:.1f}) "
            f"clamped to {w}x{h} image",
            ClampWarning,
            stacklevel=2,
        )
    region = image[y0:y1, x0:x1]
    if region.shape[0] == out_size_px and region.shape[1] == out_size_px:
        return region.copy()
    chip = Image.fromarray(region).resize((out_size_px, out_size_px), Image.BILINEAR)
    return np.asarray(chip)


def dataset_stats(
    layout: DatasetLayout,
    thresholds: SizeThresholds,
    scale: SceneScale | None = None,
    region=None,
) -> dict[str, dict[str, int]]:
    """Per-split crater counts by size class, the distribution-table shape.

    Every annotated box is classified by its measured diameter (km via
    ``scale``, or raw pixels, per ``thresholds.unit_mode``), so the totals
    always equal the number of boxes. Passing a ``region`` instead of a
    fixed scale derives each image's own scale from its dimensions.
    """
    from .geodesy import scene_scale

    stats: dict[str, dict[str, int]] = {}
    for split in SPLIT_NAMES:
        counts = {cls.label: 0 for cls in (SizeClass.LARGE, SizeClass.MEDIUM, SizeClass.SMALL)}
        for img in layout.splits.get(split, []):
            img_scale = (
                scene_scale(region, img.width_px, img.height_px) if region is not None else scale
            )
            for _, pbox in img.pixel_boxes():
                counts[classify_box(pbox, thresholds, img_scale).label] += 1
        stats[split] = counts
    return stats


def format_stats_table(stats: dict[str, dict[str, int]]) -> str:
    """Aligned text table: one row per split, Large/Medium/Small columns."""
    header = f"{'Dataset':<10} {'Large':>7} {'Medium':>7} {'Small':>7}"
    lines = [header, "-" * len(header)]
    for split in SPLIT_NAMES:
        counts = stats.get(split, {})
        lines.append(
            f"{split:<10} {counts.get('Large', 0):>7} "
            f"{counts.get('Medium', 0):>7} {counts.get('Small', 0):>7}"
        )
    return "\n".join(lines)
