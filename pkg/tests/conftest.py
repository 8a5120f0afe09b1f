"""Shared fixtures: synthetic dataset builders and acceptance reporting."""

import random
from pathlib import Path

import pytest
from PIL import Image

from craterkit.annotations import AnnotatedImage, write_label_file
from craterkit.boxes import NormBox

# --- acceptance criterion reporting ----------------------------------------------

_acceptance_results = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): marks a test as one acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        marker = item.get_closest_marker("acceptance")
        if marker:
            _acceptance_results.append((marker.args[0], report.passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed in _acceptance_results:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}")


# --- synthetic data builders ------------------------------------------------------


def write_image(path: Path, width: int, height: int, fill: int = 20) -> None:
    Image.new("L", (width, height), fill).save(path)


def grid_boxes(width, height, box_px, count, class_id, margin=8, pitch=None):
    """Disjoint boxes of a fixed pixel size laid out on a grid, as NormBoxes."""
    pitch = pitch or (box_px + 2 * margin)
    cols = max(1, (width - 2 * margin) // pitch)
    boxes = []
    for k in range(count):
        row, col = divmod(k, cols)
        cx = margin + col * pitch + box_px / 2
        cy = margin + row * pitch + box_px / 2
        if cy + box_px / 2 > height:
            raise ValueError(f"grid overflow: {count} boxes of {box_px}px in {width}x{height}")
        boxes.append(
            NormBox(class_id, cx / width, cy / height, box_px / width, box_px / height)
        )
    return boxes


def make_flat_dataset(root: Path, images: dict[str, tuple[int, int, list[NormBox]]]) -> None:
    """Write a flat directory of PNGs with sibling YOLO label files."""
    root.mkdir(parents=True, exist_ok=True)
    for name, (width, height, boxes) in images.items():
        write_image(root / f"{name}.png", width, height)
        write_label_file(boxes, root / f"{name}.txt")


def make_split_dataset(root: Path, splits: dict[str, dict[str, tuple[int, int, list[NormBox]]]]) -> None:
    """Write a root/{split}/{images,labels}/ dataset."""
    for split, images in splits.items():
        img_dir = root / split / "images"
        lbl_dir = root / split / "labels"
        img_dir.mkdir(parents=True, exist_ok=True)
        lbl_dir.mkdir(parents=True, exist_ok=True)
        for name, (width, height, boxes) in images.items():
            write_image(img_dir / f"{name}.png", width, height)
            write_label_file(boxes, lbl_dir / f"{name}.txt")


def random_boxes_px(count, image_px, size_px, rng: random.Random, class_id):
    """Random (possibly overlapping) boxes of a fixed pixel size, normalized."""
    boxes = []
    for _ in range(count):
        cx = rng.uniform(size_px / 2, image_px - size_px / 2)
        cy = rng.uniform(size_px / 2, image_px - size_px / 2)
        boxes.append(
            NormBox(class_id, cx / image_px, cy / image_px, size_px / image_px, size_px / image_px)
        )
    return boxes


def annotated(name, width, height, boxes) -> AnnotatedImage:
    return AnnotatedImage(
        image_path=Path(f"/virtual/{name}.png"),
        width_px=width,
        height_px=height,
        boxes=tuple(boxes),
    )
