"""Detection orchestration over pluggable backends.

Two strategies: direct (one backend call on the full frame) and tiled
(sliding windows detected independently, remapped to global coordinates,
then NMS-merged). Backends are anything satisfying :class:`DetectorBackend`;
the replay oracle answers from ground-truth annotations so the whole
pipeline can be verified without trained models, and the bridge backend
drives an external model process over a line-delimited JSON protocol.
"""

from __future__ import annotations

import dataclasses
import json
import random
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, runtime_checkable

import numpy as np
from PIL import Image

from .annotations import AnnotatedImage
from .boxes import PixelBox
from .errors import BackendError, ValidationError
from .nms import Detection, nms, sort_key
from .tiling import TilePlan, Window, check_within_window, plan_tiles, to_global

PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class ImageHandle:
    """Identity, dimensions, and (lazily loaded) pixels of one input image."""

    image_id: str
    width: int
    height: int
    path: Path | None = None
    pixels: np.ndarray | None = None

    @classmethod
    def from_annotated(cls, img: AnnotatedImage) -> "ImageHandle":
        return cls(
            image_id=img.image_id,
            width=img.width_px,
            height=img.height_px,
            path=img.image_path,
        )

    def load_pixels(self) -> np.ndarray:
        if self.pixels is not None:
            return self.pixels
        if self.path is None:
            raise ValidationError(f"image {self.image_id} has neither pixels nor a path")
        with Image.open(self.path) as img:
            return np.asarray(img)


@dataclass(frozen=True)
class WindowRequest:
    """One backend invocation: a window of an image, window-local frame."""

    image: ImageHandle
    x0: int
    y0: int
    w: int
    h: int
    window_index: int = 0
    pad: bool = False
    pixels: np.ndarray | None = None  # window pixels, black-padded, if requested


@runtime_checkable
class DetectorBackend(Protocol):
    """Capability descriptor plus the per-window detect call.

    ``detect`` returns window-local detections that must lie within the
    window extent. ``max_input_px`` bounds the longest side a window may
    have (None = unbounded). ``single_flight`` backends are never called
    concurrently. ``needs_pixels`` backends receive the window raster.
    """

    name: str
    classes: tuple[int, ...]
    max_input_px: int | None
    single_flight: bool
    needs_pixels: bool

    def detect(self, request: WindowRequest) -> list[Detection]: ...


@dataclass(frozen=True)
class ReplayConfig:
    """Noise model for the replay oracle.

    Each ground-truth box draws from its own random stream keyed by
    (seed, image id, window index, box index), so outputs never depend on
    the order windows are processed in. conf_range (lo, hi) samples
    confidences uniformly; (1.0, 1.0) pins them at 1.
    """

    drop_prob: float = 0.0
    jitter_px: float = 0.0
    conf_range: tuple[float, float] = (1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.drop_prob <= 1.0):
            raise ValidationError(f"drop_prob {self.drop_prob} outside [0, 1]")
        if self.jitter_px < 0:
            raise ValidationError(f"jitter_px {self.jitter_px} negative")
        lo, hi = self.conf_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValidationError(f"conf_range {self.conf_range} invalid")


class ReplayOracleBackend:
    """Answers detect calls from ground-truth annotations.

    A box is reported iff it lies fully inside the requested window, which
    keeps returned geometry identical to ground truth (no clipped partial
    boxes) and makes oracle-based pipeline checks exact.
    """

    name = "replay"
    max_input_px: int | None = None
    single_flight = False
    needs_pixels = False

    def __init__(self, ground_truth: Iterable[AnnotatedImage] | Mapping[str, AnnotatedImage],
                 config: ReplayConfig | None = None):
        if isinstance(ground_truth, Mapping):
            images = list(ground_truth.values())
        else:
            images = list(ground_truth)
        self.config = config or ReplayConfig()
        self._gt: dict[str, list[tuple[int, PixelBox]]] = {
            img.image_id: img.pixel_boxes() for img in images
        }
        ids = {c for boxes in self._gt.values() for c, _ in boxes}
        self.classes = tuple(sorted(ids | {0, 1, 2}))

    def detect(self, request: WindowRequest) -> list[Detection]:
        gt = self._gt.get(request.image.image_id)
        if gt is None:
            raise BackendError(
                f"no annotations for image '{request.image.image_id}'", backend=self.name
            )
        cfg = self.config
        out = []
        for box_index, (class_id, box) in enumerate(gt):
            if not (
                box.x_min >= request.x0
                and box.y_min >= request.y0
                and box.x_max <= request.x0 + request.w
                and box.y_max <= request.y0 + request.h
            ):
                continue
            rng = random.Random(
                f"{cfg.seed}|{request.image.image_id}|{request.window_index}|{box_index}"
            )
            drop_u = rng.random()
            jit = [rng.uniform(-cfg.jitter_px, cfg.jitter_px) for _ in range(4)]
            conf = rng.uniform(*cfg.conf_range)
            if drop_u < cfg.drop_prob:
                continue
            x_min = min(max(box.x_min - request.x0 + jit[0], 0.0), float(request.w))
            y_min = min(max(box.y_min - request.y0 + jit[1], 0.0), float(request.h))
            x_max = min(max(box.x_max - request.x0 + jit[2], 0.0), float(request.w))
            y_max = min(max(box.y_max - request.y0 + jit[3], 0.0), float(request.h))
            if x_max <= x_min or y_max <= y_min:
                continue  # jitter collapsed a tiny box
            out.append(
                Detection(
                    box=PixelBox(x_min, y_min, x_max, y_max),
                    class_id=class_id,
                    confidence=conf,
                )
            )
        return out


class BridgeBackend:
    """Client for an external detector process speaking protocol v1.

    The child receives line-delimited JSON requests
    ``{"id", "image", "window"}`` on stdin and answers each with
    ``{"id", "detections"}`` or ``{"id", "error"}`` on stdout, after an
    initial handshake line declaring protocol, classes, and input limit.
    Responses may arrive out of order; a reader thread routes them back to
    the requesting caller by id.
    """

    needs_pixels = False

    def __init__(self, command: list[str], name: str = "bridge", startup_timeout: float = 30.0):
        self.name = name
        if not command:
            raise ValidationError("bridge backend requires a non-empty command line")
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BackendError(f"cannot start {command}: {exc}", backend=name) from exc
        handshake_line = self._proc.stdout.readline()
        if not handshake_line:
            raise BackendError("bridge exited before handshake", backend=name)
        try:
            handshake = json.loads(handshake_line)
        except json.JSONDecodeError as exc:
            raise BackendError(f"malformed handshake: {handshake_line!r}", backend=name) from exc
        if handshake.get("protocol") != PROTOCOL_VERSION:
            raise BackendError(
                f"unsupported protocol {handshake.get('protocol')!r}", backend=name
            )
        self.classes = tuple(int(c) for c in handshake.get("classes", ()))
        self.max_input_px = (
            int(handshake["max_input_px"]) if handshake.get("max_input_px") is not None else None
        )
        self.single_flight = bool(handshake.get("single_flight", True))
        self._next_id = 0
        self._write_lock = threading.Lock()
        self._cond = threading.Condition()
        self._responses: dict[int, dict] = {}
        self._eof = False
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self):
        for line in self._proc.stdout:
            if not line.strip():
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError:
                msg = {"id": None, "error": f"malformed bridge output: {line!r}"}
            with self._cond:
                self._responses[msg.get("id")] = msg
                self._cond.notify_all()
        with self._cond:
            self._eof = True
            self._cond.notify_all()

    def detect(self, request: WindowRequest) -> list[Detection]:
        if request.image.path is None:
            raise ValidationError(
                f"bridge backend needs an on-disk image for '{request.image.image_id}'"
            )
        with self._write_lock:
            rid = self._next_id
            self._next_id += 1
            payload = {
                "id": rid,
                "image": str(request.image.path),
                "window": [request.x0, request.y0, request.w, request.h],
            }
            try:
                self._proc.stdin.write(json.dumps(payload) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise BackendError(f"bridge pipe closed: {exc}", backend=self.name) from exc
        with self._cond:
            while rid not in self._responses:
                if self._eof:
                    raise BackendError("bridge exited mid-run", backend=self.name)
                self._cond.wait(timeout=60.0)
            msg = self._responses.pop(rid)
        if "error" in msg:
            raise BackendError(str(msg["error"]), backend=self.name)
        try:
            return [
                Detection(
                    box=PixelBox(*(float(v) for v in d["bbox"])),
                    class_id=int(d["class"]),
                    confidence=float(d["conf"]),
                )
                for d in msg["detections"]
            ]
        except (KeyError, TypeError, ValueError, ValidationError) as exc:
            raise BackendError(f"malformed detections: {exc}", backend=self.name) from exc

    def close(self):
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


@dataclass
class DetectionRun:
    """Detections for one image in global pixel coordinates."""

    image_id: str
    mode: str  # "direct" | "tiled"
    width: int
    height: int
    detections: list[Detection]
    provenance: dict = field(default_factory=dict)


def _validate_window_local(dets: list[Detection], request: WindowRequest, backend_name: str,
                           window_index: int | None = None) -> None:
    win = Window(x0=request.x0, y0=request.y0, w=request.w, h=request.h, pad=request.pad)
    for det in dets:
        if not check_within_window(det.box, win):
            raise BackendError(
                f"detection {det.box} exceeds the {win.w}x{win.h} window extent",
                backend=backend_name,
                window_index=window_index,
            )


def _window_pixels(frame: np.ndarray, request: WindowRequest) -> np.ndarray:
    h, w = frame.shape[:2]
    tile = np.zeros((request.h, request.w) + frame.shape[2:], dtype=frame.dtype)
    x1 = min(w, request.x0 + request.w)
    y1 = min(h, request.y0 + request.h)
    tile[: y1 - request.y0, : x1 - request.x0] = frame[request.y0 : y1, request.x0 : x1]
    return tile


def detect_direct(
    image: ImageHandle,
    backend: DetectorBackend,
    nms_iou: float = 0.5,
    class_aware: bool = True,
) -> DetectionRun:
    """Single backend call on the full frame; detections come back global."""
    if backend.max_input_px is not None and max(image.width, image.height) > backend.max_input_px:
        raise ValidationError(
            f"image {image.image_id} ({image.width}x{image.height}) exceeds "
            f"backend '{backend.name}' limit of {backend.max_input_px} px"
        )
    request = WindowRequest(
        image=image,
        x0=0,
        y0=0,
        w=image.width,
        h=image.height,
        pixels=image.load_pixels() if backend.needs_pixels else None,
    )
    dets = backend.detect(request)
    _validate_window_local(dets, request, backend.name)
    merged = nms(dets, iou_threshold=nms_iou, class_aware=class_aware)
    return DetectionRun(
        image_id=image.image_id,
        mode="direct",
        width=image.width,
        height=image.height,
        detections=merged,
        provenance={"backend": backend.name},
    )


def detect_tiled(
    image: ImageHandle,
    plan: TilePlan,
    backend: DetectorBackend,
    nms_iou: float = 0.5,
    class_aware: bool = True,
    jobs: int = 1,
) -> DetectionRun:
    """Detect each planned window independently, remap, and NMS-merge.

    Windows may be dispatched across ``jobs`` worker threads; the merge is
    order-independent because results are gathered per window index and
    sorted with a total key before suppression. Any window failure aborts
    the whole run.
    """
    if plan.image_w != image.width or plan.image_h != image.height:
        raise ValidationError(
            f"plan is for {plan.image_w}x{plan.image_h}, image "
            f"{image.image_id} is {image.width}x{image.height}"
        )
    if backend.max_input_px is not None and plan.config.tile_size_px > backend.max_input_px:
        raise ValidationError(
            f"tile size {plan.config.tile_size_px} exceeds backend "
            f"'{backend.name}' limit of {backend.max_input_px} px"
        )
    frame = image.load_pixels() if backend.needs_pixels else None
    requests = []
    for index, win in enumerate(plan.windows):
        req = WindowRequest(
            image=image,
            x0=win.x0,
            y0=win.y0,
            w=win.w,
            h=win.h,
            window_index=index,
            pad=win.pad,
        )
        if frame is not None:
            req = dataclasses.replace(req, pixels=_window_pixels(frame, req))
        requests.append(req)

    def run_window(req: WindowRequest) -> list[Detection]:
        try:
            dets = backend.detect(req)
        except BackendError as exc:
            if exc.window_index is None:
                raise BackendError(
                    str(exc), backend=backend.name, window_index=req.window_index
                ) from exc
            raise
        _validate_window_local(dets, req, backend.name, req.window_index)
        return dets

    workers = 1 if backend.single_flight else max(1, jobs)
    per_window: list[list[Detection]] = [[] for _ in plan.windows]
    if workers == 1:
        for req in requests:
            per_window[req.window_index] = run_window(req)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_window, req): req for req in requests}
            try:
                for future, req in futures.items():
                    per_window[req.window_index] = future.result()
            except BackendError:
                pool.shutdown(wait=False, cancel_futures=True)
                raise

    combined = [
        Detection(
            box=to_global(det.box, (plan.windows[i].x0, plan.windows[i].y0)),
            class_id=det.class_id,
            confidence=det.confidence,
            source_window=i,
        )
        for i, dets in enumerate(per_window)
        for det in dets
    ]
    combined.sort(key=sort_key)
    merged = nms(combined, iou_threshold=nms_iou, class_aware=class_aware)
    return DetectionRun(
        image_id=image.image_id,
        mode="tiled",
        width=image.width,
        height=image.height,
        detections=merged,
        provenance={"backend": backend.name},
    )


def plan_for(image: ImageHandle, config=None) -> TilePlan:
    return plan_tiles(image.width, image.height, config)


# --- run-file serialization -------------------------------------------------


def detection_to_json(det: Detection) -> dict:
    out = {
        "class": det.class_id,
        "bbox": [det.box.x_min, det.box.y_min, det.box.x_max, det.box.y_max],
        "conf": det.confidence,
    }
    if det.source_window is not None:
        out["window"] = det.source_window
    return out


def detection_from_json(data: dict) -> Detection:
    return Detection(
        box=PixelBox(*(float(v) for v in data["bbox"])),
        class_id=int(data["class"]),
        confidence=float(data["conf"]),
        source_window=data.get("window"),
    )


def runs_to_json(runs: list[DetectionRun], provenance: dict) -> dict:
    return {
        "provenance": provenance,
        "images": {
            run.image_id: {
                "mode": run.mode,
                "width": run.width,
                "height": run.height,
                "detections": [detection_to_json(d) for d in run.detections],
            }
            for run in runs
        },
    }


def runs_from_json(data: dict) -> list[DetectionRun]:
    runs = []
    for image_id, entry in data["images"].items():
        runs.append(
            DetectionRun(
                image_id=image_id,
                mode=entry["mode"],
                width=int(entry["width"]),
                height=int(entry["height"]),
                detections=[detection_from_json(d) for d in entry["detections"]],
                provenance=dict(data.get("provenance", {})),
            )
        )
    return runs


def save_runs(runs: list[DetectionRun], path: str | Path, provenance: dict) -> None:
    Path(path).write_text(json.dumps(runs_to_json(runs, provenance), indent=2, sort_keys=True) + "\n")


def load_runs(path: str | Path) -> list[DetectionRun]:
    try:
        return runs_from_json(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ValidationError(f"cannot read run file {path}: {exc}") from exc
