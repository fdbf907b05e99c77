"""Detections, frame access and object-centric cube extraction."""

from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import cv2
import numpy as np

from .errors import MissingArtifactError, ParseError

CUBE_SIZE = 64
DEFAULT_STATIC_EPS = 0.005
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
VIDEO_SUFFIXES = {".avi", ".mp4", ".mkv", ".mov"}
DETECTION_KEYS = ("video_id", "frame", "x1", "y1", "x2", "y2", "conf")


@dataclass(frozen=True)
class Detection:
    video_id: str
    frame_index: int
    box: tuple[float, float, float, float]
    confidence: float

    def to_record(self) -> dict:
        x1, y1, x2, y2 = self.box
        return {"video_id": self.video_id, "frame": self.frame_index,
                "x1": x1, "y1": y1, "x2": x2, "y2": y2, "conf": self.confidence}


def load_detections(path: str | Path, threshold: float) -> list[Detection]:
    """Read a JSON-lines detection file, keeping records with ``conf >= threshold``.

    The same threshold must be used for training and test cubes.
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"detection file not found: {path}")
    out = []
    with path.open() as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise ParseError(path, line_no, "expected a JSON object")
            missing = [k for k in DETECTION_KEYS if k not in rec]
            if missing:
                raise ParseError(path, line_no, f"missing keys {missing}")
            try:
                frame = int(rec["frame"])
                box = tuple(float(rec[k]) for k in ("x1", "y1", "x2", "y2"))
                conf = float(rec["conf"])
            except (TypeError, ValueError):
                raise ParseError(path, line_no, "non-numeric frame, box or conf") from None
            if frame < 0:
                raise ParseError(path, line_no, f"negative frame index {frame}")
            if not (box[0] < box[2] and box[1] < box[3]):
                raise ParseError(path, line_no, f"degenerate box {box}")
            if not 0.0 <= conf <= 1.0:
                raise ParseError(path, line_no, f"confidence {conf} outside [0, 1]")
            if conf >= threshold:
                out.append(Detection(str(rec["video_id"]), frame, box, conf))
    return out


def write_detections(path: str | Path, detections: Iterable[Detection]) -> None:
    with Path(path).open("w") as fh:
        for det in detections:
            fh.write(json.dumps(det.to_record()) + "\n")


class FrameAccessor(Protocol):
    """Random access to the frames of one video as ``H x W x C`` uint8 arrays."""

    def __len__(self) -> int: ...

    def frame(self, index: int) -> np.ndarray: ...


class ArrayVideo:
    """In-memory video, ``T x H x W`` or ``T x H x W x C``."""

    def __init__(self, frames: np.ndarray):
        frames = np.asarray(frames)
        if frames.ndim == 3:
            frames = frames[..., None]
        if frames.ndim != 4 or len(frames) == 0:
            raise ValueError(f"expected T x H x W [x C] frames, got shape {frames.shape}")
        self.frames = frames

    def __len__(self):
        return len(self.frames)

    def frame(self, index):
        return self.frames[index]


def _read_image(path: Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise MissingArtifactError(f"cannot read image {path}")
    if img.ndim == 2:
        return img[..., None]
    if img.shape[2] == 4:
        img = img[..., :3]
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


class FrameDirectory:
    """Frames stored as numbered image files; sorted filename order is frame order.

    Keeps a small LRU cache because neighbouring cubes share frames.  Not
    safe for concurrent use; give each worker its own instance.
    """

    def __init__(self, root: str | Path, cache_size: int = 64):
        self.root = Path(root)
        self.paths = sorted(p for p in self.root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not self.paths:
            raise MissingArtifactError(f"no image frames in {self.root}")
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._cache_size = cache_size

    def __len__(self):
        return len(self.paths)

    def frame(self, index):
        if index in self._cache:
            self._cache.move_to_end(index)
            return self._cache[index]
        img = _read_image(self.paths[index])
        self._cache[index] = img
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return img


class VideoFile:
    """A video container decoded fully into memory on first access."""

    def __init__(self, path: str | Path, grayscale: bool = False):
        self.path = Path(path)
        self.grayscale = grayscale
        self._frames: list[np.ndarray] | None = None

    def _load(self):
        cap = cv2.VideoCapture(str(self.path))
        frames = []
        while True:
            ok, img = cap.read()
            if not ok:
                break
            if self.grayscale:
                frames.append(cv2.cvtColor(img, cv2.COLOR_BGR2GRAY)[..., None])
            else:
                frames.append(cv2.cvtColor(img, cv2.COLOR_BGR2RGB))
        cap.release()
        if not frames:
            raise MissingArtifactError(f"no decodable frames in {self.path}")
        self._frames = frames

    def __len__(self):
        if self._frames is None:
            self._load()
        return len(self._frames)

    def frame(self, index):
        if self._frames is None:
            self._load()
        return self._frames[index]


def open_videos(root: str | Path) -> dict[str, FrameAccessor]:
    """Map video id to accessor for every frame directory or container under ``root``."""
    root = Path(root)
    if not root.is_dir():
        raise MissingArtifactError(f"frame root not found: {root}")
    videos: dict[str, FrameAccessor] = {}
    for entry in sorted(root.iterdir()):
        if entry.is_dir():
            videos[entry.name] = FrameDirectory(entry)
        elif entry.suffix.lower() in VIDEO_SUFFIXES:
            videos[entry.stem] = VideoFile(entry)
    if not videos:
        raise MissingArtifactError(f"no videos found under {root}")
    return videos


@dataclass
class ObjectCube:
    video_id: str
    center_frame: int
    patches: np.ndarray  # l x H x W x C, float32 in [0, 1]
    box: tuple[float, float, float, float]

    @property
    def l(self) -> int:
        return self.patches.shape[0]


def window_indices(center: int, l: int, num_frames: int) -> list[int]:
    """Frame indices ``center-t .. center+t`` clamped to the video (edge replication)."""
    if l < 1 or l % 2 == 0:
        raise ValueError(f"cube length must be a positive odd integer, got {l}")
    t = (l - 1) // 2
    return [min(max(center + d, 0), num_frames - 1) for d in range(-t, t + 1)]


def clamp_box(box, height: int, width: int) -> tuple[int, int, int, int] | None:
    """Integer pixel box covering ``box`` inside the frame, or None if empty."""
    x1, y1, x2, y2 = box
    x1 = max(0, math.floor(x1))
    y1 = max(0, math.floor(y1))
    x2 = min(width, math.ceil(x2))
    y2 = min(height, math.ceil(y2))
    if x2 <= x1 or y2 <= y1:
        return None
    return x1, y1, x2, y2


def resize_patch(patch: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of an ``H x W x C`` float patch to ``size x size x C``."""
    c = patch.shape[2]
    out = cv2.resize(patch, (size, size), interpolation=cv2.INTER_LINEAR)
    if out.ndim == 2:
        out = out[..., None]
    assert out.shape[2] == c
    return out


def extract_cube(video: FrameAccessor, det: Detection, l: int, size: int = CUBE_SIZE) -> ObjectCube | None:
    """Crop the detection box from the ``l`` frames around ``det.frame_index``.

    Returns None when the box is empty after clamping to the frame.
    """
    num_frames = len(video)
    if num_frames < 1:
        raise ValueError("video has no frames")
    indices = window_indices(det.frame_index, l, num_frames)
    first = video.frame(indices[0])
    px = clamp_box(det.box, first.shape[0], first.shape[1])
    if px is None:
        return None
    x1, y1, x2, y2 = px
    patches = np.empty((l, size, size, first.shape[2]), dtype=np.float32)
    for slot, idx in enumerate(indices):
        crop = video.frame(idx)[y1:y2, x1:x2].astype(np.float32) / 255.0
        patches[slot] = resize_patch(crop, size)
    np.clip(patches, 0.0, 1.0, out=patches)
    return ObjectCube(det.video_id, det.frame_index, patches, det.box)


def motion_energy(patches: np.ndarray) -> float:
    """Mean absolute difference between consecutive frames of a cube."""
    if len(patches) < 2:
        return 0.0
    return float(np.abs(np.diff(patches.astype(np.float32), axis=0)).mean())


def is_static(cube: ObjectCube | np.ndarray, eps: float = DEFAULT_STATIC_EPS) -> bool:
    patches = cube.patches if isinstance(cube, ObjectCube) else cube
    return motion_energy(patches) < eps


class CubeSet:
    """A collection of cubes held as uint8 arrays, with per-video metadata.

    Patches are quantised to 8 bits (``round(255 * x)``) to keep whole
    training sets in memory; ``cube(i)`` returns them as floats again.
    """

    def __init__(self, patches, video_ids, frames, boxes, videos):
        self.patches = np.asarray(patches, dtype=np.uint8)
        self.video_ids = np.asarray(video_ids, dtype=str)
        self.frames = np.asarray(frames, dtype=np.int64)
        self.boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        # video_id -> (num_frames, height, width)
        self.videos = {k: tuple(int(x) for x in v) for k, v in videos.items()}

    def __len__(self):
        return len(self.patches)

    @property
    def l(self) -> int:
        return self.patches.shape[1]

    def float_patches(self, index) -> np.ndarray:
        return self.patches[index].astype(np.float32) / 255.0

    def cube(self, i: int) -> ObjectCube:
        return ObjectCube(str(self.video_ids[i]), int(self.frames[i]),
                          self.float_patches(i), tuple(self.boxes[i]))

    def save(self, path: str | Path) -> None:
        np.savez_compressed(
            path,
            patches=self.patches,
            video_ids=self.video_ids,
            frames=self.frames,
            boxes=self.boxes,
            videos=json.dumps(self.videos),
        )

    @classmethod
    def load(cls, path: str | Path) -> "CubeSet":
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"cube file not found: {path}")
        with np.load(path) as z:
            videos = {k: tuple(v) for k, v in json.loads(str(z["videos"])).items()}
            return cls(z["patches"], z["video_ids"], z["frames"], z["boxes"], videos)


def extract_cubes(
    videos: dict[str, FrameAccessor],
    detections: Iterable[Detection],
    l: int,
    size: int = CUBE_SIZE,
    frame_stride: int = 1,
) -> CubeSet:
    """Extract cubes for every detection whose frame index is a multiple of ``frame_stride``."""
    patches, vids, frames, boxes = [], [], [], []
    skipped_unknown = set()
    for det in sorted(detections, key=lambda d: (d.video_id, d.frame_index, d.box)):
        if det.frame_index % frame_stride:
            continue
        video = videos.get(det.video_id)
        if video is None:
            skipped_unknown.add(det.video_id)
            continue
        if det.frame_index >= len(video):
            raise ValueError(f"detection frame {det.frame_index} beyond video "
                             f"{det.video_id} with {len(video)} frames")
        cube = extract_cube(video, det, l, size)
        if cube is None:
            continue
        patches.append(np.round(cube.patches * 255.0).astype(np.uint8))
        vids.append(det.video_id)
        frames.append(det.frame_index)
        boxes.append(det.box)
    if skipped_unknown:
        raise MissingArtifactError(f"detections reference unknown videos: {sorted(skipped_unknown)}")
    meta = {}
    for vid, video in videos.items():
        f0 = video.frame(0)
        meta[vid] = (len(video), f0.shape[0], f0.shape[1])
    channels = next(iter(videos.values())).frame(0).shape[2] if videos else 1
    arr = (np.stack(patches) if patches
           else np.zeros((0, l, size, size, channels), dtype=np.uint8))
    return CubeSet(arr, vids, frames, boxes, meta)
