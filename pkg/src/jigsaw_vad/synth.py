"""Synthetic surveillance-style videos with known anomalies.

Textured sprites slide left-to-right along horizontal lanes over a fixed
textured background.  Test videos contain one anomalous interval each:

* ``speed-up``      one sprite moves ``speedup_factor`` times faster
* ``reversed-path`` one sprite moves right-to-left
* ``erratic-jitter`` one sprite gets random per-frame displacements
* ``unseen-shape``  a sprite with a shape and texture never seen in training
  appears in a free lane and moves normally

The first three are motion-only (no single frame reveals them); the last is
appearance-only.  Detections are the exact sprite boxes with confidence 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import cv2
import numpy as np

from .evaluation import save_ground_truth
from .ingest import Detection, write_detections

ANOMALY_TYPES = ("speed-up", "reversed-path", "unseen-shape", "erratic-jitter")
MOTION_ANOMALIES = ("speed-up", "reversed-path", "erratic-jitter")
APPEARANCE_ANOMALIES = ("unseen-shape",)
SHAPES = ("square", "circle", "diamond", "cross", "ring")
TEXTURES = ("ramp_a", "ramp_b", "checker", "stripes")


@dataclass
class SynthSpec:
    seed: int = 0
    num_train_videos: int = 20
    num_test_videos: int = 8
    num_frames: int = 300
    frame_height: int = 240
    frame_width: int = 320
    num_lanes: int = 4
    sprites_per_video: int = 3
    sprite_size: int = 28
    normal_shapes: tuple[str, ...] = ("square", "circle")
    normal_textures: tuple[str, ...] = ("ramp_a", "ramp_b")
    unseen_shape: str = "cross"
    unseen_texture: str = "checker"
    speed_min: float = 1.0
    speed_max: float = 2.0
    anomaly_types: tuple[str, ...] = ANOMALY_TYPES
    anomaly_length: int = 40
    speedup_factor: float = 3.0
    jitter_px: float = 5.0

    def __post_init__(self):
        for name in ("normal_shapes", "normal_textures", "anomaly_types"):
            value = getattr(self, name)
            if isinstance(value, str):
                value = tuple(v.strip() for v in value.split(",") if v.strip())
            setattr(self, name, tuple(value))
        unknown = set(self.anomaly_types) - set(ANOMALY_TYPES)
        if unknown:
            raise ValueError(f"unknown anomaly types {sorted(unknown)}")
        for s in self.normal_shapes + (self.unseen_shape,):
            if s not in SHAPES:
                raise ValueError(f"unknown shape {s!r}; choose from {SHAPES}")
        for t in self.normal_textures + (self.unseen_texture,):
            if t not in TEXTURES:
                raise ValueError(f"unknown texture {t!r}; choose from {TEXTURES}")
        if self.unseen_shape in self.normal_shapes:
            raise ValueError("the unseen shape must not be a normal shape")
        if self.sprites_per_video >= self.num_lanes:
            raise ValueError("need at least one free lane for unseen-shape anomalies")
        if self.anomaly_length >= self.num_frames // 2:
            raise ValueError("anomaly_length must be shorter than half the video")
        if self.num_frames - self.anomaly_length - 4 * self.sprite_size < 1:
            raise ValueError("num_frames too short: anomalies keep 2*sprite_size frames from each end")
        travel = self.speedup_factor * self.speed_max * self.anomaly_length
        if travel > self.frame_width - self.sprite_size - 4:
            raise ValueError("a speed-up anomaly would leave the frame; shorten anomaly_length")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = ",".join(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        names = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(names)
        if unknown:
            raise ValueError(f"unknown synth keys {sorted(unknown)}")
        kwargs = {}
        for k, v in d.items():
            default = names[k].default
            if isinstance(default, bool) or isinstance(default, tuple) or isinstance(default, str):
                kwargs[k] = v
            elif isinstance(default, int):
                kwargs[k] = int(v)
            elif isinstance(default, float):
                kwargs[k] = float(v)
            else:
                kwargs[k] = v
        return cls(**kwargs)


def background(spec: SynthSpec) -> np.ndarray:
    """Static smooth texture in [0.2, 0.6], shared by every video of the scene."""
    rng = np.random.default_rng([spec.seed, 7919])
    coarse = rng.random((spec.frame_height // 16 + 2, spec.frame_width // 16 + 2)).astype(np.float32)
    bg = cv2.resize(coarse, (spec.frame_width, spec.frame_height), interpolation=cv2.INTER_CUBIC)
    fine = rng.random((spec.frame_height // 4, spec.frame_width // 4)).astype(np.float32)
    bg = 0.8 * bg + 0.2 * cv2.resize(fine, (spec.frame_width, spec.frame_height),
                                     interpolation=cv2.INTER_LINEAR)
    bg = (bg - bg.min()) / (bg.max() - bg.min())
    return 0.2 + 0.4 * bg


def shape_distance(shape: str, u: np.ndarray, v: np.ndarray, half: float) -> np.ndarray:
    """Signed distance in pixels (negative inside) of a shape centred at the origin."""
    au, av = np.abs(u), np.abs(v)
    if shape == "square":
        return np.maximum(au, av) - half
    if shape == "circle":
        return np.hypot(u, v) - half
    if shape == "diamond":
        return (au + av - half) / math.sqrt(2)
    if shape == "cross":
        arm = half / 3
        return np.minimum(np.maximum(au - half, av - arm), np.maximum(au - arm, av - half))
    if shape == "ring":
        return np.abs(np.hypot(u, v) - 0.7 * half) - 0.3 * half
    raise ValueError(shape)


def texture(name: str, u: np.ndarray, v: np.ndarray, half: float) -> np.ndarray:
    # coordinates scaled to [0, 1] across the sprite box
    a = (u / half + 1) / 2
    b = (v / half + 1) / 2
    if name == "ramp_a":
        return 0.05 + 0.6 * a + 0.3 * b
    if name == "ramp_b":
        return 0.95 - 0.3 * a - 0.6 * b
    if name == "checker":
        return np.where((np.floor(a * 4) + np.floor(b * 4)) % 2 == 0, 0.1, 0.9)
    if name == "stripes":
        return np.where(np.floor(b * 6) % 2 == 0, 0.15, 0.85)
    raise ValueError(name)


def draw_sprite(frame: np.ndarray, cx: float, cy: float, size: int, shape: str, tex: str) -> None:
    """Anti-aliased sprite drawn in place at sub-pixel centre ``(cx, cy)``."""
    half = size / 2
    h, w = frame.shape
    x0, x1 = max(0, int(math.floor(cx - half - 1))), min(w, int(math.ceil(cx + half + 1)))
    y0, y1 = max(0, int(math.floor(cy - half - 1))), min(h, int(math.ceil(cy + half + 1)))
    if x1 <= x0 or y1 <= y0:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float32)
    u, v = xx + 0.5 - cx, yy + 0.5 - cy
    alpha = np.clip(0.5 - shape_distance(shape, u, v, half), 0.0, 1.0)
    value = texture(tex, np.clip(u, -half, half), np.clip(v, -half, half), half)
    region = frame[y0:y1, x0:x1]
    region[:] = alpha * value + (1 - alpha) * region


@dataclass
class Sprite:
    shape: str
    texture: str
    lane: int
    speed: float
    xs: np.ndarray  # centre x per frame (nan = absent)
    ys: np.ndarray


def lane_y(spec: SynthSpec, lane: int) -> float:
    return spec.frame_height * (lane + 1) / (spec.num_lanes + 1)


def _normal_track(spec: SynthSpec, rng, speed: float, x_at: float, at: int) -> np.ndarray:
    """Wrapping left-to-right track passing ``x_at`` at frame ``at``."""
    half = spec.sprite_size / 2
    cycle = spec.frame_width + 2 * half
    t = np.arange(spec.num_frames)
    return np.mod(x_at + half + speed * (t - at), cycle) - half


def _video_sprites(spec: SynthSpec, rng: np.random.Generator, anomaly: str | None):
    half = spec.sprite_size / 2
    lanes = rng.permutation(spec.num_lanes)
    sprites = []
    for i in range(spec.sprites_per_video):
        speed = float(rng.uniform(spec.speed_min, spec.speed_max))
        xs = _normal_track(spec, rng, speed, float(rng.uniform(0, spec.frame_width)), 0)
        ys = np.full(spec.num_frames, lane_y(spec, int(lanes[i])), dtype=np.float64)
        sprites.append(Sprite(str(rng.choice(spec.normal_shapes)), str(rng.choice(spec.normal_textures)),
                              int(lanes[i]), speed, xs, ys))
    if anomaly is None:
        return sprites, None

    length = spec.anomaly_length
    margin = 2 * spec.sprite_size
    start = int(rng.integers(margin, spec.num_frames - length - margin))
    end = start + length
    event = {"type": anomaly, "start": start, "end": end}
    if anomaly == "unseen-shape":
        lane = int(lanes[spec.sprites_per_video])
        speed = float(rng.uniform(spec.speed_min, spec.speed_max))
        x_start = float(rng.uniform(half + 4, spec.frame_width - half - 4 - speed * length))
        xs = np.full(spec.num_frames, np.nan)
        xs[start:end] = x_start + speed * np.arange(length)
        ys = np.full(spec.num_frames, lane_y(spec, lane))
        sprites.append(Sprite(spec.unseen_shape, spec.unseen_texture, lane, speed, xs, ys))
        event.update(lane=lane, sprite=len(sprites) - 1)
        return sprites, event

    idx = int(rng.integers(spec.sprites_per_video))
    s = sprites[idx]
    left, right = half + 4, spec.frame_width - half - 4
    if anomaly == "speed-up":
        x_start = float(rng.uniform(left, right - spec.speedup_factor * s.speed * length))
        steps = np.full(length, spec.speedup_factor * s.speed)
    elif anomaly == "reversed-path":
        x_start = float(rng.uniform(left + s.speed * length, right))
        steps = np.full(length, -s.speed)
    else:  # erratic-jitter
        x_start = float(rng.uniform(left + spec.jitter_px * length ** 0.5,
                                    right - s.speed * length - spec.jitter_px * length ** 0.5))
        steps = s.speed + rng.uniform(-spec.jitter_px, spec.jitter_px, length)
    inside = np.concatenate([[x_start], x_start + np.cumsum(steps)[:-1]])
    inside = np.clip(inside, left, right)
    xs = _normal_track(spec, rng, s.speed, x_start, start)
    xs[start:end] = inside
    # resume the normal track from where the anomaly left the sprite
    xs[end:] = _normal_track(spec, rng, s.speed, inside[-1] + s.speed, end)[end:]
    if anomaly == "erratic-jitter":
        s.ys[start:end] += rng.uniform(-spec.jitter_px, spec.jitter_px, length)
    s.xs = xs
    event.update(lane=s.lane, sprite=idx)
    return sprites, event


def sprite_box(spec: SynthSpec, cx: float, cy: float):
    half = spec.sprite_size / 2
    return (cx - half, cy - half, cx + half, cy + half)


def fully_visible(spec: SynthSpec, cx: float, cy: float) -> bool:
    x1, y1, x2, y2 = sprite_box(spec, cx, cy)
    return x1 >= 0 and y1 >= 0 and x2 <= spec.frame_width and y2 <= spec.frame_height


def render_video(spec: SynthSpec, sprites: list[Sprite], bg: np.ndarray):
    """Yield ``(frame_uint8, boxes)`` per frame; boxes only for fully visible sprites."""
    for t in range(spec.num_frames):
        frame = bg.copy()
        boxes = []
        for s in sprites:
            cx, cy = s.xs[t], s.ys[t]
            if np.isnan(cx):
                continue
            draw_sprite(frame, cx, cy, spec.sprite_size, s.shape, s.texture)
            if fully_visible(spec, cx, cy):
                boxes.append(tuple(round(float(c), 3) for c in sprite_box(spec, cx, cy)))
        yield np.round(np.clip(frame, 0, 1) * 255).astype(np.uint8), boxes


def write_spec(path, spec: SynthSpec) -> None:
    lines = [f"{k} = {v}" for k, v in spec.to_dict().items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_spec(path) -> SynthSpec:
    d = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            k, _, v = line.partition("=")
            d[k.strip()] = v.strip()
    return SynthSpec.from_dict(d)


def generate(spec: SynthSpec, out_dir) -> dict:
    """Write frames, detections and ground truth for both splits under ``out_dir``.

    Layout::

        spec.txt
        train/frames/<video_id>/000000.png ...   train/detections.jsonl
        test/frames/<video_id>/000000.png ...    test/detections.jsonl
        test/ground_truth.json                   test/anomalies.json
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_spec(out_dir / "spec.txt", spec)
    bg = background(spec)
    summary = {"train": [], "test": []}
    events = {}
    gt = {}
    for split, count in (("train", spec.num_train_videos), ("test", spec.num_test_videos)):
        split_dir = out_dir / split
        split_dir.mkdir(exist_ok=True)
        dets = []
        for i in range(count):
            vid = f"{split}_{i:03d}"
            rng = np.random.default_rng([spec.seed, 0 if split == "train" else 1, i])
            anomaly = None
            if split == "test" and spec.anomaly_types:
                anomaly = spec.anomaly_types[i % len(spec.anomaly_types)]
            sprites, event = _video_sprites(spec, rng, anomaly)
            frame_dir = split_dir / "frames" / vid
            frame_dir.mkdir(parents=True, exist_ok=True)
            for t, (frame, boxes) in enumerate(render_video(spec, sprites, bg)):
                if not cv2.imwrite(str(frame_dir / f"{t:06d}.png"), frame):
                    raise OSError(f"cannot write frame to {frame_dir}")
                dets.extend(Detection(vid, t, box, 1.0) for box in boxes)
            if split == "test":
                labels = np.zeros(spec.num_frames, dtype=np.int64)
                if event is not None:
                    labels[event["start"]:event["end"]] = 1
                    events[vid] = event
                gt[vid] = labels
            summary[split].append(vid)
        write_detections(split_dir / "detections.jsonl", dets)
    save_ground_truth(out_dir / "test" / "ground_truth.json", gt)
    (out_dir / "test" / "anomalies.json").write_text(json.dumps(events, indent=1, sort_keys=True))
    return summary
