"""Regularity scoring: object scores from prediction diagonals up to smoothed frame scores."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from scipy.ndimage import uniform_filter

from .errors import MissingArtifactError
from .ingest import CubeSet
from .net import JigsawSolver, prediction_matrix, to_tensor
from .puzzle import to_model_frames

DEFAULT_W = 0.5
DEFAULT_SIGMA = 3.0
DEFAULT_KERNEL = (7, 15, 15)
DEFAULT_DOWNSAMPLE = 4
SCORE_COLUMNS = ("frame_index", "R_s", "R_t", "R", "anomaly_score")


@dataclass
class ScoreConfig:
    w: float = DEFAULT_W
    sigma: float = DEFAULT_SIGMA
    kernel: tuple[int, int, int] = DEFAULT_KERNEL
    downsample: int = DEFAULT_DOWNSAMPLE
    batch_size: int = 64


def object_regularity(m) -> float:
    """Minimum diagonal entry of a prediction matrix."""
    m = m.detach().cpu().numpy() if isinstance(m, torch.Tensor) else np.asarray(m)
    return float(np.diagonal(m, axis1=-2, axis2=-1).min())


@torch.no_grad()
def score_objects(model: JigsawSolver, cubes: CubeSet, batch_size: int = 64,
                  device="cpu") -> tuple[np.ndarray, np.ndarray]:
    """Spatial and temporal regularity of every unshuffled cube, one forward pass each."""
    model.eval()
    side = model.cfg.side
    r_s = np.empty(len(cubes))
    r_t = np.empty(len(cubes))
    for lo in range(0, len(cubes), batch_size):
        idx = np.arange(lo, min(lo + batch_size, len(cubes)))
        frames = np.stack([to_model_frames(p, side) for p in cubes.float_patches(idx)])
        logits_t, logits_s = model(to_tensor(frames, device))
        diag_t = torch.diagonal(prediction_matrix(logits_t), dim1=-2, dim2=-1)
        diag_s = torch.diagonal(prediction_matrix(logits_s), dim1=-2, dim2=-1)
        r_t[idx] = diag_t.min(dim=1).values.double().cpu().numpy()
        r_s[idx] = diag_s.min(dim=1).values.double().cpu().numpy()
    return r_s, r_t


def regularity_maps(objects: Mapping[int, Sequence] | Sequence[Sequence], num_frames: int,
                    frame_shape: tuple[int, int], downsample: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame maps at 1/``downsample`` resolution; each box takes the min of its objects' scores.

    ``objects[f]`` is a list of ``(box, r_s, r_t)`` for frame ``f``.  Pixels
    not covered by any box stay at 1.0.
    """
    h = math.ceil(frame_shape[0] / downsample)
    w = math.ceil(frame_shape[1] / downsample)
    map_s = np.ones((num_frames, h, w))
    map_t = np.ones((num_frames, h, w))
    items = objects.items() if isinstance(objects, Mapping) else enumerate(objects)
    for f, objs in items:
        for box, rs, rt in objs:
            x1 = max(0, math.floor(box[0] / downsample))
            y1 = max(0, math.floor(box[1] / downsample))
            x2 = min(w, math.ceil(box[2] / downsample))
            y2 = min(h, math.ceil(box[3] / downsample))
            if x2 <= x1 or y2 <= y1:
                continue
            np.minimum(map_s[f, y1:y2, x1:x2], rs, out=map_s[f, y1:y2, x1:x2])
            np.minimum(map_t[f, y1:y2, x1:x2], rt, out=map_t[f, y1:y2, x1:x2])
    return map_s, map_t


def mean_filter_3d(volume: np.ndarray, kernel: Sequence[int]) -> np.ndarray:
    """Box average over (time, height, width); borders replicate the edge values."""
    return uniform_filter(volume, size=tuple(int(k) for k in kernel), mode="nearest")


def frame_regularity(objects, num_frames: int, frame_shape: tuple[int, int],
                     kernel: Sequence[int] = DEFAULT_KERNEL,
                     downsample: int = DEFAULT_DOWNSAMPLE) -> tuple[np.ndarray, np.ndarray]:
    """Frame-level (R_s, R_t): the minimum of the mean-filtered regularity map of each frame."""
    map_s, map_t = regularity_maps(objects, num_frames, frame_shape, downsample)
    if any(int(k) > 1 for k in kernel):
        map_s = mean_filter_3d(map_s, kernel)
        map_t = mean_filter_3d(map_t, kernel)
    return map_s.min(axis=(1, 2)), map_t.min(axis=(1, 2))


def normalize_per_video(scores) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant vector maps to all zeros."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("cannot normalise an empty score vector")
    lo, hi = scores.min(), scores.max()
    if hi - lo <= 0:
        return np.zeros_like(scores)
    return (scores - lo) / (hi - lo)


def gaussian_kernel1d(sigma: float, truncate: float = 4.0) -> np.ndarray:
    if sigma <= 0:
        return np.ones(1)
    radius = int(truncate * sigma + 0.5)
    x = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(x, sigma: float, truncate: float = 4.0) -> np.ndarray:
    """1-D Gaussian filter with reflective borders (``d c b a | a b c d``)."""
    x = np.asarray(x, dtype=np.float64)
    k = gaussian_kernel1d(sigma, truncate)
    r = len(k) // 2
    if r == 0:
        return x.copy()
    return np.convolve(np.pad(x, r, mode="symmetric"), k, mode="valid")


def fuse_and_smooth(r_s, r_t, w: float = DEFAULT_W, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    r_s = np.asarray(r_s, dtype=np.float64)
    r_t = np.asarray(r_t, dtype=np.float64)
    if r_s.shape != r_t.shape:
        raise ValueError(f"length mismatch: {r_s.shape} vs {r_t.shape}")
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"w must be in [0, 1], got {w}")
    return gaussian_smooth(w * r_s + (1.0 - w) * r_t, sigma)


@dataclass
class ScoreTimeline:
    video_id: str
    r_s_frames: np.ndarray  # normalised
    r_t_frames: np.ndarray  # normalised
    fused: np.ndarray  # smoothed regularity

    @property
    def anomaly(self) -> np.ndarray:
        return 1.0 - self.fused

    def refuse(self, w: float, sigma: float) -> "ScoreTimeline":
        return ScoreTimeline(self.video_id, self.r_s_frames, self.r_t_frames,
                             fuse_and_smooth(self.r_s_frames, self.r_t_frames, w, sigma))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SCORE_COLUMNS)
            for i, row in enumerate(zip(self.r_s_frames, self.r_t_frames, self.fused, self.anomaly)):
                writer.writerow([i] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "ScoreTimeline":
        path = Path(path)
        cols = {c: [] for c in SCORE_COLUMNS}
        with path.open() as fh:
            for row in csv.DictReader(fh):
                for c in SCORE_COLUMNS:
                    cols[c].append(float(row[c]))
        return cls(path.stem, np.array(cols["R_s"]), np.array(cols["R_t"]), np.array(cols["R"]))


def timeline_for_video(video_id: str, objects, num_frames: int, frame_shape, cfg: ScoreConfig) -> ScoreTimeline:
    raw_s, raw_t = frame_regularity(objects, num_frames, frame_shape, cfg.kernel, cfg.downsample)
    r_s, r_t = normalize_per_video(raw_s), normalize_per_video(raw_t)
    return ScoreTimeline(video_id, r_s, r_t, fuse_and_smooth(r_s, r_t, cfg.w, cfg.sigma))


def score_videos(cubes: CubeSet, r_s: np.ndarray, r_t: np.ndarray, cfg: ScoreConfig) -> dict[str, ScoreTimeline]:
    """Assemble per-object scores into one timeline per video in ``cubes.videos``."""
    per_video: dict[str, dict[int, list]] = {vid: {} for vid in cubes.videos}
    for i in range(len(cubes)):
        vid = str(cubes.video_ids[i])
        per_video[vid].setdefault(int(cubes.frames[i]), []).append(
            (tuple(cubes.boxes[i]), float(r_s[i]), float(r_t[i])))
    out = {}
    for vid in sorted(cubes.videos):
        num_frames, h, w = cubes.videos[vid]
        out[vid] = timeline_for_video(vid, per_video[vid], num_frames, (h, w), cfg)
    return out


def write_object_scores(path, cubes: CubeSet, r_s, r_t) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("video_id", "frame_index", "x1", "y1", "x2", "y2", "r_s", "r_t"))
        for i in range(len(cubes)):
            writer.writerow([cubes.video_ids[i], int(cubes.frames[i])]
                            + [repr(float(v)) for v in cubes.boxes[i]]
                            + [repr(float(r_s[i])), repr(float(r_t[i]))])


def read_score_dir(path) -> dict[str, np.ndarray]:
    """Anomaly scores per video from a directory of per-video score CSVs."""
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else []
    files = [f for f in files if f.name != "objects.csv"]
    if not files:
        raise MissingArtifactError(f"no per-video score CSVs in {path}")
    return {f.stem: ScoreTimeline.from_csv(f).anomaly for f in files}
