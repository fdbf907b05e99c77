"""Frame-level AUROC, micro- and macro-averaged over videos."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.stats import rankdata

from .errors import MetricUndefinedError, MissingArtifactError

log = logging.getLogger(__name__)


def auroc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2).

    Computed from average ranks (Mann-Whitney U), O(N log N).
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"length mismatch: {scores.size} scores vs {labels.size} labels")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUROC needs both positive and negative frames")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def micro_auroc(scores: Mapping[str, np.ndarray], labels: Mapping[str, np.ndarray]) -> float:
    """AUROC over all frames of all videos concatenated."""
    if not scores:
        raise MetricUndefinedError("no videos to evaluate")
    vids = sorted(scores)
    _check_lengths(scores, labels, vids)
    return auroc(np.concatenate([scores[v] for v in vids]),
                 np.concatenate([labels[v] for v in vids]))


def per_video_auroc(scores, labels) -> dict[str, float]:
    """AUROC of every video that contains both classes; the rest are skipped with a warning."""
    vids = sorted(scores)
    _check_lengths(scores, labels, vids)
    out = {}
    for v in vids:
        y = np.asarray(labels[v])
        if y.min() == y.max():
            log.warning("video %s has a single class; excluded from macro AUROC", v)
            continue
        out[v] = auroc(scores[v], y)
    return out


def macro_auroc(scores: Mapping[str, np.ndarray], labels: Mapping[str, np.ndarray]) -> float:
    """Unweighted mean of per-video AUROCs."""
    per = per_video_auroc(scores, labels)
    if not per:
        raise MetricUndefinedError("no video has both normal and anomalous frames")
    return float(np.mean(list(per.values())))


def _check_lengths(scores, labels, vids):
    for v in vids:
        if v not in labels:
            raise MissingArtifactError(f"no ground truth for video {v}")
        if len(scores[v]) != len(labels[v]):
            raise ValueError(f"video {v}: {len(scores[v])} scores vs {len(labels[v])} labels")


def load_ground_truth(path) -> dict[str, np.ndarray]:
    """Read labels from a JSON manifest ``{video_id: [0, 1, ...]}`` or a directory of
    ``<video_id>.txt`` files with one 0/1 per line."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"ground truth not found: {path}")
    if path.is_dir():
        gt = {}
        for f in sorted(path.glob("*.txt")):
            gt[f.stem] = np.array([int(t) for t in f.read_text().split()], dtype=np.int64)
        if not gt:
            raise MissingArtifactError(f"no <video_id>.txt label files in {path}")
    else:
        gt = {k: np.asarray(v, dtype=np.int64) for k, v in json.loads(path.read_text()).items()}
    for v, y in gt.items():
        if not np.isin(y, (0, 1)).all():
            raise ValueError(f"ground truth for {v} contains values other than 0/1")
    return gt


def save_ground_truth(path, gt: Mapping[str, np.ndarray]) -> None:
    Path(path).write_text(json.dumps({k: [int(x) for x in v] for k, v in sorted(gt.items())}))


def evaluation_report(scores, labels) -> dict:
    """Micro, macro and per-video AUROC; a metric that cannot be defined is reported as None."""
    report = {"num_videos": len(scores), "num_frames": int(sum(len(s) for s in scores.values()))}
    try:
        report["micro_auroc"] = micro_auroc(scores, labels)
    except MetricUndefinedError:
        report["micro_auroc"] = None
    per = per_video_auroc(scores, labels)
    report["macro_auroc"] = float(np.mean(list(per.values()))) if per else None
    report["per_video_auroc"] = per
    return report
