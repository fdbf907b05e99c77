"""Two-headed jigsaw solver: shared 3D conv backbone, spatial and temporal heads."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .puzzle import model_side

REFERENCE_WIDTHS = (32, 32, 64, 64, 64, 64)


@dataclass(frozen=True)
class SolverConfig:
    l: int = 7
    n: int = 3
    widths: tuple[int, ...] = REFERENCE_WIDTHS
    # the 2D conv width is not given; 0 means "reuse the last 3D width"
    conv2d_width: int = 0
    dropout: float = 0.3
    hidden: int = 512
    cube_size: int = 64

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) != 6:
            raise ValueError(f"expected 6 channel widths, got {self.widths}")

    @property
    def side(self) -> int:
        return model_side(self.n, self.cube_size)

    @property
    def k_temporal(self) -> int:
        return self.l

    @property
    def k_spatial(self) -> int:
        return self.n * self.n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d


def _conv3d(cin, cout):
    return [nn.Conv3d(cin, cout, 3, padding=1), nn.InstanceNorm3d(cout), nn.ReLU(inplace=True)]


class JigsawSolver(nn.Module):
    """Backbone of three 3D blocks and one 2D block, then two disjoint fc heads.

    Input is ``B x 3 x l x S x S``.  Each head returns logits shaped
    ``B x k x k`` where dim 1 indexes the original position and dim 2 the
    element (slot), i.e. softmax over dim 1 gives one distribution per column.
    """

    def __init__(self, cfg: SolverConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.widths
        c2d = cfg.conv2d_width or w[5]
        self.block3d = nn.Sequential(
            *_conv3d(3, w[0]), *_conv3d(w[0], w[1]), nn.MaxPool3d((1, 2, 2)),
            *_conv3d(w[1], w[2]), *_conv3d(w[2], w[3]), nn.MaxPool3d((1, 2, 2)),
            *_conv3d(w[3], w[4]), *_conv3d(w[4], w[5]), nn.MaxPool3d((cfg.l, 2, 2)),
        )
        self.block2d = nn.Sequential(
            nn.Conv2d(w[5], c2d, 3, padding=1), nn.InstanceNorm2d(c2d), nn.ReLU(inplace=True),
            nn.Dropout2d(cfg.dropout), nn.MaxPool2d(2),
        )
        s = cfg.side
        for _ in range(4):
            s //= 2
        if s < 1:
            raise ValueError(f"input side {cfg.side} too small for the backbone")
        flat = c2d * s * s
        self.head_t = nn.Sequential(nn.Linear(flat, cfg.hidden), nn.ReLU(inplace=True),
                                    nn.Linear(cfg.hidden, cfg.k_temporal ** 2))
        self.head_s = nn.Sequential(nn.Linear(flat, cfg.hidden), nn.ReLU(inplace=True),
                                    nn.Linear(cfg.hidden, cfg.k_spatial ** 2))

    def features(self, x: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        expect = (3, cfg.l, cfg.side, cfg.side)
        if x.ndim != 5 or tuple(x.shape[1:]) != expect:
            raise ValueError(f"expected input B x {' x '.join(map(str, expect))}, got {tuple(x.shape)}")
        h = self.block3d(x).squeeze(2)
        return torch.flatten(self.block2d(h), 1)

    def temporal_logits(self, feats: torch.Tensor) -> torch.Tensor:
        k = self.cfg.k_temporal
        return self.head_t(feats).view(-1, k, k)

    def spatial_logits(self, feats: torch.Tensor) -> torch.Tensor:
        k = self.cfg.k_spatial
        return self.head_s(feats).view(-1, k, k)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        feats = self.features(x)
        return self.temporal_logits(feats), self.spatial_logits(feats)


def to_tensor(inputs: np.ndarray, device="cpu") -> torch.Tensor:
    """``B x l x S x S x C`` arrays in [0, 1] to ``B x 3 x l x S x S``; 1 channel is replicated."""
    x = torch.from_numpy(np.ascontiguousarray(inputs, dtype=np.float32)).to(device)
    x = x.permute(0, 4, 1, 2, 3)
    if x.shape[1] == 1:
        x = x.expand(-1, 3, -1, -1, -1)
    elif x.shape[1] != 3:
        raise ValueError(f"expected 1 or 3 channels, got {x.shape[1]}")
    return x.contiguous()


def prediction_matrix(logits: torch.Tensor) -> torch.Tensor:
    """Column-wise softmax: column i is the position distribution of element i."""
    return torch.softmax(logits, dim=-2)


def jigsaw_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Per-sample loss: mean over the k elements of the cross-entropy of each column."""
    return F.cross_entropy(logits, labels, reduction="none").mean(dim=1)


def element_accuracy(logits: torch.Tensor, labels: torch.Tensor) -> float:
    if logits.numel() == 0:
        return float("nan")
    return (logits.argmax(dim=1) == labels).float().mean().item()


def mixed_batch_loss(model: JigsawSolver, x_t, y_t, x_s, y_s):
    """Run Q_t and Q_s through the shared backbone; each reaches only its own head.

    Returns ``(loss, parts)`` where ``loss`` is the mean per-sample loss over
    the whole mixed batch and ``parts`` holds per-head losses and logits.
    """
    n_t = 0 if x_t is None else len(x_t)
    n_s = 0 if x_s is None else len(x_s)
    if n_t + n_s == 0:
        raise ValueError("empty mini-batch")
    x = torch.cat([v for v in (x_t, x_s) if v is not None and len(v)])
    feats = model.features(x)
    per_sample = []
    parts = {}
    if n_t:
        logits_t = model.temporal_logits(feats[:n_t])
        lt = jigsaw_loss(logits_t, y_t)
        per_sample.append(lt)
        parts["loss_t"], parts["logits_t"] = lt.mean(), logits_t
    if n_s:
        logits_s = model.spatial_logits(feats[n_t:])
        ls = jigsaw_loss(logits_s, y_s)
        per_sample.append(ls)
        parts["loss_s"], parts["logits_s"] = ls.mean(), logits_s
    return torch.cat(per_sample).mean(), parts
