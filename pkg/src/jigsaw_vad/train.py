"""Mixed-batch training loop, checkpoints and metrics log."""

from __future__ import annotations

import csv
import logging
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigurationError, MissingArtifactError
from .ingest import DEFAULT_STATIC_EPS, CubeSet
from .net import JigsawSolver, SolverConfig, element_accuracy, mixed_batch_loss, to_tensor
from .permute import save_permutations, select_hamming_subset
from .puzzle import build_batch, stack

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "loss_total", "loss_t", "loss_s", "acc_t", "acc_s")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 192
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    r: float = 0.5
    zeta: float = 1e-4
    static_eps: float = DEFAULT_STATIC_EPS
    seed: int = 0
    device: str = "cpu"
    # 0 = use every cube each epoch
    max_cubes_per_epoch: int = 0
    # 0 = full permutation set; otherwise a Hamming-selected subset of this size
    num_temporal_perms: int = 0
    num_spatial_perms: int = 0
    hamming_pool_size: int = 10_000


@dataclass
class TrainResult:
    model: JigsawSolver
    history: list[dict] = field(default_factory=list)


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)
    if torch.backends.cudnn.is_available():
        torch.backends.cudnn.deterministic = True
        torch.backends.cudnn.benchmark = False


def resolve_device(name: str) -> torch.device:
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(name)


def save_checkpoint(path, model: JigsawSolver, seed: int, epoch: int) -> None:
    torch.save({"state_dict": model.state_dict(), "solver_config": model.cfg.to_dict(),
                "seed": seed, "epoch": epoch}, path)


def load_checkpoint(path, device="cpu") -> tuple[JigsawSolver, dict]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"checkpoint not found: {path}")
    ckpt = torch.load(path, map_location=device, weights_only=True)
    cfg = SolverConfig(**ckpt["solver_config"])
    model = JigsawSolver(cfg).to(device)
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model, ckpt


def write_metrics(path, history: list[dict]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for row in history:
            writer.writerow([row["epoch"]] + [f"{row[c]:.6f}" for c in METRIC_COLUMNS[1:]])


def _mean(values):
    values = [v for v in values if not math.isnan(v)]
    return float(np.mean(values)) if values else float("nan")


def train(cubes: CubeSet, solver_cfg: SolverConfig, cfg: TrainConfig, out_dir=None) -> TrainResult:
    """Train a solver on ``cubes``; a fresh permutation is drawn for every cube every epoch.

    With ``out_dir`` set, writes ``checkpoint.pt`` after each epoch and
    ``metrics.csv`` with one row per epoch.
    """
    if len(cubes) == 0:
        raise ConfigurationError("training set is empty: no cubes were extracted")
    if cubes.l != solver_cfg.l:
        raise ConfigurationError(f"cubes have l={cubes.l} but the solver expects l={solver_cfg.l}")

    seed_everything(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    device = resolve_device(cfg.device)
    model = JigsawSolver(solver_cfg).to(device)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    temporal_perms = spatial_perms = None
    if cfg.num_temporal_perms:
        temporal_perms = select_hamming_subset(solver_cfg.l, cfg.num_temporal_perms, rng,
                                               cfg.hamming_pool_size)
    if cfg.num_spatial_perms:
        spatial_perms = select_hamming_subset(solver_cfg.n ** 2, cfg.num_spatial_perms, rng,
                                              cfg.hamming_pool_size)
    if out_dir is not None:
        if temporal_perms:
            save_permutations(out_dir / "temporal_perms.txt", temporal_perms)
        if spatial_perms:
            save_permutations(out_dir / "spatial_perms.txt", spatial_perms)

    result = TrainResult(model)
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        start = time.perf_counter()
        order = rng.permutation(len(cubes))
        if cfg.max_cubes_per_epoch:
            order = order[: cfg.max_cubes_per_epoch]
        losses, loss_t, loss_s, acc_t, acc_s = [], [], [], [], []
        n_t = n_s = n_in = 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = np.sort(order[lo: lo + cfg.batch_size])
            batch = list(cubes.float_patches(idx))
            q_t, q_s = build_batch(batch, cfg.r, cfg.zeta, solver_cfg.l, solver_cfg.n, rng,
                                   cfg.static_eps, spatial_perms, temporal_perms)
            n_in += len(batch)
            n_t += len(q_t)
            n_s += len(q_s)
            if not q_t and not q_s:
                continue
            x_t = y_t = x_s = y_s = None
            if q_t:
                xt, yt = stack(q_t)
                x_t, y_t = to_tensor(xt, device), torch.from_numpy(yt).to(device)
            if q_s:
                xs, ys = stack(q_s)
                x_s, y_s = to_tensor(xs, device), torch.from_numpy(ys).to(device)
            loss, parts = mixed_batch_loss(model, x_t, y_t, x_s, y_s)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            losses.append(loss.item())
            if q_t:
                loss_t.append(parts["loss_t"].item())
                acc_t.append(element_accuracy(parts["logits_t"].detach(), y_t))
            if q_s:
                loss_s.append(parts["loss_s"].item())
                acc_s.append(element_accuracy(parts["logits_s"].detach(), y_s))
        row = {
            "epoch": epoch,
            "loss_total": _mean(losses),
            "loss_t": _mean(loss_t),
            "loss_s": _mean(loss_s),
            "acc_t": _mean(acc_t),
            "acc_s": _mean(acc_s),
            "cubes": n_in,
            "n_temporal": n_t,
            "n_spatial": n_s,
            "seconds": time.perf_counter() - start,
        }
        result.history.append(row)
        log.info("epoch %d loss %.4f (t %.4f s %.4f) acc t %.3f s %.3f [%d t / %d s] %.1fs",
                 epoch, row["loss_total"], row["loss_t"], row["loss_s"], row["acc_t"],
                 row["acc_s"], n_t, n_s, row["seconds"])
        if out_dir is not None:
            save_checkpoint(out_dir / "checkpoint.pt", model, cfg.seed, epoch)
            write_metrics(out_dir / "metrics.csv", result.history)
    model.eval()
    return result
