import csv

import numpy as np
import pytest
import torch

from jigsaw_vad.errors import ConfigurationError, MissingArtifactError
from jigsaw_vad.ingest import CubeSet
from jigsaw_vad.net import SolverConfig
from jigsaw_vad.permute import load_permutations
from jigsaw_vad.train import TrainConfig, load_checkpoint, train

TINY = SolverConfig(widths=(4, 4, 4, 4, 4, 4), hidden=16)


def random_cubeset(n, seed=0, l=7):
    rng = np.random.default_rng(seed)
    patches = rng.integers(0, 256, (n, l, 64, 64, 1), dtype=np.uint8)
    return CubeSet(patches, ["v"] * n, np.arange(n), np.tile([0, 0, 10, 10], (n, 1)), {"v": (n, 64, 64)})


def test_two_epoch_smoke_writes_artifacts(tmp_path):
    cubes = random_cubeset(16)
    cfg = TrainConfig(epochs=2, batch_size=8, lr=3e-3, seed=0)
    result = train(cubes, TINY, cfg, tmp_path)
    assert [r["epoch"] for r in result.history] == [1, 2]
    assert all(np.isfinite(r["loss_total"]) for r in result.history)
    rows = list(csv.DictReader((tmp_path / "metrics.csv").open()))
    assert [int(r["epoch"]) for r in rows] == [1, 2]
    model, ckpt = load_checkpoint(tmp_path / "checkpoint.pt")
    assert ckpt["epoch"] == 2 and model.cfg == TINY
    for a, b in zip(model.state_dict().values(), result.model.state_dict().values()):
        assert torch.equal(a, b)


def test_loss_decreases_on_repeated_cubes():
    cubes = random_cubeset(8, seed=1)
    cfg = TrainConfig(epochs=25, batch_size=8, lr=3e-3, seed=0)
    hist = train(cubes, TINY, cfg).history
    assert np.mean([h["loss_total"] for h in hist[-5:]]) < np.mean([h["loss_total"] for h in hist[:5]])


def test_same_seed_same_curve():
    cubes = random_cubeset(12, seed=2)
    cfg = TrainConfig(epochs=2, batch_size=6, lr=1e-3, seed=7)
    a = [h["loss_total"] for h in train(cubes, TINY, cfg).history]
    b = [h["loss_total"] for h in train(cubes, TINY, cfg).history]
    assert a == b


def test_batch_composition_follows_r():
    cubes = random_cubeset(400, seed=3)
    cfg = TrainConfig(epochs=1, batch_size=400, lr=1e-3, seed=0, r=0.25)
    row = train(cubes, SolverConfig(widths=(2,) * 6, hidden=4), cfg).history[0]
    assert row["n_spatial"] + row["n_temporal"] == 400
    # binomial sd at n=400, p=0.25 is about 0.022
    assert abs(row["n_spatial"] / 400 - 0.25) < 0.07


def test_empty_and_mismatched_sets_rejected():
    with pytest.raises(ConfigurationError):
        train(random_cubeset(0), TINY, TrainConfig(epochs=1))
    with pytest.raises(ConfigurationError):
        train(random_cubeset(4, l=5), TINY, TrainConfig(epochs=1))


def test_hamming_subsets_are_used_and_saved(tmp_path):
    cubes = random_cubeset(8, seed=4)
    cfg = TrainConfig(epochs=1, batch_size=8, seed=0, num_temporal_perms=10, num_spatial_perms=12,
                      hamming_pool_size=500)
    train(cubes, TINY, cfg, tmp_path)
    assert len(load_permutations(tmp_path / "temporal_perms.txt")) == 10
    assert len(load_permutations(tmp_path / "spatial_perms.txt")) == 12


def test_missing_checkpoint(tmp_path):
    with pytest.raises(MissingArtifactError):
        load_checkpoint(tmp_path / "nope.pt")
