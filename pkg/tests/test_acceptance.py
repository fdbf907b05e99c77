"""Acceptance suite: one group of tests per criterion, summarised after the run."""

import itertools
import json
import math
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
import torch
from scipy import stats

from jigsaw_vad import permute
from jigsaw_vad.cli import run
from jigsaw_vad.config import RunConfig
from jigsaw_vad.evaluation import auroc, load_ground_truth, micro_auroc
from jigsaw_vad.ingest import CubeSet, extract_cubes, is_static, load_detections, open_videos
from jigsaw_vad.net import (
    REFERENCE_WIDTHS,
    JigsawSolver,
    SolverConfig,
    element_accuracy,
    jigsaw_loss,
    mixed_batch_loss,
    to_tensor,
)
from jigsaw_vad.puzzle import build_batch, stack
from jigsaw_vad.score import ScoreTimeline, fuse_and_smooth, normalize_per_video, object_regularity
from jigsaw_vad.synth import APPEARANCE_ANOMALIES, MOTION_ANOMALIES, SynthSpec, generate
from jigsaw_vad.train import TrainConfig, seed_everything, train

CANONICAL = Path(__file__).resolve().parents[1] / "configs" / "canonical.cfg"


def c(number, title):
    return pytest.mark.criterion(number, title)


# ---------------------------------------------------------------- 1
C1 = c(1, "permutation suite")


@C1
def test_c1_permutation_suite_under_30s():
    start = time.perf_counter()
    for k in range(1, 8):
        expected = list(itertools.permutations(range(k)))
        got = [permute.unrank(k, r).elems for r in range(math.factorial(k))]
        assert got == expected
        assert all(permute.rank(permute.Permutation(p)) == r for r, p in enumerate(expected))

    rng = np.random.default_rng(11)
    for _ in range(1000):
        k = int(rng.integers(1, 13))
        p = permute.sample_uniform(k, rng)
        seq = list(rng.integers(0, 1000, k))
        assert permute.apply(permute.invert(p), permute.apply(p, seq)) == seq
        assert permute.apply(p, permute.apply(permute.invert(p), seq)) == seq

    for k in (2, 3, 4):
        n_draws = 2000 * math.factorial(k)
        counts = Counter(permute.rank(permute.sample_uniform(k, rng)) for _ in range(n_draws))
        observed = [counts.get(r, 0) for r in range(math.factorial(k))]
        assert stats.chisquare(observed).pvalue > 0.01, k
    assert time.perf_counter() - start < 30


# ---------------------------------------------------------------- 2
C2 = c(2, "factorial and head sizes")


@C2
def test_c2_factorials_and_head_sizes():
    assert math.factorial(7) * math.factorial(9) == 1_828_915_200
    assert math.factorial(9) == 362_880
    for l in (7, 9):
        model = JigsawSolver(SolverConfig(l=l, n=3, widths=REFERENCE_WIDTHS)).eval()
        with torch.no_grad():
            t, s = model(torch.zeros(2, 3, l, 63, 63))
        assert tuple(t.shape) == (2, l, l)
        assert tuple(s.shape) == (2, 9, 9)
        # outputs grow quadratically while the label space grows factorially
        assert model.head_t[-1].out_features == l ** 2
        assert model.head_s[-1].out_features == 9 ** 2
        assert l ** 2 < math.factorial(l)


# ---------------------------------------------------------------- 3
C3 = c(3, "loss analytics")


@C3
@pytest.mark.parametrize("k", [4, 7, 9])
def test_c3_uniform_and_one_hot_loss(k):
    labels = torch.stack([torch.randperm(k) for _ in range(3)])
    uniform = torch.zeros(3, k, k, dtype=torch.float64)
    assert torch.allclose(jigsaw_loss(uniform, labels), torch.full((3,), math.log(k), dtype=torch.float64),
                          atol=1e-6, rtol=0)
    one_hot = torch.full((3, k, k), -1e3, dtype=torch.float64)
    one_hot.scatter_(1, labels.unsqueeze(1), 1e3)
    assert jigsaw_loss(one_hot, labels).max().item() <= 1e-6


@C3
def test_c3_gradient_matches_central_differences():
    torch.manual_seed(0)
    k = 3
    features = torch.randn(2, 5, dtype=torch.float64)
    weight = torch.randn(k * k, 5, dtype=torch.float64, requires_grad=True)
    labels = torch.tensor([[2, 0, 1], [0, 1, 2]])

    def loss_of(w):
        return jigsaw_loss((features @ w.T).view(2, k, k), labels).mean()

    loss_of(weight).backward()
    analytic = weight.grad.clone()
    numeric = torch.zeros_like(weight)
    h = 1e-6
    with torch.no_grad():
        for idx in itertools.product(*map(range, weight.shape)):
            plus, minus = weight.clone(), weight.clone()
            plus[idx] += h
            minus[idx] -= h
            numeric[idx] = (loss_of(plus) - loss_of(minus)) / (2 * h)
    rel = (analytic - numeric).norm() / numeric.norm()
    assert rel.item() < 1e-4


# ---------------------------------------------------------------- 4
C4 = c(4, "batch construction statistics")


@pytest.fixture(scope="module")
def million_cube_stats():
    # 3x3 frames give 1-pixel grid cells, so a million cubes stay cheap
    rng = np.random.default_rng(2024)
    identity = np.arange(9)
    n_cubes = n_spatial = n_identity = n_temporal = 0
    for _ in range(20):
        cubes = list(rng.random((50_000, 7, 3, 3, 1)).astype(np.float32))
        q_t, q_s = build_batch(cubes, r=0.5, zeta=1e-4, l=7, n=3, rng=rng)
        n_cubes += len(cubes)
        n_temporal += len(q_t)
        n_spatial += len(q_s)
        n_identity += sum(np.array_equal(s.labels, identity) for s in q_s)
    return n_cubes, n_spatial, n_temporal, n_identity


@C4
def test_c4_spatial_fraction(million_cube_stats):
    n_cubes, n_spatial, n_temporal, _ = million_cube_stats
    assert n_cubes >= 100_000
    assert n_spatial + n_temporal == n_cubes  # random cubes are never static
    assert 0.49 <= n_spatial / n_cubes <= 0.51


@C4
def test_c4_identity_fraction_binomial(million_cube_stats):
    _, n_spatial, _, n_identity = million_cube_stats
    # identity comes from the zeta branch or, rarely, from a uniform draw
    p_null = 1e-4 / 0.5 + (1 - 1e-4 / 0.5) / math.factorial(9)
    assert stats.binomtest(n_identity, n_spatial, p_null).pvalue > 0.01
    # and the count is clearly incompatible with no zeta branch at all
    assert stats.binomtest(n_identity, n_spatial, 1 / math.factorial(9)).pvalue < 1e-6


@C4
def test_c4_static_cubes_never_temporal():
    rng = np.random.default_rng(5)
    static = [np.full((7, 3, 3, 1), 0.4, dtype=np.float32)] * 20_000
    assert is_static(static[0])
    q_t, q_s = build_batch(static, r=0.5, zeta=1e-4, l=7, n=3, rng=rng)
    assert q_t == []
    assert 0.48 < len(q_s) / len(static) < 0.52
    q_t, q_s = build_batch(static, r=0.0, zeta=0.0, l=7, n=3, rng=rng)
    assert q_t == [] and q_s == []


# ---------------------------------------------------------------- 5
C5 = c(5, "overfit one batch")


@pytest.fixture(scope="module")
def synth_train_cubes(tmp_path_factory):
    root = tmp_path_factory.mktemp("overfit")
    spec = SynthSpec(seed=3, num_train_videos=2, num_test_videos=0, num_frames=140, anomaly_length=20)
    generate(spec, root)
    videos = open_videos(root / "train" / "frames")
    dets = load_detections(root / "train" / "detections.jsonl", 0.5)
    return extract_cubes(videos, dets, 7, frame_stride=4)


def overfit_solvers():
    canonical = RunConfig.load(CANONICAL).solver_config()
    # the full-width probe runs without dropout, as usual for a memorisation check
    reference = SolverConfig(widths=REFERENCE_WIDTHS, dropout=0.0)
    return [pytest.param(canonical, id="canonical"), pytest.param(reference, id="reference-widths")]


@C5
@pytest.mark.parametrize("solver", overfit_solvers())
def test_c5_overfit_single_batch(synth_train_cubes, solver):
    seed_everything(0)
    rng = np.random.default_rng(0)
    cubes = synth_train_cubes
    pick = rng.choice(len(cubes), 32, replace=False)
    q_t, q_s = build_batch(list(cubes.float_patches(np.sort(pick))), r=0.5, zeta=1e-4, rng=rng)
    assert len(q_t) + len(q_s) == 32 and q_t and q_s
    xt, yt = stack(q_t)
    xs, ys = stack(q_s)
    x_t, y_t, x_s, y_s = to_tensor(xt), torch.from_numpy(yt), to_tensor(xs), torch.from_numpy(ys)

    model = JigsawSolver(solver)
    opt = torch.optim.Adam(model.parameters(), lr=1e-3)
    start = time.perf_counter()
    solved_at = None
    for step in range(1, 501):
        model.train()
        loss, _ = mixed_batch_loss(model, x_t, y_t, x_s, y_s)
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % 5 == 0:
            model.eval()
            with torch.no_grad():
                t_logits, s_logits = model(torch.cat([x_t, x_s]))
            acc_t = element_accuracy(t_logits[: len(x_t)], y_t)
            acc_s = element_accuracy(s_logits[len(x_t):], y_s)
            if acc_t == 1.0 and acc_s == 1.0:
                solved_at = step
                break
        assert time.perf_counter() - start < 300, f"over 5 minutes at step {step}"
    elapsed = time.perf_counter() - start
    print(f"overfit: solved at step {solved_at} in {elapsed:.0f}s")
    assert solved_at is not None
    assert elapsed < 300


# ---------------------------------------------------------------- 6
C6 = c(6, "scoring suite")


@C6
def test_c6_object_regularity_fixture():
    m = np.array([[0.7, 0.2, 0.1], [0.2, 0.5, 0.3], [0.1, 0.3, 0.6]])
    assert object_regularity(m) == 0.5
    assert object_regularity(np.eye(4)) == 1.0


@C6
def test_c6_normalize_fixture():
    assert normalize_per_video([2.0, 4.0, 3.0]).tolist() == [0.0, 1.0, 0.5]
    assert normalize_per_video([0.25, 0.25]).tolist() == [0.0, 0.0]
    assert normalize_per_video([1.0, 0.0, 0.5, 0.75]).tolist() == [1.0, 0.0, 0.5, 0.75]


@C6
def test_c6_fuse_and_smooth_fixture():
    r_s = np.array([1.0, 0.0, 1.0, 1.0])
    r_t = np.array([0.0, 0.0, 1.0, 0.5])
    # sigma 0 leaves the weighted sum unsmoothed
    assert fuse_and_smooth(r_s, r_t, w=0.5, sigma=0).tolist() == [0.5, 0.0, 1.0, 0.75]
    assert fuse_and_smooth(r_s, r_t, w=1.0, sigma=0).tolist() == r_s.tolist()
    assert fuse_and_smooth(r_s, r_t, w=0.0, sigma=0).tolist() == r_t.tolist()
    # sigma 0.5: radius 2, weights exp(-2 d^2) normalised; symmetric padding
    k = np.exp(-2.0 * np.arange(-2, 3) ** 2)
    k /= k.sum()
    x = np.array([3.0, 5.0, 1.0])
    padded = np.array([5.0, 3.0, 3.0, 5.0, 1.0, 1.0, 5.0])
    expected = [float(np.dot(padded[i:i + 5], k)) for i in range(3)]
    assert fuse_and_smooth(x, x, w=0.5, sigma=0.5).tolist() == pytest.approx(expected, abs=1e-15)


def pairwise_auroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


@C6
def test_c6_auroc_equals_pairwise_oracle():
    rng = np.random.default_rng(99)
    for _ in range(100):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, n)
        labels[:2] = (0, 1)
        labels = rng.permutation(labels)
        scores = np.round(rng.random(n), int(rng.integers(1, 4)))
        assert auroc(scores, labels) == pytest.approx(pairwise_auroc(scores, labels), abs=1e-12)


# ---------------------------------------------------------------- 7 and 8
C7 = c(7, "end-to-end synthetic run")
C8 = c(8, "determinism")


@pytest.fixture(scope="module")
def e2e_run(tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("e2e")
    base = ["-c", str(CANONICAL), "-s", f"run.dir={run_dir}"]
    timings = {}
    start = time.perf_counter()
    for command in ("synth", "extract", "train", "score", "eval"):
        t0 = time.perf_counter()
        code = run([command] + base)
        timings[command] = time.perf_counter() - t0
        assert code == 0, f"{command} exited with {code}"
    timings["total"] = time.perf_counter() - start
    print("e2e timings (s):", {k: round(v) for k, v in timings.items()})
    return run_dir, base, timings


def subset_auroc(run_dir, w, types):
    cfg = RunConfig.load(CANONICAL, [f"run.dir={run_dir}"])
    labels = load_ground_truth(cfg.data_path("ground_truth"))
    events = json.loads((run_dir / "synth" / "test" / "anomalies.json").read_text())
    videos = [v for v, e in events.items() if e["type"] in types]
    assert videos
    scores = {}
    for v in videos:
        tl = ScoreTimeline.from_csv(run_dir / "scores" / f"{v}.csv").refuse(w, cfg["score.sigma"])
        scores[v] = tl.anomaly
    return micro_auroc(scores, {v: labels[v] for v in videos})


@C7
@pytest.mark.slow
def test_c7_micro_auroc(e2e_run):
    run_dir, _, _ = e2e_run
    report = json.loads((run_dir / "eval" / "report.json").read_text())
    print(f"canonical micro {report['micro_auroc']:.4f} macro {report['macro_auroc']:.4f}")
    assert report["micro_auroc"] >= 0.85


@C7
@pytest.mark.slow
def test_c7_temporal_only_detects_motion_anomalies(e2e_run):
    value = subset_auroc(e2e_run[0], 0.0, MOTION_ANOMALIES)
    print(f"w=0 motion-anomaly micro AUROC {value:.4f}")
    assert value >= 0.80


@C7
@pytest.mark.slow
def test_c7_spatial_only_detects_unseen_shapes(e2e_run):
    value = subset_auroc(e2e_run[0], 1.0, APPEARANCE_ANOMALIES)
    print(f"w=1 unseen-shape micro AUROC {value:.4f}")
    assert value >= 0.80


@C7
@pytest.mark.slow
def test_c7_runtime_and_epoch_budget(e2e_run):
    run_dir, _, timings = e2e_run
    cfg = RunConfig.load(CANONICAL, [f"run.dir={run_dir}"])
    assert cfg["train.epochs"] <= 30
    assert timings["total"] < 4 * 3600


@C8
@pytest.mark.slow
def test_c8_score_and_eval_rerun_identical(e2e_run):
    run_dir, base, _ = e2e_run
    first_scores = {p.name: p.read_bytes() for p in (run_dir / "scores").glob("*.csv")}
    first_report = (run_dir / "eval" / "report.json").read_bytes()
    assert run(["score"] + base) == 0
    assert run(["eval"] + base) == 0
    assert {p.name: p.read_bytes() for p in (run_dir / "scores").glob("*.csv")} == first_scores
    assert (run_dir / "eval" / "report.json").read_bytes() == first_report


@C8
def test_c8_train_reproduces_loss_curve(synth_train_cubes, tmp_path):
    cubes = synth_train_cubes
    sub = CubeSet(cubes.patches[:48], cubes.video_ids[:48], cubes.frames[:48], cubes.boxes[:48], cubes.videos)
    solver = SolverConfig(widths=(4, 4, 8, 8, 8, 8), hidden=32)
    cfg = TrainConfig(epochs=3, batch_size=16, lr=1e-3, seed=4)
    a = train(sub, solver, cfg, tmp_path / "a").history
    b = train(sub, solver, cfg, tmp_path / "b").history
    keys = ("loss_total", "loss_t", "loss_s", "acc_t", "acc_s", "n_temporal", "n_spatial")
    assert [[h[k] for k in keys] for h in a] == [[h[k] for k in keys] for h in b]
    assert (tmp_path / "a" / "metrics.csv").read_text() == (tmp_path / "b" / "metrics.csv").read_text()
