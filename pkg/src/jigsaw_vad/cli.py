"""Command-line entry point: ``jigsaw-vad {synth,extract,train,score,eval,defaults}``."""

from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import torch

from .config import DEFAULTS, RunConfig
from .errors import ConfigurationError, MetricUndefinedError, MissingArtifactError, ParseError
from .evaluation import evaluation_report, load_ground_truth
from .ingest import CubeSet, extract_cubes, load_detections, open_videos
from .score import read_score_dir, score_objects, score_videos, write_object_scores
from .synth import generate
from .train import load_checkpoint, resolve_device, seed_everything, train

log = logging.getLogger("jigsaw_vad")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_METRIC = 0, 2, 3, 4


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=10)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_manifest(out_dir: Path, command: str, cfg: RunConfig, started: float, **extra) -> None:
    manifest = {
        "command": command,
        "seed": cfg["run.seed"],
        "git_describe": git_describe(),
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "seconds": round(time.time() - started, 3),
        "config": cfg.snapshot(),
        **extra,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    (out_dir / "config.txt").write_text(cfg.dumps())


def cmd_synth(cfg: RunConfig) -> dict:
    out = cfg.run_dir / "synth"
    summary = generate(cfg.synth_spec(), out)
    return {"out_dir": out, "videos": summary}


def _extract_split(cfg: RunConfig, split: str) -> CubeSet:
    videos = open_videos(cfg.data_path(f"{split}_frames"))
    dets = load_detections(cfg.data_path(f"{split}_detections"), cfg["data.threshold"])
    stride = cfg["data.train_frame_stride"] if split == "train" else 1
    return extract_cubes(videos, dets, cfg["cube.l"], cfg["cube.size"], stride)


def cmd_extract(cfg: RunConfig, splits=("train", "test")) -> dict:
    out = cfg.run_dir / "cubes"
    out.mkdir(parents=True, exist_ok=True)
    counts = {}
    for split in splits:
        cubes = _extract_split(cfg, split)
        cubes.save(out / f"{split}.npz")
        counts[split] = len(cubes)
        log.info("extracted %d %s cubes", len(cubes), split)
    return {"out_dir": out, "cubes": counts}


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"missing {path}; run `jigsaw-vad {producer}` first")
    return path


def cmd_train(cfg: RunConfig) -> dict:
    cubes = CubeSet.load(_require(cfg.run_dir / "cubes" / "train.npz", "extract"))
    out = cfg.run_dir / "train"
    result = train(cubes, cfg.solver_config(), cfg.train_config(), out)
    last = result.history[-1] if result.history else {}
    return {"out_dir": out, "train_cubes": len(cubes), "final": last}


def cmd_score(cfg: RunConfig) -> dict:
    ckpt = _require(cfg.run_dir / "train" / "checkpoint.pt", "train")
    cubes = CubeSet.load(_require(cfg.run_dir / "cubes" / "test.npz", "extract"))
    seed_everything(cfg["run.seed"])
    device = resolve_device(cfg["run.device"])
    model, _ = load_checkpoint(ckpt, device)
    if model.cfg.l != cubes.l:
        raise ConfigurationError(f"checkpoint expects l={model.cfg.l}, test cubes have l={cubes.l}")
    score_cfg = cfg.score_config()
    r_s, r_t = score_objects(model, cubes, score_cfg.batch_size, device)
    out = cfg.run_dir / "scores"
    out.mkdir(parents=True, exist_ok=True)
    write_object_scores(out / "objects.csv", cubes, r_s, r_t)
    timelines = score_videos(cubes, r_s, r_t, score_cfg)
    for vid, tl in timelines.items():
        tl.to_csv(out / f"{vid}.csv")
    return {"out_dir": out, "videos": len(timelines), "objects": len(cubes)}


def cmd_eval(cfg: RunConfig) -> dict:
    scores = read_score_dir(cfg.run_dir / "scores")
    labels = load_ground_truth(cfg.data_path("ground_truth"))
    report = evaluation_report(scores, labels)
    out = cfg.run_dir / "eval"
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2))
    micro, macro = report["micro_auroc"], report["macro_auroc"]
    print(f"micro AUROC: {'undefined' if micro is None else f'{micro:.4f}'}")
    print(f"macro AUROC: {'undefined' if macro is None else f'{macro:.4f}'}")
    if micro is None:
        raise MetricUndefinedError("micro AUROC undefined: ground truth has a single class")
    return {"out_dir": out, "report": report}


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train": cmd_train,
    "score": cmd_score,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jigsaw-vad", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", help="key = value config file")
        p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        if name == "extract":
            p.add_argument("--split", choices=("train", "test", "all"), default="all")
    sub.add_parser("defaults", help="print every config key with its default and provenance")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.command == "defaults":
        for key, (value, note) in DEFAULTS.items():
            shown = ",".join(map(str, value)) if isinstance(value, tuple) else value
            print(f"{key} = {shown}  # {note}")
        return EXIT_OK
    try:
        cfg = RunConfig.load(args.config, args.set)
        torch.set_num_threads(max(1, cfg["run.workers"]))
        started = time.time()
        if args.command == "extract":
            splits = ("train", "test") if args.split == "all" else (args.split,)
            info = cmd_extract(cfg, splits)
        else:
            info = COMMANDS[args.command](cfg)
        out_dir = Path(info.pop("out_dir"))
        write_manifest(out_dir, args.command, cfg, started, **info)
    except (ConfigurationError, ParseError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except MetricUndefinedError as exc:
        print(f"metric undefined: {exc}", file=sys.stderr)
        return EXIT_METRIC
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
