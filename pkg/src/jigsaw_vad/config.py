"""Flat ``namespace.key = value`` run configuration.

Every key has a default and a provenance note.  ``reported`` marks values the
method's authors report; ``choice`` marks values picked for this code base.
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path
from typing import Any

from .errors import ConfigurationError, MissingArtifactError
from .net import SolverConfig
from .score import ScoreConfig
from .synth import SynthSpec
from .train import TrainConfig

# key -> (default, provenance)
DEFAULTS: dict[str, tuple[Any, str]] = {
    "run.dir": ("runs/default", "choice: root of all command outputs"),
    "run.seed": (0, "choice"),
    "run.device": ("cpu", "choice: cpu, cuda, or auto"),
    "run.workers": (1, "choice: torch intra-op threads"),
    "run.strict": (True, "choice: unknown keys are errors"),
    "data.train_frames": ("", "choice: empty = <run.dir>/synth/train/frames"),
    "data.train_detections": ("", "choice: empty = <run.dir>/synth/train/detections.jsonl"),
    "data.test_frames": ("", "choice: empty = <run.dir>/synth/test/frames"),
    "data.test_detections": ("", "choice: empty = <run.dir>/synth/test/detections.jsonl"),
    "data.ground_truth": ("", "choice: empty = <run.dir>/synth/test/ground_truth.json"),
    "data.threshold": (0.5, "reported: 0.5 on Ped2, 0.8 on Avenue and STC; shared by train and test"),
    "data.train_frame_stride": (1, "choice: keep training detections on every k-th frame"),
    "cube.l": (7, "reported: 7 on Ped2 and Avenue, 9 on STC"),
    "cube.size": (64, "reported: 64x64 patches"),
    "cube.static_eps": (0.005, "choice: calibrated on the synthetic generator"),
    "puzzle.n": (3, "reported: 3x3 grid on all datasets"),
    "puzzle.r": (0.5, "reported: equal temporal and spatial shares"),
    "puzzle.zeta": (1e-4, "reported: probability of an unshuffled spatial puzzle"),
    "puzzle.num_temporal_perms": (0, "choice: 0 = all l! permutations, else Hamming subset size"),
    "puzzle.num_spatial_perms": (0, "choice: 0 = all (n^2)! permutations, else Hamming subset size"),
    "puzzle.hamming_pool": (10_000, "choice: candidate pool when k! is too large to enumerate"),
    "model.widths": ((32, 32, 64, 64, 64, 64), "reported: 3D conv widths"),
    "model.conv2d_width": (0, "choice: width of the 2D conv is unreported; 0 = last 3D width"),
    "model.hidden": (512, "reported: hidden fc width of each head"),
    "model.dropout": (0.3, "choice: rate unreported"),
    "optim.lr": (1e-4, "reported: Adam learning rate"),
    "optim.beta1": (0.9, "reported"),
    "optim.beta2": (0.999, "reported"),
    "train.epochs": (100, "reported: 100 on Avenue/STC, 50 on Ped2"),
    "train.batch_size": (192, "reported"),
    "train.max_cubes_per_epoch": (0, "choice: 0 = every cube each epoch"),
    "score.w": (0.5, "reported: spatial/temporal fusion weight"),
    "score.sigma": (3.0, "choice: temporal Gaussian sigma in frames"),
    "score.kernel": ((7, 15, 15), "choice: 3D mean filter (t, h, w) on the downsampled map"),
    "score.downsample": (4, "choice: spatial downsampling of the regularity map"),
    "score.batch_size": (64, "choice: inference batch size"),
}
DEFAULTS.update({
    f"synth.{f.name}": (f.default, "choice: synthetic desk-scale data")
    for f in fields(SynthSpec)
})


def _parse_value(key: str, text: str):
    default = DEFAULTS[key][0]
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            parts = tuple(p.strip() for p in text.split(",") if p.strip())
            if default and isinstance(default[0], int):
                return tuple(int(p) for p in parts)
            return parts
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {text!r} as {type(default).__name__}") from None
    return text


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


class RunConfig:
    def __init__(self, values: dict | None = None):
        self.values = {k: v for k, (v, _) in DEFAULTS.items()}
        if values:
            for k, v in values.items():
                self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            if self.values.get("run.strict", True):
                raise ConfigurationError(f"unknown config key {key!r}")
            return
        self.values[key] = _parse_value(key, value) if isinstance(value, str) else value

    def __getitem__(self, key: str):
        return self.values[key]

    @classmethod
    def load(cls, path=None, overrides: list[str] | tuple[str, ...] = ()) -> "RunConfig":
        """Read a config file (optional) then apply ``key=value`` overrides."""
        pairs: list[tuple[str, str]] = []
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise MissingArtifactError(f"config file not found: {path}")
            for line_no, line in enumerate(path.read_text().splitlines(), 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ConfigurationError(f"{path}:{line_no}: expected 'key = value'")
                pairs.append((key.strip(), value))
        for item in overrides:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigurationError(f"override {item!r} is not key=value")
            pairs.append((key.strip(), value))
        cfg = cls()
        # strictness must be known before other keys are checked
        for key, value in pairs:
            if key == "run.strict":
                cfg.set(key, value)
        for key, value in pairs:
            cfg.set(key, value)
        return cfg

    def dumps(self) -> str:
        return "".join(f"{k} = {_format_value(v)}\n" for k, v in self.values.items())

    def snapshot(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.values.items()}

    @property
    def run_dir(self) -> Path:
        return Path(self["run.dir"])

    def data_path(self, key: str) -> Path:
        value = self[f"data.{key}"]
        if value:
            return Path(value)
        synth = self.run_dir / "synth"
        return {
            "train_frames": synth / "train" / "frames",
            "train_detections": synth / "train" / "detections.jsonl",
            "test_frames": synth / "test" / "frames",
            "test_detections": synth / "test" / "detections.jsonl",
            "ground_truth": synth / "test" / "ground_truth.json",
        }[key]

    def solver_config(self) -> SolverConfig:
        return SolverConfig(l=self["cube.l"], n=self["puzzle.n"], widths=self["model.widths"],
                            conv2d_width=self["model.conv2d_width"], dropout=self["model.dropout"],
                            hidden=self["model.hidden"], cube_size=self["cube.size"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self["train.epochs"], batch_size=self["train.batch_size"], lr=self["optim.lr"],
            beta1=self["optim.beta1"], beta2=self["optim.beta2"], r=self["puzzle.r"],
            zeta=self["puzzle.zeta"], static_eps=self["cube.static_eps"], seed=self["run.seed"],
            device=self["run.device"], max_cubes_per_epoch=self["train.max_cubes_per_epoch"],
            num_temporal_perms=self["puzzle.num_temporal_perms"],
            num_spatial_perms=self["puzzle.num_spatial_perms"],
            hamming_pool_size=self["puzzle.hamming_pool"],
        )

    def score_config(self) -> ScoreConfig:
        kernel = self["score.kernel"]
        if len(kernel) != 3:
            raise ConfigurationError(f"score.kernel needs 3 sizes (t,h,w), got {kernel}")
        return ScoreConfig(w=self["score.w"], sigma=self["score.sigma"], kernel=kernel,
                           downsample=self["score.downsample"], batch_size=self["score.batch_size"])

    def synth_spec(self) -> SynthSpec:
        d = {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith("synth.")}
        try:
            return SynthSpec(**d)
        except ValueError as exc:
            raise ConfigurationError(f"synth: {exc}") from None
