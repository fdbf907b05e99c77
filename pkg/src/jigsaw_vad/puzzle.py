"""Spatial and temporal jigsaw puzzles and mixed mini-batch construction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .ingest import ObjectCube, is_static, resize_patch, DEFAULT_STATIC_EPS
from .permute import Permutation, identity, sample_uniform

Kind = Literal["spatial", "temporal"]

DEFAULT_R = 0.5
DEFAULT_ZETA = 1e-4
DEFAULT_N = 3


@dataclass
class PuzzleSample:
    input: np.ndarray  # l x side x side x C
    kind: Kind
    labels: np.ndarray  # labels[i] = original position of the element now in slot i


def model_side(n: int, size: int = 64) -> int:
    """Largest multiple of ``n`` not above ``size``: 63 for n=3, 64 for n=2 or 4."""
    if n < 1 or n > size:
        raise ValueError(f"grid side n must be in [1, {size}], got {n}")
    return size - size % n


def _patches(cube) -> np.ndarray:
    return cube.patches if isinstance(cube, ObjectCube) else np.asarray(cube)


def to_model_frames(patches: np.ndarray, side: int) -> np.ndarray:
    """Resize every frame of an ``l x H x W x C`` cube to ``side x side``.

    All network inputs (both puzzle kinds and unshuffled inference cubes)
    pass through this, so the two heads share a single input geometry.
    """
    patches = np.asarray(patches, dtype=np.float32)
    if patches.shape[1] == side and patches.shape[2] == side:
        return patches
    return np.stack([resize_patch(f, side) for f in patches])


def grid_shuffle(frames: np.ndarray, p: Permutation, n: int) -> np.ndarray:
    """Rearrange the ``n x n`` cells of each frame: slot j receives cell ``p[j]``.

    Cells are numbered row-major.  ``frames`` is ``l x S x S x C`` with S
    divisible by n, and every frame uses the same permutation.
    """
    l, h, w, c = frames.shape
    if h != w or h % n:
        raise ValueError(f"frame side {h}x{w} not divisible into a {n}x{n} grid")
    if p.k != n * n:
        raise ValueError(f"permutation has {p.k} elements, grid has {n * n}")
    cell = h // n
    cells = frames.reshape(l, n, cell, n, cell, c).transpose(0, 1, 3, 2, 4, 5)
    cells = cells.reshape(l, n * n, cell, cell, c)[:, p.as_array()]
    cells = cells.reshape(l, n, n, cell, cell, c).transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(cells.reshape(l, h, w, c))


def spatial_shuffle(cube, p: Permutation, n: int = DEFAULT_N) -> PuzzleSample:
    frames = to_model_frames(_patches(cube), model_side(n, _patches(cube).shape[1]))
    return PuzzleSample(grid_shuffle(frames, p, n), "spatial", p.as_array())


def temporal_shuffle(cube, p: Permutation, n: int = DEFAULT_N) -> PuzzleSample:
    patches = _patches(cube)
    if p.k != len(patches):
        raise ValueError(f"permutation has {p.k} elements, cube has {len(patches)} frames")
    frames = to_model_frames(patches, model_side(n, patches.shape[1]))
    return PuzzleSample(np.ascontiguousarray(frames[p.as_array()]), "temporal", p.as_array())


def build_batch(
    cubes: Sequence,
    r: float = DEFAULT_R,
    zeta: float = DEFAULT_ZETA,
    l: int = 7,
    n: int = DEFAULT_N,
    rng: np.random.Generator | None = None,
    static_eps: float = DEFAULT_STATIC_EPS,
    spatial_perms: Sequence[Permutation] | None = None,
    temporal_perms: Sequence[Permutation] | None = None,
) -> tuple[list[PuzzleSample], list[PuzzleSample]]:
    """Turn each cube into one spatial or temporal puzzle.

    A cube becomes spatial with probability ``r`` (left unshuffled with
    probability ``zeta``), otherwise temporal.  Static cubes drawn for the
    temporal branch are dropped.  Permutations are uniform over all of them
    unless a restricted pool is given.
    """
    if not 0.0 <= zeta <= r <= 1.0:
        raise ValueError(f"need 0 <= zeta <= r <= 1, got zeta={zeta}, r={r}")
    rng = rng if rng is not None else np.random.default_rng()
    q_t: list[PuzzleSample] = []
    q_s: list[PuzzleSample] = []
    for cube in cubes:
        patches = _patches(cube)
        if len(patches) != l:
            raise ValueError(f"cube has {len(patches)} frames, expected l={l}")
        u = rng.random()
        if u <= r:
            if u <= zeta:
                perm = identity(n * n)
            elif spatial_perms is not None:
                perm = spatial_perms[int(rng.integers(len(spatial_perms)))]
            else:
                perm = sample_uniform(n * n, rng)
            q_s.append(spatial_shuffle(patches, perm, n))
        else:
            if is_static(patches, static_eps):
                continue
            if temporal_perms is not None:
                perm = temporal_perms[int(rng.integers(len(temporal_perms)))]
            else:
                perm = sample_uniform(l, rng)
            q_t.append(temporal_shuffle(patches, perm, n))
    return q_t, q_s


def stack(samples: Sequence[PuzzleSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into ``B x l x S x S x C`` inputs and ``B x k`` labels."""
    return (np.stack([s.input for s in samples]), np.stack([s.labels for s in samples]))
