"""Permutation algebra used to build and label jigsaw puzzles.

Permutations are zero-based: ``Permutation((2, 0, 1))`` sends slot 0 to the
element originally at position 2.  Rank 0 is always the identity.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_POOL_SIZE = 10_000


@dataclass(frozen=True)
class Permutation:
    elems: tuple[int, ...]

    def __post_init__(self):
        elems = tuple(int(e) for e in self.elems)
        if not elems:
            raise ValueError("a permutation needs at least one element")
        if sorted(elems) != list(range(len(elems))):
            raise ValueError(f"not a bijection on 0..{len(elems) - 1}: {elems}")
        object.__setattr__(self, "elems", elems)

    @property
    def k(self) -> int:
        return len(self.elems)

    def __len__(self) -> int:
        return len(self.elems)

    def __iter__(self):
        return iter(self.elems)

    def __getitem__(self, i):
        return self.elems[i]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.elems, dtype=np.int64)


def identity(k: int) -> Permutation:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return Permutation(tuple(range(k)))


def rank(p: Permutation) -> int:
    """Lexicographic rank of ``p`` among all ``k!`` permutations (Lehmer code)."""
    k = p.k
    remaining = list(range(k))
    r = 0
    for i, e in enumerate(p.elems):
        idx = remaining.index(e)
        r += idx * math.factorial(k - 1 - i)
        remaining.pop(idx)
    return r


def unrank(k: int, r: int) -> Permutation:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    total = math.factorial(k)
    if not 0 <= r < total:
        raise ValueError(f"rank {r} out of range [0, {total}) for k={k}")
    remaining = list(range(k))
    elems = []
    for i in range(k - 1, -1, -1):
        idx, r = divmod(r, math.factorial(i))
        elems.append(remaining.pop(idx))
    return Permutation(tuple(elems))


def sample_uniform(k: int, rng: np.random.Generator) -> Permutation:
    # Fisher-Yates inside numpy; never enumerates the k! set.
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return Permutation(tuple(rng.permutation(k).tolist()))


def apply(p: Permutation, seq: Sequence):
    """Return ``[seq[p[0]], seq[p[1]], ...]``.

    numpy arrays are permuted along their first axis and stay arrays; any
    other sequence comes back as a list.
    """
    if len(seq) != p.k:
        raise ValueError(f"sequence length {len(seq)} != permutation length {p.k}")
    if isinstance(seq, np.ndarray):
        return seq[p.as_array()]
    return [seq[i] for i in p.elems]


def invert(p: Permutation) -> Permutation:
    inv = [0] * p.k
    for i, e in enumerate(p.elems):
        inv[e] = i
    return Permutation(tuple(inv))


def hamming(a: Permutation, b: Permutation) -> int:
    return sum(x != y for x, y in zip(a.elems, b.elems))


def select_hamming_subset(
    k: int,
    m: int,
    rng: np.random.Generator,
    pool_size: int = DEFAULT_POOL_SIZE,
) -> list[Permutation]:
    """Greedy max-min Hamming selection of ``m`` distinct permutations of ``k``.

    Starts from a random candidate, then repeatedly takes the candidate whose
    minimum Hamming distance to the chosen set is largest.  When ``k!``
    exceeds ``pool_size`` the candidates are a uniform pool of that many
    distinct draws instead of the full set.
    """
    total = math.factorial(k)
    if m < 1 or m > total:
        raise ValueError(f"m must be in [1, {total}] for k={k}, got {m}")

    if total <= pool_size:
        cand = np.array(list(itertools.permutations(range(k))), dtype=np.int8)
    else:
        seen: set[tuple[int, ...]] = set()
        rows = []
        while len(rows) < max(pool_size, m):
            row = tuple(rng.permutation(k).tolist())
            if row not in seen:
                seen.add(row)
                rows.append(row)
        cand = np.array(rows, dtype=np.int8)

    first = int(rng.integers(len(cand)))
    chosen = [first]
    min_dist = (cand != cand[first]).sum(axis=1)
    min_dist[first] = -1
    while len(chosen) < m:
        j = int(np.argmax(min_dist))
        chosen.append(j)
        min_dist = np.minimum(min_dist, (cand != cand[j]).sum(axis=1))
        min_dist[chosen] = -1
    return [Permutation(tuple(cand[j].tolist())) for j in chosen]


def save_permutations(path: str | Path, perms: Iterable[Permutation]) -> None:
    lines = [" ".join(str(e) for e in p.elems) for p in perms]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_permutations(path: str | Path) -> list[Permutation]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(Permutation(tuple(int(t) for t in line.split())))
    return out
