"""Feature-space plumbing: named block layouts, one-hot helpers, and
quadratic interaction (cross) features between blocks.

Every model input lives in one flat index space carved into named blocks.
Cross blocks hold the products of entries from two source blocks, indexed
row-major, which is how per-pair structure (user x signal, features x
action) is exposed to a linear model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeatureVector


@dataclass(frozen=True)
class Block:
    """A contiguous index range [start, start + size)."""

    start: int
    size: int

    def slot(self, offset: int) -> int:
        if not 0 <= offset < self.size:
            raise IndexError(f"offset {offset} outside block of size {self.size}")
        return self.start + offset

    @property
    def stop(self) -> int:
        return self.start + self.size

    def as_pair(self) -> tuple[int, int]:
        return (self.start, self.size)


class FeatureLayout:
    """An ordered set of named, non-overlapping blocks."""

    def __init__(self, blocks: list[tuple[str, int]]):
        self._blocks: dict[str, Block] = {}
        cursor = 0
        for name, size in blocks:
            if name in self._blocks:
                raise ValueError(f"duplicate block name {name!r}")
            if size < 0:
                raise ValueError(f"block {name!r} has negative size")
            self._blocks[name] = Block(cursor, size)
            cursor += size
        self.dimension = cursor

    def block(self, name: str) -> Block:
        return self._blocks[name]

    def __contains__(self, name: str) -> bool:
        return name in self._blocks


def cross_index(a: Block, b: Block, dest: Block, i: int, j: int) -> int:
    """Destination index for the product of entry i of block a and j of b.

    i and j are absolute indices inside their source blocks.
    """
    return dest.slot((i - a.start) * b.size + (j - b.start))


def cross_arrays(
    a: Block,
    b: Block,
    dest: Block,
    a_idx: np.ndarray,
    a_val: np.ndarray,
    b_idx: np.ndarray,
    b_val: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """All pairwise product features between the entries of two blocks."""
    rows = (a_idx - a.start)[:, None] * b.size + (b_idx - b.start)[None, :]
    idx = dest.start + rows.reshape(-1)
    val = (a_val[:, None] * b_val[None, :]).reshape(-1)
    return idx.astype(np.int64), val


def build_vector(
    dimension: int, parts: list[tuple[np.ndarray, np.ndarray]]
) -> FeatureVector:
    """Assemble a FeatureVector from (indices, values) fragments.

    Fragments must not overlap; entries are sorted once here.
    """
    if not parts:
        return FeatureVector.empty(dimension)
    idx = np.concatenate([p[0] for p in parts])
    val = np.concatenate([p[1] for p in parts])
    order = np.argsort(idx, kind="stable")
    return FeatureVector(
        tuple(int(i) for i in idx[order]),
        tuple(float(v) for v in val[order]),
        dimension,
    )


def one_hot(block: Block, offset: int) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.asarray([block.slot(offset)], dtype=np.int64),
        np.ones(1, dtype=np.float64),
    )
