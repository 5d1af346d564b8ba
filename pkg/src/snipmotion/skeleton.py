"""Skeleton topology and motion-sequence value types.

Frames are stored 0-indexed. For a prediction sample the history occupies
indices ``0..H-1`` and the future ``H..H+T-1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Skeleton:
    """Joint count plus an undirected bone list (pairs stored as ``i < j``)."""

    joint_count: int
    bones: tuple[tuple[int, int], ...]

    def __init__(self, joint_count: int, bones: Iterable[Sequence[int]]):
        if joint_count < 1:
            raise ValueError(f"joint_count must be positive, got {joint_count}")
        normalized = []
        seen = set()
        for pair in bones:
            i, j = (int(v) for v in pair)
            if i == j:
                raise ValueError(f"self-loop bone ({i}, {j})")
            if not (0 <= i < joint_count and 0 <= j < joint_count):
                raise ValueError(f"bone ({i}, {j}) out of range for {joint_count} joints")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate bone {key}")
            seen.add(key)
            normalized.append(key)
        object.__setattr__(self, "joint_count", int(joint_count))
        object.__setattr__(self, "bones", tuple(normalized))
        if not self._connected():
            raise ValueError("bone graph is not connected")

    @classmethod
    def chain(cls, joint_count: int) -> "Skeleton":
        return cls(joint_count, [(j, j + 1) for j in range(joint_count - 1)])

    def _connected(self) -> bool:
        nbrs = self.neighbors()
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in nbrs[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.joint_count

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.joint_count)]
        for i, j in self.bones:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs

    def adjacency(self) -> np.ndarray:
        """Symmetric 0/1 bone matrix without self-loops."""
        adj = np.zeros((self.joint_count, self.joint_count))
        for i, j in self.bones:
            adj[i, j] = adj[j, i] = 1.0
        return adj

    def diameter(self) -> int:
        nbrs = self.neighbors()
        best = 0
        for src in range(self.joint_count):
            dist = {src: 0}
            frontier = [src]
            while frontier:
                nxt = []
                for u in frontier:
                    for v in nbrs[u]:
                        if v not in dist:
                            dist[v] = dist[u] + 1
                            nxt.append(v)
                frontier = nxt
            best = max(best, max(dist.values()))
        return best


@dataclass(frozen=True)
class MotionSequence:
    """Dense ``(frames, joints, features)`` motion tensor with a frame rate.

    The array is copied on construction and marked read-only.
    """

    data: np.ndarray
    fps: float = 25.0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 3:
            raise ValueError(f"motion data must be 3-D (frames, joints, features), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"motion data has an empty axis: {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("motion data contains non-finite values")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def joints(self) -> int:
        return self.data.shape[1]

    @property
    def dims(self) -> int:
        return self.data.shape[2]

    def __len__(self) -> int:
        return self.frames

    def pose(self, t: int) -> np.ndarray:
        return self.data[t]

    def __eq__(self, other) -> bool:
        if not isinstance(other, MotionSequence):
            return NotImplemented
        return self.fps == other.fps and np.array_equal(self.data, other.data)

    __hash__ = None


def slice(seq: MotionSequence, start: int, end: int) -> MotionSequence:
    """Frames ``start..end`` inclusive."""
    if start < 0:
        raise IndexError(f"start {start} < 0")
    if end >= seq.frames:
        raise IndexError(f"end {end} >= frame count {seq.frames}")
    if start > end:
        raise IndexError(f"start {start} > end {end}")
    return MotionSequence(seq.data[start:end + 1], seq.fps)


def velocity(seq: MotionSequence) -> MotionSequence:
    """First differences along time, ``V_t = X_{t+1} - X_t``."""
    if seq.frames < 2:
        raise ValueError("velocity needs at least 2 frames")
    return MotionSequence(np.diff(seq.data, axis=0), seq.fps)
