"""Snippet reconstruction from boundary poses and concatenation into a sequence."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .segment import Segmentation
from .skeleton import MotionSequence

MODES = ("interpolate", "pad_last", "pad_first")


def snippet_weights(t_start: int, t_end: int, mode: str = "interpolate") -> np.ndarray:
    """Per-frame weights ``(L+1, 2)`` on the (start, end) poses.

    Weights are exactly 0 or 1 at the endpoints, so endpoint poses come back
    bit-for-bit.
    """
    if t_end <= t_start:
        raise ValueError(f"t_end={t_end} must exceed t_start={t_start}")
    t = np.arange(t_start, t_end + 1, dtype=np.float64)
    L = t_end - t_start
    if mode == "interpolate":
        w0 = (t_end - t) / L
        w1 = (t - t_start) / L
    elif mode == "pad_last":
        w1 = (t == t_end).astype(np.float64)
        w0 = 1.0 - w1
    elif mode == "pad_first":
        w0 = (t == t_start).astype(np.float64)
        w1 = 1.0 - w0
    else:
        raise ValueError(f"unknown reconstruction mode {mode!r}")
    return np.stack([w0, w1], axis=1)


def reconstruct_variant(mode: str, start_pose, end_pose, t_start: int, t_end: int,
                        fps: float = 25.0) -> MotionSequence:
    w = snippet_weights(t_start, t_end, mode)
    p0 = np.asarray(start_pose, dtype=np.float64)
    p1 = np.asarray(end_pose, dtype=np.float64)
    if p0.shape != p1.shape:
        raise ValueError(f"pose shapes differ: {p0.shape} vs {p1.shape}")
    frames = w[:, 0, None, None] * p0 + w[:, 1, None, None] * p1
    return MotionSequence(frames, fps)


def reconstruct_snippet(start_pose, end_pose, t_start: int, t_end: int,
                        fps: float = 25.0) -> MotionSequence:
    """Linear interpolation; frame t is ``(p0 (t_end - t) + p1 (t - t_start)) / (t_end - t_start)``."""
    return reconstruct_variant("interpolate", start_pose, end_pose, t_start, t_end, fps)


def assembly_matrix(boundaries: Sequence[int], mode: str = "interpolate") -> np.ndarray:
    """Matrix ``M`` of shape (span length, S+1) with ``assembled = M @ boundary_poses``.

    Rows at boundary frames are one-hot.
    """
    b = [int(v) for v in boundaries]
    if len(b) < 2 or any(y <= x for x, y in zip(b, b[1:])):
        raise ValueError(f"boundaries must be strictly increasing, got {b}")
    M = np.zeros((b[-1] - b[0] + 1, len(b)))
    for s, (lo, hi) in enumerate(zip(b, b[1:])):
        M[lo - b[0]:hi - b[0] + 1, s:s + 2] = snippet_weights(lo, hi, mode)
    return M


@dataclass(frozen=True)
class SnippetSet:
    boundary_poses: np.ndarray  # (S+1, J, D)
    segmentation: Segmentation

    def __post_init__(self):
        poses = np.asarray(self.boundary_poses, dtype=np.float64)
        if poses.ndim != 3 or len(poses) != self.segmentation.S + 1:
            raise ValueError(
                f"need {self.segmentation.S + 1} boundary poses of shape (J, D), got {poses.shape}")
        object.__setattr__(self, "boundary_poses", poses)


def assemble(snippet_set: SnippetSet, mode: str = "interpolate", fps: float = 25.0) -> MotionSequence:
    """Concatenate the reconstructed snippets; shared boundary frames appear once."""
    b = snippet_set.segmentation.boundaries
    poses = snippet_set.boundary_poses
    out = np.empty((b[-1] - b[0] + 1, *poses.shape[1:]))
    for s, (lo, hi) in enumerate(zip(b, b[1:])):
        w = snippet_weights(lo, hi, mode)
        out[lo - b[0]:hi - b[0] + 1] = w[:, 0, None, None] * poses[s] + w[:, 1, None, None] * poses[s + 1]
    return MotionSequence(out, fps)
