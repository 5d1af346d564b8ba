"""Transitional-point detection.

A span ``(a, b)`` is approximated by linearly interpolating its end poses; the
interior frame with the largest mean per-joint distance to that line becomes a
transitional point. Splitting repeats on whichever span holds the globally
largest error until ``S`` snippets exist.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .skeleton import MotionSequence

# errors at or below this (relative to the data's magnitude) count as zero
ZERO_TOL = 1e-9


@dataclass(frozen=True)
class Segmentation:
    transitions: tuple[int, ...]
    span: tuple[int, int]
    warning: str | None = field(default=None, compare=False)

    def __post_init__(self):
        pts = tuple(int(t) for t in self.transitions)
        a, b = (int(v) for v in self.span)
        chain = (a, *pts, b)
        if any(y <= x for x, y in zip(chain, chain[1:])):
            raise ValueError(f"transitions {pts} not strictly inside span ({a}, {b})")
        object.__setattr__(self, "transitions", pts)
        object.__setattr__(self, "span", (a, b))

    @property
    def S(self) -> int:
        return len(self.transitions) + 1

    @property
    def boundaries(self) -> list[int]:
        """Span start, transitions, span end."""
        return [self.span[0], *self.transitions, self.span[1]]


@dataclass(frozen=True)
class SegmentationScheme:
    mode: str = "non_shared"
    S: int = 4

    def __post_init__(self):
        if self.mode not in ("shared", "non_shared"):
            raise ValueError(f"unknown scheme {self.mode!r}")
        if self.S < 1:
            raise ValueError("S must be >= 1")


def _as_array(seq) -> np.ndarray:
    return seq.data if isinstance(seq, MotionSequence) else np.asarray(seq, dtype=np.float64)


def reconstruction_error(seq, approx, i: int) -> float:
    """Mean over joints of the Euclidean distance between the two poses at frame ``i``."""
    x, y = _as_array(seq), _as_array(approx)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if not 0 <= i < x.shape[0]:
        raise IndexError(f"frame {i} out of range [0, {x.shape[0]})")
    return float(np.linalg.norm(y[i] - x[i], axis=-1).mean())


def span_errors(x: np.ndarray, a: int, b: int) -> np.ndarray:
    """Reconstruction error at every frame of ``a..b`` against the a-b interpolation."""
    t = np.arange(a, b + 1, dtype=np.float64)
    wa = ((b - t) / (b - a))[:, None, None]
    wb = ((t - a) / (b - a))[:, None, None]
    line = wa * x[a] + wb * x[b]
    return np.linalg.norm(line - x[a:b + 1], axis=-1).mean(axis=-1)


def split_order(seq, S: int) -> list[tuple[tuple[int, int], int]]:
    """Audit trail of the greedy splitting: one ``(span, frame)`` per round."""
    x = _as_array(seq)
    H = x.shape[0]
    if S < 1:
        raise ValueError("S must be >= 1")
    if S + 1 > H:
        raise ValueError(f"S={S} snippets need at least {S + 1} frames, got {H}")
    tol = ZERO_TOL * max(1.0, float(np.abs(x).max()))
    spans = [(0, H - 1)]
    trail = []
    while len(spans) < S:
        best = None  # (error, frame, span index)
        for k, (a, b) in enumerate(spans):
            if b - a < 2:
                continue
            err = span_errors(x, a, b)[1:-1]
            i = int(np.argmax(err))
            if err[i] > tol and (best is None or err[i] > best[0]):
                best = (float(err[i]), a + 1 + i, k)
        if best is None:
            eligible = [(b - a, -a, k) for k, (a, b) in enumerate(spans) if b - a >= 2]
            if not eligible:
                raise ValueError(f"cannot reach S={S}: no span has an interior frame")
            k = max(eligible)[2]
            a, b = spans[k]
            frame = (a + b) // 2
        else:
            _, frame, k = best
        a, b = spans[k]
        spans[k:k + 1] = [(a, frame), (frame, b)]
        trail.append(((a, b), frame))
    return trail


def segment_history(seq, S: int) -> Segmentation:
    x = _as_array(seq)
    trail = split_order(x, S)
    return Segmentation(tuple(sorted(f for _, f in trail)), (0, x.shape[0] - 1))


def round_half_up(x) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


def make_strict(points: Sequence[int], lo: int, hi: int) -> list[int]:
    """Clamp into ``[lo, hi]`` and push collisions apart so the list strictly increases.

    Later points are pushed forward first; if that overruns ``hi`` the tail is
    pushed back.
    """
    n = len(points)
    if n > hi - lo + 1:
        raise ValueError(f"{n} distinct points do not fit in [{lo}, {hi}]")
    out = [min(max(int(p), lo), hi) for p in points]
    for k in range(1, n):
        out[k] = max(out[k], out[k - 1] + 1)
    for k in range(n - 1, -1, -1):
        cap = hi if k == n - 1 else out[k + 1] - 1
        out[k] = min(out[k], cap)
    return out


def shared_transitions(segmentations: Sequence[Segmentation]) -> Segmentation:
    """Average the k-th transition across samples (round half up)."""
    if not segmentations:
        raise ValueError("no segmentations to average")
    S, span = segmentations[0].S, segmentations[0].span
    for seg in segmentations:
        if seg.S != S:
            raise ValueError(f"mixed snippet counts {S} and {seg.S}")
        if seg.span != span:
            raise ValueError(f"mixed spans {span} and {seg.span}")
    if S == 1:
        return Segmentation((), span)
    # integer sums keep the mean exact before rounding
    sums = np.sum([seg.transitions for seg in segmentations], axis=0, dtype=np.int64)
    n = len(segmentations)
    rounded = (2 * sums + n) // (2 * n)
    return Segmentation(tuple(make_strict(rounded.tolist(), span[0] + 1, span[1] - 1)), span)


def project_future_transitions(history_seg: Segmentation, H: int, T: int, S: int) -> Segmentation:
    """Extrapolate the history's transitional points into the future window.

    The history boundaries (including both span ends) are regressed by least
    squares against their ordinal position; the next ``S-1`` ordinals give the
    future transitions, shifted into future coordinates ``0..T-1``.
    """
    if S == 1:
        return Segmentation((), (0, T - 1))
    if T < S + 1:
        raise ValueError(f"horizon T={T} cannot hold S={S} snippets")
    if history_seg.span != (0, H - 1):
        raise ValueError(f"history segmentation spans {history_seg.span}, expected (0, {H - 1})")
    pts = np.asarray(history_seg.boundaries, dtype=np.float64)
    k = np.arange(len(pts), dtype=np.float64)
    warning = None
    if np.ptp(pts) == 0:
        slope = float("nan")
    else:
        slope, intercept = np.polyfit(k, pts, 1)
    if not (math.isfinite(slope) and slope > 0):
        warning = "degenerate history fit; using uniform spacing"
        proj = np.linspace(0, T - 1, S + 1)[1:-1]
    else:
        ahead = np.arange(len(pts), len(pts) + S - 1, dtype=np.float64)
        proj = intercept + slope * ahead - H
    future = make_strict(round_half_up(proj).tolist(), 1, T - 2)
    return Segmentation(tuple(future), (0, T - 1), warning)


def future_targets(history: np.ndarray, T: int, S: int) -> list[int]:
    """Target frames ``[0, T_1, ..., T_{S-1}, T-1]`` for one sample's history."""
    seg = project_future_transitions(segment_history(history, S), history.shape[0], T, S)
    return seg.boundaries
