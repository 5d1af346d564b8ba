"""Binary motion files, corpus loading and synthetic piecewise-linear motions.

File layout (little-endian throughout)::

    b"SNPM1"            magic, 5 bytes
    u32 T_total, u32 J, u32 D
    f32 fps
    f32 payload[T_total * J * D]   row-major (frame, joint, feature)
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .skeleton import MotionSequence

MAGIC = b"SNPM1"
_HEADER = struct.Struct("<5sIIIf")
SUFFIX = ".snpm"


class MotionFormatError(ValueError):
    """Bad magic or malformed header."""


class MotionLengthError(ValueError):
    """Payload does not match the header's declared shape."""


def encode_motion(seq: MotionSequence) -> bytes:
    data = np.asarray(seq.data)
    if not np.all(np.isfinite(data)):
        raise ValueError("cannot write non-finite motion values")
    as32 = data.astype("<f4")
    if not np.all(np.isfinite(as32)):
        raise ValueError("motion values overflow float32")
    T, J, D = data.shape
    return _HEADER.pack(MAGIC, T, J, D, seq.fps) + as32.tobytes(order="C")


def decode_motion(blob: bytes) -> MotionSequence:
    if len(blob) < _HEADER.size:
        if blob[:len(MAGIC)] != MAGIC[:len(blob)]:
            raise MotionFormatError("bad magic")
        raise MotionLengthError(f"header truncated: {len(blob)} bytes")
    magic, T, J, D, fps = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise MotionFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    expected = T * J * D * 4
    payload = blob[_HEADER.size:]
    if len(payload) != expected:
        raise MotionLengthError(
            f"payload is {len(payload)} bytes, header declares {T}x{J}x{D} = {expected} bytes")
    arr = np.frombuffer(payload, dtype="<f4").reshape(T, J, D)
    if not np.all(np.isfinite(arr)):
        raise ValueError("payload contains non-finite values")
    return MotionSequence(arr.astype(np.float64), float(fps))


def write_motion(seq: MotionSequence, path) -> None:
    blob = encode_motion(seq)
    with open(path, "wb") as fh:
        fh.write(blob)


def read_motion(path) -> MotionSequence:
    with open(path, "rb") as fh:
        return decode_motion(fh.read())


@dataclass
class SyntheticSpec:
    joints: int
    knot_frames: Sequence[int]
    knot_poses: Sequence[np.ndarray]
    noise_std: float = 0.0
    seed: int = 0
    fps: float = 25.0
    dims: int = 3

    def __post_init__(self):
        frames = [int(k) for k in self.knot_frames]
        if len(frames) < 2:
            raise ValueError("need at least 2 knots")
        if frames[0] != 0:
            raise ValueError(f"knot_frames must start at 0, got {frames[0]}")
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError(f"knot_frames must be strictly increasing: {frames}")
        if len(self.knot_poses) != len(frames):
            raise ValueError("one pose per knot required")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        self.knot_frames = frames


def generate_synthetic(spec: SyntheticSpec) -> tuple[MotionSequence, list[int]]:
    """Piecewise-linear motion through the knot poses, plus seeded Gaussian noise.

    Returns the sequence and its interior knot frames.
    """
    frames = spec.knot_frames
    poses = [np.asarray(p, dtype=np.float64).reshape(spec.joints, spec.dims) for p in spec.knot_poses]
    total = frames[-1] + 1
    data = np.empty((total, spec.joints, spec.dims))
    for (a, pa), (b, pb) in zip(zip(frames, poses), zip(frames[1:], poses[1:])):
        t = np.arange(a, b + 1, dtype=np.float64)
        wa = ((b - t) / (b - a))[:, None, None]
        wb = ((t - a) / (b - a))[:, None, None]
        data[a:b + 1] = wa * pa + wb * pb
    if spec.noise_std > 0:
        rng = np.random.default_rng(spec.seed)
        data = data + rng.normal(0.0, spec.noise_std, size=data.shape)
    return MotionSequence(data, spec.fps), list(frames[1:-1])


def random_synthetic_spec(rng: np.random.Generator, joints: int, frames: int, interior_knots: int,
                          noise_std: float = 0.0, scale: float = 100.0, seed: int = 0,
                          min_gap: int = 1, base_pose: np.ndarray | None = None) -> SyntheticSpec:
    """Draw knot frames and poses for a ``frames``-long motion."""
    if frames < interior_knots * min_gap + min_gap + 1:
        raise ValueError(f"{frames} frames cannot hold {interior_knots} interior knots with gap {min_gap}")
    while True:
        interior = np.sort(rng.choice(np.arange(1, frames - 1), size=interior_knots, replace=False))
        knots = [0, *interior.tolist(), frames - 1]
        if all(b - a >= min_gap for a, b in zip(knots, knots[1:])):
            break
    base = np.zeros((joints, 3)) if base_pose is None else np.asarray(base_pose, dtype=np.float64)
    poses = [base + rng.normal(0.0, scale, size=(joints, 3)) for _ in knots]
    return SyntheticSpec(joints, knots, poses, noise_std, seed)


@dataclass
class Corpus:
    """Fixed-length prediction windows: ``samples`` has shape (N, H+T, J, D)."""

    samples: np.ndarray
    fps: float
    history: int
    horizon: int
    tags: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 4:
            raise ValueError(f"corpus samples must be 4-D, got {self.samples.shape}")
        if self.samples.shape[1] != self.history + self.horizon:
            raise ValueError(
                f"window length {self.samples.shape[1]} != H+T = {self.history + self.horizon}")
        if not self.tags:
            self.tags = ["all"] * len(self.samples)
        if len(self.tags) != len(self.samples):
            raise ValueError("one tag per sample required")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def joints(self) -> int:
        return self.samples.shape[2]

    @property
    def dims(self) -> int:
        return self.samples.shape[3]

    @property
    def past(self) -> np.ndarray:
        return self.samples[:, :self.history]

    @property
    def future(self) -> np.ndarray:
        return self.samples[:, self.history:]

    def subset(self, idx) -> "Corpus":
        idx = np.asarray(idx)
        return Corpus(self.samples[idx], self.fps, self.history, self.horizon,
                      [self.tags[i] for i in idx])


def _corpus_files(path) -> list[tuple[Path, str]]:
    root = Path(path)
    if root.is_file():
        return [(root, "all")]
    if not root.is_dir():
        raise FileNotFoundError(f"no corpus at {root}")
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            if name.endswith(SUFFIX):
                p = Path(dirpath) / name
                rel = p.parent.relative_to(root)
                tag = rel.parts[0] if rel.parts else "all"
                found.append((p, tag))
    if not found:
        raise FileNotFoundError(f"no {SUFFIX} files under {root}")
    return found


def load_corpus(path, history: int, horizon: int, stride: int | None = None) -> Corpus:
    """Cut every motion file under ``path`` into (H+T)-frame windows.

    Files in a subdirectory are tagged with that subdirectory's name (an action
    label); files at the top level are tagged ``"all"``.
    """
    window = history + horizon
    stride = stride or window
    samples, tags = [], []
    fps = None
    shape = None
    for p, tag in _corpus_files(path):
        seq = read_motion(p)
        if fps is None:
            fps, shape = seq.fps, seq.data.shape[1:]
        elif seq.fps != fps or seq.data.shape[1:] != shape:
            raise ValueError(f"{p}: fps/shape {seq.fps}/{seq.data.shape[1:]} differs from {fps}/{shape}")
        for start in range(0, seq.frames - window + 1, stride):
            samples.append(seq.data[start:start + window])
            tags.append(tag)
    if not samples:
        raise ValueError(f"no file under {path} has {window} frames")
    return Corpus(np.stack(samples), fps, history, horizon, tags)


def corpus_checksum(path) -> str:
    h = hashlib.sha256()
    for p, _ in _corpus_files(path):
        h.update(str(p.relative_to(path) if Path(path).is_dir() else p.name).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def synthetic_corpus(count: int, joints: int, history: int, horizon: int, *, knots: tuple[int, int] = (2, 4),
                     noise_std: float = 0.5, scale: float = 60.0, fps: float = 25.0, seed: int = 0,
                     min_gap: int = 4) -> Corpus:
    """``count`` piecewise-linear motions of a chain skeleton standing along +y.

    Each sample draws its own interior knot count from ``knots`` (inclusive)
    and perturbs the rest pose by ``scale`` mm at every knot.
    """
    rng = np.random.default_rng(seed)
    frames = history + horizon
    rest = np.zeros((joints, 3))
    rest[:, 1] = 100.0 * np.arange(joints)
    samples = []
    for n in range(count):
        k = int(rng.integers(knots[0], knots[1] + 1))
        spec = random_synthetic_spec(rng, joints, frames, k, noise_std, scale, seed=seed * 100003 + n,
                                     min_gap=min_gap, base_pose=rest)
        seq, _ = generate_synthetic(spec)
        samples.append(seq.data)
    return Corpus(np.stack(samples), fps, history, horizon)
