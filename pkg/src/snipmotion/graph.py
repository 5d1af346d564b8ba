"""Unified spatio-temporal graph over (frame, joint) nodes.

Node ``(t, j)`` has index ``t * J + j``. In the unified graph two nodes are
linked when their joints share a bone (same or different frames), when they
are the same joint at different frames, or when they are the same node.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .skeleton import Skeleton

GRAPH_MODES = ("unified", "separate", "spatial_only")


def node_index(t: int, j: int, J: int) -> int:
    return t * J + j


def spatial_mask(skeleton: Skeleton) -> np.ndarray:
    """Bones plus self-loops, ``(J, J)``."""
    return skeleton.adjacency() + np.eye(skeleton.joint_count)


def build_mask(skeleton: Skeleton, frames: int, mode: str = "unified",
               same_joint_temporal: bool = True):
    """Binary edge mask for ``frames`` copies of ``skeleton``.

    ``unified`` and ``spatial_only`` return one ``(F*J, F*J)`` matrix.
    ``separate`` returns ``(spatial (J, J), temporal (F, F))`` for the factored
    path, where the effective adjacency is ``kron(temporal, spatial)``.
    """
    if frames < 1:
        raise ValueError("frames must be >= 1")
    bones = skeleton.adjacency()
    eye_j = np.eye(skeleton.joint_count)
    eye_f = np.eye(frames)
    if mode == "spatial_only":
        return np.kron(eye_f, bones + eye_j)
    if mode == "unified":
        cross = 1.0 - eye_f
        joint_link = bones + eye_j if same_joint_temporal else bones
        # same frame: bones + diagonal; different frames: bones (+ same joint)
        return np.kron(eye_f, bones + eye_j) + np.kron(cross, joint_link)
    if mode == "separate":
        return bones + eye_j, np.ones((frames, frames))
    raise ValueError(f"unknown graph mode {mode!r}")


def init_adjacency(mask: np.ndarray) -> np.ndarray:
    """Row-normalized mask: each edge starts at 1 / (row degree)."""
    deg = mask.sum(axis=1, keepdims=True)
    return mask / np.where(deg > 0, deg, 1.0)


def apply_mask(adjacency, mask):
    """Elementwise product; works on arrays or autodiff tensors."""
    a_shape = adjacency.shape
    m = np.asarray(mask, dtype=np.float64)
    if tuple(a_shape) != m.shape:
        raise ValueError(f"adjacency {tuple(a_shape)} and mask {m.shape} differ")
    if isinstance(adjacency, ad.Tensor):
        return ad.mul(adjacency, m)
    return np.asarray(adjacency, dtype=np.float64) * m


def graph_conv(adjacency, features, weights, activation: str = "none"):
    """``act(A @ X @ W)``; ``features`` may carry a leading batch axis."""
    A, X, W = ad.as_tensor(adjacency), ad.as_tensor(features), ad.as_tensor(weights)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[1] != X.shape[-2]:
        raise ValueError(f"adjacency {A.shape} incompatible with features {X.shape}")
    if X.shape[-1] != W.shape[0]:
        raise ValueError(f"features {X.shape} incompatible with weights {W.shape}")
    out = ad.matmul(ad.matmul(A, X), W)
    if activation == "relu":
        return ad.relu(out)
    if activation != "none":
        raise ValueError(f"unknown activation {activation!r}")
    return out


@dataclass
class UnifiedGraph:
    """Mask plus trainable adjacency values for one graph layer."""

    skeleton: Skeleton
    frames: int
    mode: str = "unified"
    same_joint_temporal: bool = True

    def __post_init__(self):
        if self.mode not in GRAPH_MODES:
            raise ValueError(f"unknown graph mode {self.mode!r}")
        self.mask = build_mask(self.skeleton, self.frames, self.mode, self.same_joint_temporal)

    @property
    def nodes(self) -> int:
        return self.frames * self.skeleton.joint_count

    def init_params(self) -> list[np.ndarray]:
        """Initial raw adjacency values (one array, or two for ``separate``)."""
        if self.mode == "separate":
            spatial, temporal = self.mask
            return [init_adjacency(temporal), init_adjacency(spatial)]
        return [init_adjacency(self.mask)]

    def masks(self) -> list[np.ndarray]:
        if self.mode == "separate":
            spatial, temporal = self.mask
            return [temporal, spatial]
        return [self.mask]

    def effective(self, params):
        """Masked ``(F*J, F*J)`` adjacency built from the raw parameter tensors."""
        masked = [apply_mask(p, m) for p, m in zip(params, self.masks())]
        if self.mode == "separate":
            return ad.kron(masked[0], masked[1])
        return masked[0]
