"""
The unified spatio-temporal graph
=================================

Nodes are (frame, joint) pairs. Bone pairs connect within and across frames,
and each joint also links to itself at every other frame. One graph
convolution therefore reaches any frame, which the spatial-only ablation
cannot do.
"""
import numpy as np

from snipmotion.graph import apply_mask, build_mask, graph_conv, init_adjacency, node_index
from snipmotion.skeleton import Skeleton

sk = Skeleton(4, [(0, 1), (1, 2), (1, 3)])
F = 3
unified = build_mask(sk, F, "unified")
spatial = build_mask(sk, F, "spatial_only")
print("nodes:", unified.shape[0])
print("edges per node, unified:", unified.sum(axis=1).astype(int))
print("edges per node, spatial only:", spatial.sum(axis=1).astype(int))

# joint 0 at frame 0 sees joint 1 at frame 2 directly
print("edge (t=0, j=0) -> (t=2, j=1):", unified[node_index(0, 0, 4), node_index(2, 1, 4)])
print("edge (t=0, j=0) -> (t=2, j=2):", unified[node_index(0, 0, 4), node_index(2, 2, 4)])

# nudge frame 0 and see which frames of the output move
rng = np.random.default_rng(0)
X = rng.normal(size=(F * 4, 3))
W = rng.normal(size=(3, 3))
Y = X.copy()
Y[:4] += 1.0
for name, mask in [("unified", unified), ("spatial_only", spatial)]:
    A = apply_mask(init_adjacency(mask), mask)
    diff = np.abs(graph_conv(A, Y, W).data - graph_conv(A, X, W).data).reshape(F, 4, 3)
    print(name, "per-frame change:", diff.max(axis=(1, 2)).round(3))
