"""Multi-stage snippet-to-motion network.

Every stage runs three steps over the (H+T)-frame unified graph:

1. a 3-layer graph network whose last layer evaluates only the rows of the
   requested future frames, producing the boundary poses of each snippet;
2. linear interpolation between those poses (a fixed matrix product);
3. a residual GCN (encoder, blocks, zero-initialized decoder) that corrects
   the interpolated sequence.

The next stage is seeded with the previous stage's refined future.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autodiff as ad
from .graph import GRAPH_MODES, UnifiedGraph, graph_conv
from .reconstruct import MODES as RECON_MODES, assembly_matrix
from .segment import future_targets, project_future_transitions, segment_history, shared_transitions
from .skeleton import Skeleton

CKPT_MAGIC = b"SNPCKPT1"


@dataclass
class ModelConfig:
    joints: int
    history: int
    horizon: int
    dims: int = 3
    stages: int = 2
    snippets: int = 4
    blocks: int = 3
    hidden: int = 128
    scheme: str = "non_shared"
    graph_mode: str = "unified"
    same_joint_temporal: bool = True
    reconstruction: str = "interpolate"
    bones: list | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("joints", "history", "horizon", "dims", "stages", "snippets", "blocks", "hidden"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.scheme not in ("shared", "non_shared"):
            raise ValueError(f"scheme must be 'shared' or 'non_shared', got {self.scheme!r}")
        if self.graph_mode not in GRAPH_MODES:
            raise ValueError(f"graph_mode must be one of {GRAPH_MODES}, got {self.graph_mode!r}")
        if self.reconstruction not in RECON_MODES:
            raise ValueError(f"reconstruction must be one of {RECON_MODES}, got {self.reconstruction!r}")
        if self.history < self.snippets + 1:
            raise ValueError(f"history {self.history} too short to split into {self.snippets} snippets")
        if self.horizon < self.snippets + 1:
            raise ValueError(f"horizon {self.horizon} too short for {self.snippets} snippets")
        if self.bones is None:
            self.bones = [[j, j + 1] for j in range(self.joints - 1)]
        self.bones = [[int(a), int(b)] for a, b in self.bones]

    @property
    def frames(self) -> int:
        return self.history + self.horizon

    def skeleton(self) -> Skeleton:
        return Skeleton(self.joints, self.bones)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class StageOutput:
    targets: np.ndarray  # (B, S+1) future frame indices
    transitionals: ad.Tensor  # (B, S+1, J, D)
    approx: ad.Tensor  # (B, T, J, D)
    refined: ad.Tensor  # (B, T, J, D)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class _Layer:
    adj: list
    weight: ad.Tensor
    activation: str = "relu"


class SnippetToMotion:
    """Model parameters plus the forward pass.

    Parameters are :class:`autodiff.Tensor` objects named
    ``stage{s}.{trans|refine}.{layer}.{adj|adj_t|adj_s|weight}``; their order
    in :meth:`named_parameters` is the canonical checkpoint order.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        self.skeleton = config.skeleton()
        self.graph = UnifiedGraph(self.skeleton, config.frames, config.graph_mode,
                                  config.same_joint_temporal)
        self.shared_targets: list[int] | None = None
        rng = np.random.default_rng(config.seed)
        self.stages: list[dict[str, _Layer]] = [self._init_stage(s, rng) for s in range(config.stages)]

    # -- parameters -------------------------------------------------------

    def _layer(self, prefix, rng, fan_in, fan_out, activation="relu", zero=False) -> _Layer:
        adj_names = ["adj_t", "adj_s"] if self.graph.mode == "separate" else ["adj"]
        adj = [ad.Tensor(a.copy(), requires_grad=True, name=f"{prefix}.{n}")
               for a, n in zip(self.graph.init_params(), adj_names)]
        w = np.zeros((fan_in, fan_out)) if zero else glorot(rng, fan_in, fan_out)
        return _Layer(adj, ad.Tensor(w, requires_grad=True, name=f"{prefix}.weight"), activation)

    def _init_stage(self, s: int, rng) -> dict[str, _Layer]:
        c = self.config
        D, d = c.dims, c.hidden
        p = f"stage{s}"
        layers = {
            "trans.0": self._layer(f"{p}.trans.0", rng, D, d),
            "trans.1": self._layer(f"{p}.trans.1", rng, d, d),
            "trans.2": self._layer(f"{p}.trans.2", rng, d, D, activation="none"),
            "refine.enc": self._layer(f"{p}.refine.enc", rng, D, d),
        }
        for b in range(c.blocks):
            layers[f"refine.block{b}.0"] = self._layer(f"{p}.refine.block{b}.0", rng, d, d)
            layers[f"refine.block{b}.1"] = self._layer(f"{p}.refine.block{b}.1", rng, d, d, activation="none")
        layers["refine.dec"] = self._layer(f"{p}.refine.dec", rng, d, D, activation="none", zero=True)
        return layers

    def named_parameters(self) -> list[tuple[str, ad.Tensor]]:
        out = []
        for stage in self.stages:
            for layer in stage.values():
                out.extend((t.name, t) for t in layer.adj)
                out.append((layer.weight.name, layer.weight))
        return out

    def parameters(self) -> list[ad.Tensor]:
        return [t for _, t in self.named_parameters()]

    def adjacency_masks(self) -> dict[str, np.ndarray]:
        """Mask for every raw adjacency parameter, keyed by parameter name."""
        masks = self.graph.masks()
        out = {}
        for stage in self.stages:
            for layer in stage.values():
                for t, m in zip(layer.adj, masks):
                    out[t.name] = m
        return out

    def parameter_count(self) -> int:
        return int(np.sum([t.data.size for t in self.parameters()]))

    # -- segmentation -----------------------------------------------------

    def fit_shared(self, past: np.ndarray) -> list[int]:
        """Corpus-level future boundaries: average of every sample's projected transitions."""
        c = self.config
        segs = [project_future_transitions(segment_history(h, c.snippets), c.history, c.horizon, c.snippets)
                for h in past]
        self.shared_targets = shared_transitions(segs).boundaries
        return self.shared_targets

    def targets_for(self, past: np.ndarray) -> np.ndarray:
        """``(B, S+1)`` future boundary frames for a batch of histories."""
        c = self.config
        past = np.asarray(past, dtype=np.float64)
        if c.scheme == "shared":
            shared = self.shared_targets
            if shared is None:
                segs = [project_future_transitions(segment_history(h, c.snippets), c.history, c.horizon,
                                                   c.snippets) for h in past]
                shared = shared_transitions(segs).boundaries
            return np.tile(np.asarray(shared, dtype=np.int64), (len(past), 1))
        return np.array([future_targets(h, c.horizon, c.snippets) for h in past], dtype=np.int64)

    # -- forward pieces ---------------------------------------------------

    def _check_past(self, past) -> np.ndarray:
        c = self.config
        past = np.asarray(past, dtype=np.float64)
        if past.ndim == 3:
            past = past[None]
        if past.shape[1:] != (c.history, c.joints, c.dims):
            raise ValueError(f"history must have shape (B, {c.history}, {c.joints}, {c.dims}), got {past.shape}")
        return past

    def seed_input(self, past, prev_refined=None) -> ad.Tensor:
        """Node features ``(B, F*J, D)``: true history, then either the last observed
        pose repeated or the previous stage's refined future."""
        c = self.config
        past = self._check_past(past)
        B = len(past)
        if prev_refined is None:
            future = ad.Tensor(np.repeat(past[:, -1:], c.horizon, axis=1))
        else:
            future = ad.as_tensor(prev_refined)
            if future.shape != (B, c.horizon, c.joints, c.dims):
                raise ValueError(f"previous refined sequence has shape {future.shape}, "
                                 f"expected {(B, c.horizon, c.joints, c.dims)}")
        seq = ad.concat([ad.Tensor(past), future], axis=1)
        return ad.reshape(seq, (B, c.frames * c.joints, c.dims))

    def _adjacency(self, layer: _Layer) -> ad.Tensor:
        return self.graph.effective(layer.adj)

    def _conv(self, layer: _Layer, x) -> ad.Tensor:
        return graph_conv(self._adjacency(layer), x, layer.weight, layer.activation)

    def target_rows(self, targets) -> np.ndarray:
        """Node rows of every joint at each target future frame, ``(B, K*J)``."""
        c = self.config
        t = np.asarray(targets, dtype=np.int64)
        if t.ndim == 1:
            t = t[None]
        if t.min() < 0 or t.max() >= c.horizon:
            raise IndexError(f"target frames must lie in [0, {c.horizon - 1}], got {t.tolist()}")
        rows = (c.history + t)[:, :, None] * c.joints + np.arange(c.joints)
        return rows.reshape(len(t), -1)

    def hidden_features(self, stage: int, x) -> ad.Tensor:
        """Output of the first two transitional layers over all nodes."""
        layers = self.stages[stage]
        h = self._conv(layers["trans.0"], x)
        return self._conv(layers["trans.1"], h)

    def full_last_layer(self, stage: int, x) -> ad.Tensor:
        """Unrestricted last layer ``A H W + X`` over every node (reference path)."""
        last = self.stages[stage]["trans.2"]
        x = ad.as_tensor(x)
        if x.ndim == 2:
            x = ad.reshape(x, (1, *x.shape))
        return ad.add(graph_conv(self._adjacency(last), self.hidden_features(stage, x), last.weight), x)

    def predict_transitionals(self, stage: int, x, targets) -> ad.Tensor:
        """Poses ``(B, K, J, D)`` at the target future frames.

        The last layer multiplies only the selected adjacency rows into the
        hidden features, so poses at other frames are never computed. The
        seed pose at each target row is added back, so the module predicts an
        offset from the seed rather than absolute coordinates.
        """
        c = self.config
        x = ad.as_tensor(x)
        if x.ndim == 2:
            x = ad.reshape(x, (1, *x.shape))
        targets = np.asarray(targets, dtype=np.int64)
        if targets.ndim == 1:
            targets = np.tile(targets, (x.shape[0], 1))
        rows = self.target_rows(targets)
        last = self.stages[stage]["trans.2"]
        h = self.hidden_features(stage, x)
        a_rows = ad.select_rows(self._adjacency(last), rows)  # (B, K*J, n)
        out = ad.add(ad.matmul(ad.matmul(a_rows, h), last.weight), ad.select_rows(x, rows))
        return ad.reshape(out, (x.shape[0], targets.shape[1], c.joints, c.dims))

    def assemble(self, transitionals, targets) -> ad.Tensor:
        """Interpolated future ``(B, T, J, D)`` from boundary poses at ``targets``."""
        c = self.config
        P = ad.as_tensor(transitionals)
        B, K = P.shape[:2]
        M = np.stack([assembly_matrix(t, c.reconstruction) for t in np.asarray(targets)])
        if M.shape[1] != c.horizon:
            raise ValueError(f"targets must span [0, {c.horizon - 1}]")
        flat = ad.matmul(ad.Tensor(M), ad.reshape(P, (B, K, c.joints * c.dims)))
        return ad.reshape(flat, (B, c.horizon, c.joints, c.dims))

    def refine(self, stage: int, past, approx) -> ad.Tensor:
        """Residual correction of the interpolated future."""
        c = self.config
        past = self._check_past(past)
        approx = ad.as_tensor(approx)
        if approx.ndim == 3:
            approx = ad.reshape(approx, (1, *approx.shape))
        B = len(past)
        if approx.shape != (B, c.horizon, c.joints, c.dims):
            raise ValueError(f"approx has shape {approx.shape}, expected {(B, c.horizon, c.joints, c.dims)}")
        layers = self.stages[stage]
        x = ad.reshape(ad.concat([ad.Tensor(past), approx], axis=1), (B, c.frames * c.joints, c.dims))
        h = self._conv(layers["refine.enc"], x)
        for b in range(c.blocks):
            y = self._conv(layers[f"refine.block{b}.0"], h)
            y = self._conv(layers[f"refine.block{b}.1"], y)
            h = ad.relu(ad.add(y, h))
        delta = self._conv(layers["refine.dec"], h)
        future = ad.getitem(delta, (slice(None), slice(c.history * c.joints, None)))
        return ad.add(approx, ad.reshape(future, (B, c.horizon, c.joints, c.dims)))

    def forward(self, past, targets=None) -> list[StageOutput]:
        past = self._check_past(past)
        if targets is None:
            targets = self.targets_for(past)
        targets = np.asarray(targets, dtype=np.int64)
        if targets.ndim == 1:
            targets = np.tile(targets, (len(past), 1))
        outputs = []
        prev = None
        for s in range(self.config.stages):
            x = self.seed_input(past, prev)
            trans = self.predict_transitionals(s, x, targets)
            approx = self.assemble(trans, targets)
            refined = self.refine(s, past, approx)
            outputs.append(StageOutput(targets, trans, approx, refined))
            prev = refined
        return outputs

    def predict(self, past, targets=None) -> np.ndarray:
        """Final refined future as a plain array (leading batch axis kept if given)."""
        single = np.asarray(past).ndim == 3
        out = self.forward(past, targets)[-1].refined.data
        return out[0] if single else out


# -- checkpoints ----------------------------------------------------------

def encode_checkpoint(model: SnippetToMotion) -> bytes:
    meta = {"config": model.config.to_dict(), "shared_targets": model.shared_targets}
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [CKPT_MAGIC, struct.pack("<I", len(meta_bytes)), meta_bytes]
    named = model.named_parameters()
    parts.append(struct.pack("<I", len(named)))
    for name, t in named:
        nb = name.encode("utf-8")
        parts.append(struct.pack("<I", len(nb)) + nb)
        parts.append(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_checkpoint(blob: bytes) -> SnippetToMotion:
    if blob[:len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise ValueError("not a checkpoint: bad magic")
    pos = len(CKPT_MAGIC)

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, blob, pos)
        pos += struct.calcsize(fmt)
        return vals

    (meta_len,) = take("<I")
    meta = json.loads(blob[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    model = SnippetToMotion(ModelConfig.from_dict(meta["config"]))
    model.shared_targets = meta["shared_targets"]
    params = dict(model.named_parameters())
    (count,) = take("<I")
    if count != len(params):
        raise ValueError(f"checkpoint holds {count} tensors, model expects {len(params)}")
    for _ in range(count):
        (nlen,) = take("<I")
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = take("<I")
        shape = take(f"<{ndim}I")
        size = int(np.prod(shape)) * 8
        if name not in params or params[name].shape != tuple(shape):
            raise ValueError(f"unexpected tensor {name} {shape}")
        params[name].data = np.frombuffer(blob[pos:pos + size], dtype="<f8").reshape(shape).astype(np.float64)
        pos += size
    if pos != len(blob):
        raise ValueError(f"{len(blob) - pos} trailing bytes in checkpoint")
    return model


def save_checkpoint(model: SnippetToMotion, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(model))


def load_checkpoint(path) -> SnippetToMotion:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
