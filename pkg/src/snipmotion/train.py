"""Losses, optimizer, training loop and per-timestamp evaluation."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .io import Corpus
from .model import SnippetToMotion, StageOutput
from .skeleton import MotionSequence


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    decay_factor: float = 0.96
    decay_every: int = 4
    epochs: int = 50
    batch_size: int = 16
    clip_norm: float = 1.0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # intermediate-supervision term weights
    w_mpjpe: float = 1.0
    w_velocity: float = 1.0
    w_transitional: float = 1.0

    def __post_init__(self):
        for name in ("learning_rate", "decay_factor", "clip_norm", "eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("decay_every", "epochs", "batch_size"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class LossReport:
    total: float
    mpjpe: float
    velocity: float
    per_stage: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _raw(x):
    if isinstance(x, MotionSequence):
        return x.data
    return x


def mpjpe(pred, truth):
    """Mean over every (sample, frame, joint) of the Euclidean joint distance.

    Returns a Tensor when either input is one, else a float.
    """
    pred, truth = _raw(pred), _raw(truth)
    track = isinstance(pred, ad.Tensor) or isinstance(truth, ad.Tensor)
    ps = pred.shape if isinstance(pred, ad.Tensor) else np.shape(pred)
    ts = truth.shape if isinstance(truth, ad.Tensor) else np.shape(truth)
    if tuple(ps) != tuple(ts):
        raise ValueError(f"shape mismatch {tuple(ps)} vs {tuple(ts)}")
    out = ad.mean(ad.norm(ad.sub(pred, truth), axis=-1))
    return out if track else float(out.data)


def _time_diff(x):
    # time is the third axis from the end: (..., T, J, D)
    x = ad.as_tensor(x)
    head = (Ellipsis, slice(1, None), slice(None), slice(None))
    tail = (Ellipsis, slice(None, -1), slice(None), slice(None))
    return ad.sub(ad.getitem(x, head), ad.getitem(x, tail))


def velocity_loss(pred, truth):
    """Mean joint distance between first temporal differences."""
    pred, truth = _raw(pred), _raw(truth)
    track = isinstance(pred, ad.Tensor) or isinstance(truth, ad.Tensor)
    frames = (pred.shape if isinstance(pred, ad.Tensor) else np.shape(pred))[-3]
    if frames < 2:
        raise ValueError("velocity loss needs at least 2 frames")
    out = mpjpe(_time_diff(pred), _time_diff(truth))
    return out if track else float(out.data)


def gather_frames(future: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """``future[b, targets[b]]`` for every batch element."""
    return np.take_along_axis(future, targets[:, :, None, None], axis=1)


def total_loss(stage_outputs: Sequence[StageOutput], truth, config: TrainConfig | None = None):
    """Sum over stages of refined MPJPE + velocity + transitional MPJPE.

    Returns ``(loss tensor, LossReport)``.
    """
    cfg = config or TrainConfig()
    truth = np.asarray(_raw(truth), dtype=np.float64)
    total = None
    per_stage = []
    for out in stage_outputs:
        m = mpjpe(out.refined, truth)
        v = velocity_loss(out.refined, truth)
        tr = mpjpe(out.transitionals, gather_frames(truth, out.targets))
        stage_total = cfg.w_mpjpe * m + cfg.w_velocity * v + cfg.w_transitional * tr
        total = stage_total if total is None else total + stage_total
        per_stage.append({"mpjpe": float(m.data), "velocity": float(v.data),
                          "transitional": float(tr.data), "total": float(stage_total.data)})
    last = per_stage[-1]
    report = LossReport(float(total.data), last["mpjpe"], last["velocity"], per_stage)
    return total, report


def clip_grad_norm(grads: Sequence[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Scale all gradients together so their global L2 norm is at most ``max_norm``."""
    norm = math.sqrt(float(np.sum([np.sum(g * g) for g in grads])))
    if norm <= max_norm or norm == 0.0:
        return list(grads), norm
    scale = max_norm / norm
    return [g * scale for g in grads], norm


def learning_rate_at(config: TrainConfig, epoch: int) -> float:
    """Step decay; ``epoch`` is 0-based."""
    return config.learning_rate * config.decay_factor ** (epoch // config.decay_every)


class Adam:
    def __init__(self, params: Sequence[ad.Tensor], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train_step(model: SnippetToMotion, optimizer: Adam, past, future, targets,
               config: TrainConfig) -> LossReport:
    for p in optimizer.params:
        if not np.all(np.isfinite(p.data)):
            raise ad.NonFiniteError(f"non-finite values in {p.name}")
    outputs = model.forward(past, targets)
    loss, report = total_loss(outputs, future, config)
    if not math.isfinite(report.total):
        bad = ad.first_nonfinite(loss)
        label = bad.name or bad._op if bad is not None else "loss"
        raise ad.NonFiniteError(f"non-finite loss; first non-finite tensor: {label}")
    params = optimizer.params
    ad.backward(loss, params)
    grads, _ = clip_grad_norm([p.grad for p in params], config.clip_norm)
    for p, g in zip(params, grads):
        if not np.all(np.isfinite(g)):
            raise ad.NonFiniteError(f"non-finite gradient for {p.name}")
    optimizer.step(grads)
    return report


def _mean_reports(reports: Sequence[LossReport], weights: Sequence[int]) -> LossReport:
    w = np.asarray(weights, dtype=np.float64) / np.sum(weights)

    def avg(values):
        return float(np.dot(w, values))

    per_stage = [{k: avg([r.per_stage[s][k] for r in reports]) for k in reports[0].per_stage[s]}
                 for s in range(len(reports[0].per_stage))]
    return LossReport(avg([r.total for r in reports]), avg([r.mpjpe for r in reports]),
                      avg([r.velocity for r in reports]), per_stage)


def train_epoch(model: SnippetToMotion, corpus: Corpus, config: TrainConfig, optimizer: Adam,
                epoch: int, rng: np.random.Generator, targets: np.ndarray | None = None) -> LossReport:
    """One pass over the shuffled corpus; returns the sample-weighted mean report."""
    if config.batch_size > len(corpus):
        raise ValueError(f"batch_size {config.batch_size} exceeds corpus size {len(corpus)}")
    if targets is None:
        targets = model.targets_for(corpus.past)
    optimizer.lr = learning_rate_at(config, epoch)
    order = rng.permutation(len(corpus))
    reports, sizes = [], []
    for start in range(0, len(order), config.batch_size):
        idx = np.sort(order[start:start + config.batch_size])
        reports.append(train_step(model, optimizer, corpus.past[idx], corpus.future[idx], targets[idx], config))
        sizes.append(len(idx))
    return _mean_reports(reports, sizes)


def fit(model: SnippetToMotion, corpus: Corpus, config: TrainConfig, log_path=None,
        on_epoch: Callable[[int, LossReport], None] | None = None) -> list[LossReport]:
    """Train for ``config.epochs`` epochs, optionally writing a JSON-lines log."""
    rng = np.random.default_rng(config.seed)
    if model.config.scheme == "shared":
        model.fit_shared(corpus.past)
    targets = model.targets_for(corpus.past)
    optimizer = Adam(model.parameters(), config.learning_rate, config.beta1, config.beta2, config.eps)
    history = []
    log = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(config.epochs):
            report = train_epoch(model, corpus, config, optimizer, epoch, rng, targets)
            history.append(report)
            if log:
                record = {"epoch": epoch, "lr": optimizer.lr, "total": report.total, "mpjpe": report.mpjpe,
                          "velocity": report.velocity, "per_stage": report.per_stage}
                log.write(json.dumps(record) + "\n")
            if on_epoch:
                on_epoch(epoch, report)
    finally:
        if log:
            log.close()
    return history


def timestamp_to_frame(ms: float, fps: float, horizon: int) -> int:
    """0-based future frame reached ``ms`` milliseconds after the last observed frame."""
    frame = int(np.floor(ms * fps / 1000.0 + 0.5)) - 1
    if frame < 0:
        raise ValueError(f"{ms} ms is before the first predicted frame at {fps} fps")
    if frame >= horizon:
        raise ValueError(f"{ms} ms (frame {frame}) is beyond the {horizon}-frame horizon")
    return frame


def predict_corpus(model: SnippetToMotion, corpus: Corpus, chunk: int = 64) -> np.ndarray:
    out = [model.predict(corpus.past[i:i + chunk]) for i in range(0, len(corpus), chunk)]
    return np.concatenate(out)


def per_frame_mpjpe(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """MPJPE at every future frame, averaged over samples and joints: shape (T,)."""
    return np.linalg.norm(pred - truth, axis=-1).mean(axis=(0, 2))


def evaluate(model, corpus: Corpus, timestamps_ms: Sequence[float], predictions: np.ndarray | None = None
             ) -> dict[float, float]:
    """Per-frame (not cumulative) MPJPE at each timestamp, averaged over the corpus."""
    frames = [timestamp_to_frame(ms, corpus.fps, corpus.horizon) for ms in timestamps_ms]
    pred = predict_corpus(model, corpus) if predictions is None else predictions
    err = per_frame_mpjpe(pred, corpus.future)
    return {ms: float(err[f]) for ms, f in zip(timestamps_ms, frames)}


def evaluate_by_tag(model, corpus: Corpus, timestamps_ms: Sequence[float], predictions: np.ndarray | None = None
                    ) -> dict[str, dict[float, float]]:
    """Rows per action tag plus an ``"all"`` row."""
    pred = predict_corpus(model, corpus) if predictions is None else predictions
    tags = np.asarray(corpus.tags)
    table = {}
    for tag in sorted(set(corpus.tags) - {"all"}):
        sel = np.flatnonzero(tags == tag)
        table[tag] = evaluate(model, corpus.subset(sel), timestamps_ms, pred[sel])
    table["all"] = evaluate(model, corpus, timestamps_ms, pred)
    return table
