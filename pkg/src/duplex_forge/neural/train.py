"""Gradient descent, perplexity, finite-difference checks and the estimator wrapper."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..codec import CodebookLayout, default_layout
from ..streams import TrainingExample
from .net import FrameNet, ModelConfig

DAU, TEXT = "dau", "text"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    net: FrameNet
    losses: list[float] = field(default_factory=list)
    start_step: int = 0

    @property
    def steps(self) -> list[int]:
        return list(range(self.start_step + 1, self.start_step + len(self.losses) + 1))


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))


def accumulated_gradient(net: FrameNet, batch: Sequence[TrainingExample]):
    """Mean loss and mean gradient over ``batch``."""
    total = 0.0
    acc = None
    for ex in batch:
        loss, grads = net.loss_and_grads(ex)
        total += loss
        if acc is None:
            acc = {k: v.copy() for k, v in grads.items()}
        else:
            for k, v in grads.items():
                acc[k] += v
    k = len(batch)
    return float(total) / k, {name: g / k for name, g in acc.items()}


def train(net: FrameNet, examples: Sequence[TrainingExample], steps: int, lr: float,
          accumulation: int = 1, clip_norm: float | None = 1.0, start_step: int = 0,
          callback: Callable[[int, float], None] | None = None) -> TrainResult:
    """Plain gradient descent with gradient accumulation and global-norm clipping.

    Optimizer step ``s`` consumes micro-batches ``s*accumulation .. (s+1)*accumulation - 1``
    cycling through ``examples``. Updates ``net`` in place.
    """
    if not examples:
        raise ValueError("no training examples")
    if accumulation < 1:
        raise ValueError("accumulation must be >= 1")
    result = TrainResult(net, [], start_step)
    n = len(examples)
    for s in range(start_step, start_step + steps):
        batch = [examples[(s * accumulation + i) % n] for i in range(accumulation)]
        loss, grads = accumulated_gradient(net, batch)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"loss is {loss} at step {s + 1}")
        if clip_norm is not None:
            norm = global_norm(grads)
            if norm > clip_norm:
                scale = clip_norm / norm
                grads = {k: g * scale for k, g in grads.items()}
        if lr:
            for k, g in grads.items():
                net.params[k] -= (lr * g).astype(net.params[k].dtype)
        result.losses.append(loss)
        if callback is not None:
            callback(s + 1, loss)
    return result


def head_group(net: FrameNet, group: str) -> list[int]:
    n = net.config.n_codebooks
    if group == DAU:
        return list(range(2 * n))
    if group == TEXT:
        return [2 * n]
    raise ValueError(f"unknown head group {group!r}")


def perplexity(net: FrameNet, examples: Sequence[TrainingExample], group: str = DAU) -> float:
    """exp of the mean masked cross-entropy over one head group, pooled across examples.

    Logits are computed in double precision; pooling and the exponential use
    extended precision, so a uniform model scores exactly its codebook size.
    """
    heads = head_group(net, group)
    if net.dtype != np.float64:
        net = net.astype("float64")
    total, count = np.longdouble(0), 0
    for ex in examples:
        s, c = net.group_nll(ex, heads)
        total += s
        count += c
    if count == 0:
        raise ValueError("loss mask selects no positions for this head group")
    return float(np.exp(total / count))


# ------------------------------------------------------------------ grad check


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    per_param: dict[str, float]
    worst: tuple[str, tuple[int, ...]] | None


def relative_error(analytic: float, numeric: float) -> float:
    denom = max(abs(analytic), abs(numeric))
    return 0.0 if denom == 0.0 else abs(analytic - numeric) / denom


def _candidate_indices(net: FrameNet, ex: TrainingExample, name: str, rng, k: int):
    """Entries of ``name`` that influence the loss, sampled without replacement."""
    w = net.params[name]
    n = net.config.n_codebooks
    if name.startswith("emb_user_"):
        rows = np.unique(ex.user_frames[:, int(name.rsplit("_", 1)[1])])
    elif name.startswith("emb_sys_"):
        rows = np.unique(ex.sys_frames[:, int(name.rsplit("_", 1)[1])])
    elif name == "emb_text":
        rows = np.unique(np.concatenate([np.asarray(ex.prefix.prompt_tokens), ex.sys_text]))
    elif name.startswith("head_"):
        tgt = FrameNet.targets(ex)
        h = net.head_names().index(name)
        cols = np.unique(tgt[:, h])
        picks = [(int(rng.integers(w.shape[0])), int(rng.choice(cols))) for _ in range(k)]
        return list(dict.fromkeys(picks))
    else:
        flat = rng.choice(w.size, size=min(k, w.size), replace=False)
        return [np.unravel_index(int(i), w.shape) for i in flat]
    picks = [(int(rng.choice(rows)), int(rng.integers(w.shape[1]))) for _ in range(k)]
    return list(dict.fromkeys(picks))


def grad_check(net: FrameNet, example: TrainingExample, eps: float = 1e-5, *, per_param: int = 6,
               seed: int = 0, mask: np.ndarray | None = None) -> GradCheckResult:
    """Compare analytic gradients with central differences on a sample of entries.

    The analytic gradient is taken in double precision. The differences are
    evaluated on an extended-precision copy so that loss roundoff does not
    swamp the comparison. Every parameter tensor is sampled (``per_param``
    entries each, at least 100 in total).
    """
    _, grads = net.astype("float64").loss_and_grads(example, mask)
    net64 = net.astype("float64").astype("longdouble")
    rng = np.random.default_rng(seed)
    names = net64.param_names()
    k = max(per_param, math.ceil(100 / len(names)))
    worst, worst_at = 0.0, None
    per: dict[str, float] = {}
    total = 0
    for name in names:
        w = net64.params[name]
        per[name] = 0.0
        for idx in _candidate_indices(net64, example, name, rng, k):
            idx = tuple(idx)
            old = w[idx]
            w[idx] = old + np.longdouble(eps)
            up = net64.loss(example, mask)
            w[idx] = old - np.longdouble(eps)
            down = net64.loss(example, mask)
            w[idx] = old
            numeric = float((up - down) / (2 * np.longdouble(eps)))
            err = relative_error(float(grads[name][idx]), numeric)
            per[name] = max(per[name], err)
            total += 1
            if err > worst:
                worst, worst_at = err, (name, idx)
    return GradCheckResult(worst, total, per, worst_at)


# ------------------------------------------------------------------ checkpoints

_CKPT_MAGIC = b"DFCKPT"
_CKPT_VERSION = 1


def save_checkpoint(net: FrameNet, path, step: int = 0, extra: dict | None = None) -> None:
    """Binary file: magic, version, JSON header length, JSON header, raw tensors."""
    names = net.param_names()
    header = {
        "config": net.config.to_dict(),
        "step": step,
        "tensors": [{"name": n, "shape": list(net.params[n].shape), "dtype": net.params[n].dtype.str}
                    for n in names],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<II", _CKPT_VERSION, len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(net.params[n]).tobytes())


def load_checkpoint(path) -> tuple[FrameNet, int, dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(_CKPT_MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    pos = len(_CKPT_MAGIC)
    version, hlen = struct.unpack("<II", data[pos:pos + 8])
    if version != _CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos += 8
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    params = {}
    for t in header["tensors"]:
        dt = np.dtype(t["dtype"])
        size = int(np.prod(t["shape"])) * dt.itemsize
        params[t["name"]] = np.frombuffer(data[pos:pos + size], dtype=dt).reshape(t["shape"]).copy()
        pos += size
    cfg = ModelConfig.from_dict(header["config"])
    return FrameNet(cfg, params), int(header["step"]), header.get("extra", {})


# -------------------------------------------------------------------- estimator


class DuplexFrameModel(BaseEstimator):
    """Estimator wrapper around :class:`FrameNet`.

    ``fit`` trains on a list of :class:`TrainingExample`; ``score`` returns the
    negative mean masked loss. The optimiser defaults (lr 5e-5, accumulation 8,
    clipping at 1.0) are the reference settings; tiny desk-scale models usually
    need a learning rate several orders of magnitude larger.
    """

    def __init__(self, hidden_size=32, n_layers=1, context_length=2048, layout=None, text_vocab_size=1024,
                 seed=0, speaker_dim=16, init_scale=0.1, head_init_scale=0.0, dtype="float32",
                 lr=5e-5, steps=100, accumulation=8, clip_norm=1.0, speaker_encoder=None):
        self.hidden_size = hidden_size
        self.n_layers = n_layers
        self.context_length = context_length
        self.layout = layout
        self.text_vocab_size = text_vocab_size
        self.seed = seed
        self.speaker_dim = speaker_dim
        self.init_scale = init_scale
        self.head_init_scale = head_init_scale
        self.dtype = dtype
        self.lr = lr
        self.steps = steps
        self.accumulation = accumulation
        self.clip_norm = clip_norm
        self.speaker_encoder = speaker_encoder

    def model_config(self) -> ModelConfig:
        layout = self.layout
        if layout is None:
            layout = default_layout()
        elif isinstance(layout, str):
            layout = default_layout(layout)
        elif not isinstance(layout, CodebookLayout):
            raise TypeError("layout must be None, a kind string or a CodebookLayout")
        return ModelConfig(hidden_size=self.hidden_size, context_length=self.context_length,
                           n_layers=self.n_layers, layout=layout, text_vocab_size=self.text_vocab_size,
                           seed=self.seed, speaker_dim=self.speaker_dim, init_scale=self.init_scale,
                           head_init_scale=self.head_init_scale, dtype=self.dtype)

    def _init_net(self):
        self.net_ = FrameNet(self.model_config(), speaker_encoder=self.speaker_encoder)
        self.loss_curve_ = []
        self.n_steps_ = 0

    def fit(self, X, y=None, callback=None):
        self._init_net()
        return self.partial_fit(X, callback=callback)

    def partial_fit(self, X, y=None, callback=None):
        """Continue training from the current step counter."""
        if not hasattr(self, "net_"):
            self._init_net()
        examples = list(X)
        res = train(self.net_, examples, self.steps, self.lr, self.accumulation, self.clip_norm,
                    start_step=self.n_steps_, callback=callback)
        self.loss_curve_.extend(res.losses)
        self.n_steps_ += len(res.losses)
        return self

    def initialize(self):
        """Fresh untrained parameters, no training."""
        self._init_net()
        return self

    def loss(self, examples) -> float:
        check_is_fitted(self, "net_")
        return float(np.mean([self.net_.loss(ex) for ex in examples]))

    def score(self, X, y=None) -> float:
        return -self.loss(X)

    def perplexity(self, X, group: str = DAU) -> float:
        check_is_fitted(self, "net_")
        return perplexity(self.net_, list(X), group)

    def predict_logits(self, example: TrainingExample, t: int):
        check_is_fitted(self, "net_")
        return self.net_.forward(example, t)

    def save(self, path) -> None:
        check_is_fitted(self, "net_")
        save_checkpoint(self.net_, path, self.n_steps_)

    @classmethod
    def load(cls, path) -> "DuplexFrameModel":
        net, step, _ = load_checkpoint(path)
        c = net.config
        est = cls(hidden_size=c.hidden_size, n_layers=c.n_layers, context_length=c.context_length,
                  layout=c.layout, text_vocab_size=c.text_vocab_size, seed=c.seed, speaker_dim=c.speaker_dim,
                  init_scale=c.init_scale, head_init_scale=c.head_init_scale, dtype=c.dtype)
        est.net_ = net
        est.n_steps_ = step
        est.loss_curve_ = []
        return est

