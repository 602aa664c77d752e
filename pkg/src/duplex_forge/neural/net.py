"""Tiny autoregressive frame network with parallel codebook heads.

Input at a stream position is the sum of one embedding row per (stream,
codebook) plus the system text token embedding. Prefix positions embed the
speaker reference (through a learned projection) and the prompt tokens, which
share the text table. A stack of residual tanh-RNN layers produces the hidden
state ``H``; ``2 * n_codebooks`` DAU heads and one text head read ``H`` in
parallel. Gradients are derived by hand (backprop through time).

Head order everywhere: user codebooks ``0..n-1``, system codebooks
``n..2n-1``, text head ``2n``.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from ..codec import CodebookLayout, default_layout
from ..streams import TrainingExample

MAX_CONTEXT = 2048


@dataclass(frozen=True)
class ModelConfig:
    hidden_size: int = 32
    context_length: int = MAX_CONTEXT
    n_layers: int = 1
    layout: CodebookLayout = field(default_factory=default_layout)
    text_vocab_size: int = 1024
    seed: int = 0
    speaker_dim: int = 16
    init_scale: float = 0.1
    head_init_scale: float = 0.0
    dtype: str = "float32"

    def __post_init__(self):
        if self.hidden_size < 4:
            raise ValueError(f"hidden_size must be >= 4, got {self.hidden_size}")
        if not 1 <= self.context_length <= MAX_CONTEXT:
            raise ValueError(f"context_length must be in [1, {MAX_CONTEXT}]")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.text_vocab_size < 4:
            raise ValueError("text_vocab_size must cover the reserved tokens")
        if self.speaker_dim < 1:
            raise ValueError("speaker_dim must be >= 1")
        if self.dtype not in ("float32", "float64", "longdouble"):
            raise ValueError("dtype must be float32, float64 or longdouble")

    @property
    def n_codebooks(self) -> int:
        return self.layout.n_codebooks

    @property
    def n_heads(self) -> int:
        return 2 * self.layout.n_codebooks + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layout"] = asdict(self.layout)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["layout"] = CodebookLayout(**d["layout"])
        return cls(**d)


def reference_vector(slot: str, dim: int) -> np.ndarray:
    """Deterministic unit vector standing in for an external speaker embedding."""
    rng = np.random.default_rng(zlib.crc32(slot.encode("utf-8")))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


@dataclass
class StepLogits:
    heads: list[np.ndarray]
    n_codebooks: int

    @property
    def user(self) -> list[np.ndarray]:
        return self.heads[: self.n_codebooks]

    @property
    def sys(self) -> list[np.ndarray]:
        return self.heads[self.n_codebooks: 2 * self.n_codebooks]

    @property
    def text(self) -> np.ndarray:
        return self.heads[2 * self.n_codebooks]


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def masked_loss(logits: list[np.ndarray], targets: np.ndarray, mask: np.ndarray, *,
                return_grad: bool = False):
    """Mean cross-entropy over (position, head) pairs where ``mask`` is true.

    ``logits[h]`` has shape (N, C_h) and already corresponds to the targets in
    row order, i.e. callers shift by one step before calling. ``targets`` and
    ``mask`` have shape (N, n_heads).
    """
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("loss mask selects no positions")
    total = np.zeros((), dtype=np.result_type(*logits))
    grads = []
    for h, z in enumerate(logits):
        m = mask[:, h]
        if not m.any():
            grads.append(np.zeros_like(z) if return_grad else None)
            continue
        logp = _log_softmax(z)
        rows = np.nonzero(m)[0]
        total = total - logp[rows, targets[rows, h]].sum()
        if return_grad:
            g = np.exp(logp)
            g[np.arange(len(z)), targets[:, h]] -= 1.0
            g *= m[:, None] / count
            grads.append(g)
    # stays a numpy scalar so extended-precision callers keep their precision
    loss = total / count
    return (loss, grads, count) if return_grad else loss


class FrameNet:
    """Parameters plus forward, backward and incremental inference."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None,
                 speaker_encoder: Callable[[str], np.ndarray] | None = None):
        self.config = config
        # hook for externally supplied speaker vectors of size config.speaker_dim
        self.speaker_encoder = speaker_encoder
        self.params = params if params is not None else self._init_params()

    # ---------------------------------------------------------------- params
    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def param_names(self) -> list[str]:
        c = self.config
        n = c.n_codebooks
        names = [f"emb_user_{i}" for i in range(n)] + [f"emb_sys_{i}" for i in range(n)]
        names += ["emb_text", "spk_proj"]
        for l in range(c.n_layers):
            names += [f"rnn{l}_wx", f"rnn{l}_wh", f"rnn{l}_b"]
        names += [f"head_user_{i}" for i in range(n)] + [f"head_sys_{i}" for i in range(n)]
        names += ["head_text"]
        return names

    def head_names(self) -> list[str]:
        n = self.config.n_codebooks
        return [f"head_user_{i}" for i in range(n)] + [f"head_sys_{i}" for i in range(n)] + ["head_text"]

    def _init_params(self) -> dict[str, np.ndarray]:
        c = self.config
        rng = np.random.default_rng(c.seed)
        d, C, V = c.hidden_size, c.layout.codebook_size, c.text_vocab_size
        p = {}
        for name in self.param_names():
            if name.startswith("emb_user") or name.startswith("emb_sys"):
                w = rng.standard_normal((C, d)) * c.init_scale
            elif name == "emb_text":
                w = rng.standard_normal((V, d)) * c.init_scale
            elif name == "spk_proj":
                w = rng.standard_normal((c.speaker_dim, d)) * c.init_scale
            elif name.endswith("_wx") or name.endswith("_wh"):
                w = rng.standard_normal((d, d)) / np.sqrt(d)
            elif name.endswith("_b"):
                w = np.zeros(d)
            elif name == "head_text":
                w = rng.standard_normal((d, V)) * c.head_init_scale
            else:
                w = rng.standard_normal((d, C)) * c.head_init_scale
            p[name] = w.astype(self.dtype)
        return p

    def copy(self) -> "FrameNet":
        return FrameNet(self.config, {k: v.copy() for k, v in self.params.items()}, self.speaker_encoder)

    def astype(self, dtype: str) -> "FrameNet":
        from dataclasses import replace
        cfg = replace(self.config, dtype=dtype)
        return FrameNet(cfg, {k: v.astype(dtype) for k, v in self.params.items()}, self.speaker_encoder)

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    # --------------------------------------------------------------- inputs
    def speaker_vector(self, slot: str) -> np.ndarray:
        if self.speaker_encoder is not None:
            v = np.asarray(self.speaker_encoder(slot), dtype=float)
            if v.shape != (self.config.speaker_dim,):
                raise ValueError(f"speaker encoder returned shape {v.shape}, "
                                 f"expected ({self.config.speaker_dim},)")
            return v.astype(self.dtype)
        return reference_vector(slot, self.config.speaker_dim).astype(self.dtype)

    def _check_codes(self, codes: np.ndarray):
        C = self.config.layout.codebook_size
        if codes.size and (codes.min() < 0 or codes.max() >= C):
            raise ValueError(f"code out of range [0, {C})")

    def _check_text(self, toks: np.ndarray):
        V = self.config.text_vocab_size
        if toks.size and (toks.min() < 0 or toks.max() >= V):
            raise ValueError(f"text token out of range [0, {V})")

    def embed_position(self, user_frame, sys_frame, text_token: int) -> np.ndarray:
        """Sum of the codebook embeddings of both streams plus the text embedding."""
        p = self.params
        u = np.asarray(user_frame, dtype=np.int64)
        s = np.asarray(sys_frame, dtype=np.int64)
        n = self.config.n_codebooks
        if u.shape != (n,) or s.shape != (n,):
            raise ValueError(f"frames must have {n} codes")
        self._check_codes(u)
        self._check_codes(s)
        self._check_text(np.asarray([text_token]))
        x = p["emb_text"][int(text_token)].copy()
        for i in range(n):
            x += p[f"emb_user_{i}"][u[i]]
            x += p[f"emb_sys_{i}"][s[i]]
        return x

    def embed_prefix(self, slot: str, prompt_tokens) -> np.ndarray:
        p = self.params
        toks = np.asarray(prompt_tokens, dtype=np.int64)
        self._check_text(toks)
        spk = self.speaker_vector(slot) @ p["spk_proj"]
        return np.vstack([spk[None, :], p["emb_text"][toks]])

    def embed_example(self, ex: TrainingExample) -> np.ndarray:
        p = self.params
        n = self.config.n_codebooks
        if ex.n_codebooks != n:
            raise ValueError(f"example has {ex.n_codebooks} codebooks, model expects {n}")
        self._check_codes(ex.user_frames)
        self._check_codes(ex.sys_frames)
        self._check_text(ex.sys_text)
        stream = p["emb_text"][ex.sys_text].copy()
        for i in range(n):
            stream += p[f"emb_user_{i}"][ex.user_frames[:, i]]
            stream += p[f"emb_sys_{i}"][ex.sys_frames[:, i]]
        return np.vstack([self.embed_prefix(ex.prefix.speaker_slot, ex.prefix.prompt_tokens), stream])

    # -------------------------------------------------------------- backbone
    def _backbone(self, X: np.ndarray):
        p = self.params
        acts = [X]
        hs = []
        a = X
        for l in range(self.config.n_layers):
            wx, wh, b = p[f"rnn{l}_wx"], p[f"rnn{l}_wh"], p[f"rnn{l}_b"]
            pre = a @ wx + b
            h = np.empty_like(a)
            prev = np.zeros(a.shape[1], dtype=a.dtype)
            for t in range(len(a)):
                prev = np.tanh(pre[t] + prev @ wh)
                h[t] = prev
            a = a + h
            hs.append(h)
            acts.append(a)
        return a, acts, hs

    def hidden_states(self, ex: TrainingExample) -> np.ndarray:
        X = self.embed_example(ex)
        if len(X) > self.config.context_length:
            raise ValueError(f"sequence length {len(X)} exceeds context {self.config.context_length}")
        return self._backbone(X)[0]

    def head_logits(self, H: np.ndarray) -> list[np.ndarray]:
        return [H @ self.params[name] for name in self.head_names()]

    def forward(self, ex: TrainingExample, t: int) -> StepLogits:
        """Logits of every head at position ``t`` (prefix positions included)."""
        if not 0 <= t < len(ex):
            raise IndexError(f"position {t} outside [0, {len(ex)})")
        X = self.embed_example(ex)[: t + 1]
        if len(X) > self.config.context_length:
            raise ValueError(f"position {t} exceeds context {self.config.context_length}")
        H = self._backbone(X)[0][t]
        return StepLogits([H @ self.params[name] for name in self.head_names()], self.config.n_codebooks)

    # ------------------------------------------------------------ loss/grad
    @staticmethod
    def targets(ex: TrainingExample) -> np.ndarray:
        """(T, n_heads) next-step targets for stream positions."""
        return np.hstack([ex.user_frames, ex.sys_frames, ex.sys_text[:, None]])

    def loss(self, ex: TrainingExample, mask: np.ndarray | None = None) -> float:
        return self.loss_and_grads(ex, mask, need_grads=False)[0]

    def loss_and_grads(self, ex: TrainingExample, mask: np.ndarray | None = None, *,
                       need_grads: bool = True):
        """Masked next-step loss and gradients for one example.

        ``mask`` is the full (length, n_heads) mask; defaults to ``ex.loss_mask``.
        Row ``j`` of the mask gates the prediction of position ``j`` from
        position ``j - 1``.
        """
        p = self.params
        mask = ex.loss_mask if mask is None else np.asarray(mask, dtype=bool)
        P, T = ex.prefix_length, ex.n_frames
        if mask.shape != (P + T, self.config.n_heads):
            raise ValueError(f"mask shape {mask.shape} != {(P + T, self.config.n_heads)}")
        if mask[:P].any():
            raise ValueError("loss mask must be false on prefix positions")
        X = self.embed_example(ex)
        if len(X) > self.config.context_length:
            raise ValueError(f"sequence length {len(X)} exceeds context {self.config.context_length}")
        H, acts, hs = self._backbone(X)
        rows = H[P - 1: P + T - 1]
        logits = [rows @ p[name] for name in self.head_names()]
        tgt = self.targets(ex)
        m = mask[P:]
        if not need_grads:
            return masked_loss(logits, tgt, m), None
        loss, dlogits, _ = masked_loss(logits, tgt, m, return_grad=True)

        grads = {}
        d_rows = np.zeros_like(rows)
        for name, g in zip(self.head_names(), dlogits):
            grads[name] = rows.T @ g
            d_rows += g @ p[name].T
        dA = np.zeros_like(H)
        dA[P - 1: P + T - 1] = d_rows

        for l in reversed(range(self.config.n_layers)):
            wx, wh = p[f"rnn{l}_wx"], p[f"rnn{l}_wh"]
            h, a_in = hs[l], acts[l]
            dZ = np.empty_like(h)
            carry = np.zeros(h.shape[1], dtype=h.dtype)
            for t in reversed(range(len(h))):
                dz = (dA[t] + carry) * (1.0 - h[t] ** 2)
                dZ[t] = dz
                carry = dz @ wh.T
            h_prev = np.vstack([np.zeros((1, h.shape[1]), dtype=h.dtype), h[:-1]])
            grads[f"rnn{l}_wx"] = a_in.T @ dZ
            grads[f"rnn{l}_wh"] = h_prev.T @ dZ
            grads[f"rnn{l}_b"] = dZ.sum(axis=0)
            dA = dA + dZ @ wx.T

        dX = dA
        n = self.config.n_codebooks
        g_text = np.zeros_like(p["emb_text"])
        np.add.at(g_text, np.asarray(ex.prefix.prompt_tokens, dtype=np.int64), dX[1:P])
        np.add.at(g_text, ex.sys_text, dX[P:])
        grads["emb_text"] = g_text
        grads["spk_proj"] = np.outer(self.speaker_vector(ex.prefix.speaker_slot), dX[0])
        for i in range(n):
            gu = np.zeros_like(p[f"emb_user_{i}"])
            np.add.at(gu, ex.user_frames[:, i], dX[P:])
            gs = np.zeros_like(p[f"emb_sys_{i}"])
            np.add.at(gs, ex.sys_frames[:, i], dX[P:])
            grads[f"emb_user_{i}"] = gu
            grads[f"emb_sys_{i}"] = gs
        return loss, grads

    def group_nll(self, ex: TrainingExample, heads: list[int]) -> tuple[np.longdouble, int]:
        """Summed masked NLL and count restricted to ``heads``.

        Logits come from the working dtype; normalisation and the sum run in
        extended precision so pooled perplexities do not pick up rounding.
        """
        mask = ex.loss_mask
        P, T = ex.prefix_length, ex.n_frames
        m = mask[P:]
        if not m[:, heads].any():
            return np.longdouble(0), 0
        rows = self.hidden_states(ex)[P - 1: P + T - 1]
        tgt = self.targets(ex)
        names = self.head_names()
        total, count = np.longdouble(0), 0
        for h in heads:
            sel = np.nonzero(m[:, h])[0]
            if len(sel) == 0:
                continue
            logp = _log_softmax((rows[sel] @ self.params[names[h]]).astype(np.longdouble))
            total -= logp[np.arange(len(sel)), tgt[sel, h]].sum()
            count += len(sel)
        return total, count

    # ------------------------------------------------------------- inference
    def start(self, slot: str, prompt_tokens) -> "InferenceState":
        st = InferenceState(self, [np.zeros(self.config.hidden_size, dtype=self.dtype)
                                   for _ in range(self.config.n_layers)])
        for x in self.embed_prefix(slot, prompt_tokens):
            st.push(x)
        return st


class InferenceState:
    """Recurrent state after consuming a prefix of positions."""

    def __init__(self, net: FrameNet, h: list[np.ndarray]):
        self.net = net
        self.h = h
        self.length = 0
        self.last: np.ndarray | None = None

    def push(self, x: np.ndarray) -> None:
        if self.length >= self.net.config.context_length:
            raise ValueError(f"context length {self.net.config.context_length} exceeded")
        p = self.net.params
        a = x
        for l in range(self.net.config.n_layers):
            self.h[l] = np.tanh(a @ p[f"rnn{l}_wx"] + p[f"rnn{l}_b"] + self.h[l] @ p[f"rnn{l}_wh"])
            a = a + self.h[l]
        self.last = a
        self.length += 1

    def push_frame(self, user_frame, sys_frame, text_token: int) -> None:
        self.push(self.net.embed_position(user_frame, sys_frame, text_token))

    def logits(self) -> StepLogits:
        if self.last is None:
            raise RuntimeError("no position consumed yet")
        heads = [z[0] for z in self.net.head_logits(self.last[None, :])]
        return StepLogits(heads, self.net.config.n_codebooks)
