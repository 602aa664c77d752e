"""Temperature / top-k / nucleus sampling, one independent draw per head."""

from __future__ import annotations

import numpy as np

from .net import StepLogits

DEFAULT_TEMPERATURE = 0.9
DEFAULT_TOP_K = 40
DEFAULT_TOP_P = 1.0


def sample_logits(logits: np.ndarray, temperature: float, top_k: int, top_p: float,
                  rng: np.random.Generator) -> int:
    """Draw one index. Exactly one uniform is consumed per call."""
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    if not 0 < top_p <= 1:
        raise ValueError("top_p must be in (0, 1]")
    z = np.asarray(logits, dtype=np.float64)
    if not 1 <= top_k:
        raise ValueError("top_k must be >= 1")
    u = rng.random()
    k = min(int(top_k), z.size)
    # stable descending order so ties resolve to the lowest index, like argmax
    order = np.argsort(-z, kind="stable")[:k]
    if k == 1:
        return int(order[0])
    scaled = z[order] / temperature
    probs = np.exp(scaled - scaled[0])
    probs /= probs.sum()
    if top_p < 1.0:
        cut = int(np.searchsorted(np.cumsum(probs), top_p) + 1)
        probs = probs[:cut] / probs[:cut].sum()
        order = order[:cut]
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return int(order[min(idx, len(order) - 1)])


def sample_step(logits: StepLogits, temperature: float = DEFAULT_TEMPERATURE, top_k: int = DEFAULT_TOP_K,
                top_p: float = DEFAULT_TOP_P, rng: np.random.Generator | None = None):
    """System frame (one code per system head) and a text token.

    User heads are never sampled.
    """
    rng = np.random.default_rng() if rng is None else rng
    frame = tuple(sample_logits(z, temperature, top_k, top_p, rng) for z in logits.sys)
    text = sample_logits(logits.text, temperature, top_k, top_p, rng)
    return frame, text
