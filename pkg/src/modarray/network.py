"""Feed-forward policy network, written directly on numpy.

Shared trunk of SiLU layers with dropout, then four affine heads: per-stream
power logits, a scalar total-power logit, and two 3-way softmax heads that
pick the horizontal/vertical activation counts.  Forward, backward, and a
bit-exact JSON checkpoint format live here; the training loop is separate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import SvdResult
from .distortion import TransmitCovariance
from .features import R_NORM_M
from .geometry import ModularConfig, modular_mask

TRUNK_WIDTHS = (64, 128, 128, 128, 128, 64, 64)
HEAD_NAMES = ("power", "scale", "cx", "cy")
DROPOUT_RATE = 0.1
CHECKPOINT_VERSION = 1


def silu(x):
    return x * sigmoid(x)


def silu_grad(x):
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def softmax(logits, axis=-1):
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


@dataclass
class NetworkParams:
    """Weights stored as (fan_in, fan_out) matrices; heads keyed by name."""

    trunk_w: list[np.ndarray]
    trunk_b: list[np.ndarray]
    head_w: dict[str, np.ndarray]
    head_b: dict[str, np.ndarray]
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return self.trunk_w[0].shape[0]

    def arrays(self):
        """All parameter arrays in a fixed traversal order."""
        out = []
        for w, b in zip(self.trunk_w, self.trunk_b):
            out.extend([w, b])
        for name in HEAD_NAMES:
            out.extend([self.head_w[name], self.head_b[name]])
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            trunk_w=[w.copy() for w in self.trunk_w],
            trunk_b=[b.copy() for b in self.trunk_b],
            head_w={k: v.copy() for k, v in self.head_w.items()},
            head_b={k: v.copy() for k, v in self.head_b.items()},
            seed=self.seed,
        )


def init_params(
    input_dim: int,
    n_streams: int = 4,
    trunk_widths: tuple[int, ...] = TRUNK_WIDTHS,
    seed: int = 0,
) -> NetworkParams:
    """Uniform(+-sqrt(1/fan_in)) weights, zero biases, seeded."""
    rng = np.random.default_rng(seed)
    trunk_w, trunk_b = [], []
    fan_in = input_dim
    for width in trunk_widths:
        bound = np.sqrt(1.0 / fan_in)
        trunk_w.append(rng.uniform(-bound, bound, size=(fan_in, width)))
        trunk_b.append(np.zeros(width))
        fan_in = width
    head_dims = {"power": n_streams, "scale": 1, "cx": 3, "cy": 3}
    bound = np.sqrt(1.0 / fan_in)
    head_w = {k: rng.uniform(-bound, bound, size=(fan_in, d)) for k, d in head_dims.items()}
    head_b = {k: np.zeros(d) for k, d in head_dims.items()}
    return NetworkParams(trunk_w, trunk_b, head_w, head_b, seed=seed)


@dataclass
class HeadOutputs:
    power_logits: np.ndarray  # (B, M)
    scaling_logit: np.ndarray  # (B,)
    cx_probs: np.ndarray  # (B, 3)
    cy_probs: np.ndarray  # (B, 3)


@dataclass
class ForwardCache:
    """Activations retained for backprop."""

    inputs: list[np.ndarray] = field(default_factory=list)  # layer inputs
    preacts: list[np.ndarray] = field(default_factory=list)
    masks: list[np.ndarray | None] = field(default_factory=list)  # dropout
    trunk_out: np.ndarray | None = None
    cx_logits: np.ndarray | None = None
    cy_logits: np.ndarray | None = None


def forward(
    params: NetworkParams,
    features: np.ndarray,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[HeadOutputs, ForwardCache]:
    """Run the network on a (B, D) or (D,) feature batch.

    Pass a generator to enable train-mode dropout (inverted scaling); leave
    it None for deterministic eval mode.
    """
    x = np.atleast_2d(np.asarray(features, dtype=float))
    if x.shape[1] != params.input_dim:
        raise ValueError(f"expected feature length {params.input_dim}, got {x.shape[1]}")
    cache = ForwardCache()
    for w, b in zip(params.trunk_w, params.trunk_b):
        a = x @ w + b
        h = silu(a)
        mask = None
        if dropout_rng is not None:
            keep = dropout_rng.random(h.shape) >= DROPOUT_RATE
            mask = keep / (1.0 - DROPOUT_RATE)
            h = h * mask
        cache.inputs.append(x)
        cache.preacts.append(a)
        cache.masks.append(mask)
        x = h
    cache.trunk_out = x
    power_logits = x @ params.head_w["power"] + params.head_b["power"]
    scaling = (x @ params.head_w["scale"] + params.head_b["scale"])[:, 0]
    cache.cx_logits = x @ params.head_w["cx"] + params.head_b["cx"]
    cache.cy_logits = x @ params.head_w["cy"] + params.head_b["cy"]
    outputs = HeadOutputs(
        power_logits=power_logits,
        scaling_logit=scaling,
        cx_probs=softmax(cache.cx_logits),
        cy_probs=softmax(cache.cy_logits),
    )
    return outputs, cache


def backward(
    params: NetworkParams,
    cache: ForwardCache,
    d_power_logits: np.ndarray,
    d_scaling: np.ndarray,
    d_cx_logits: np.ndarray,
    d_cy_logits: np.ndarray,
) -> "NetworkParams":
    """Parameter gradients given loss gradients at the head pre-activations.

    Gradients are summed over the batch; divide upstream if a mean is wanted.
    Returns a NetworkParams-shaped container of gradients.
    """
    h = cache.trunk_out
    d_scaling = np.asarray(d_scaling).reshape(-1, 1)
    head_grads_in = {
        "power": d_power_logits,
        "scale": d_scaling,
        "cx": d_cx_logits,
        "cy": d_cy_logits,
    }
    g_head_w, g_head_b = {}, {}
    d_h = np.zeros_like(h)
    for name in HEAD_NAMES:
        g = head_grads_in[name]
        g_head_w[name] = h.T @ g
        g_head_b[name] = g.sum(axis=0)
        d_h = d_h + g @ params.head_w[name].T
    g_trunk_w = [None] * len(params.trunk_w)
    g_trunk_b = [None] * len(params.trunk_b)
    for i in range(len(params.trunk_w) - 1, -1, -1):
        mask = cache.masks[i]
        if mask is not None:
            d_h = d_h * mask
        d_a = d_h * silu_grad(cache.preacts[i])
        g_trunk_w[i] = cache.inputs[i].T @ d_a
        g_trunk_b[i] = d_a.sum(axis=0)
        d_h = d_a @ params.trunk_w[i].T
    return NetworkParams(g_trunk_w, g_trunk_b, g_head_w, g_head_b, seed=params.seed)


def power_from_heads(
    power_logits: np.ndarray, scaling_logit: np.ndarray, p_max_w: float
) -> np.ndarray:
    """Per-stream powers p = P_max * sigmoid(u) * softmax(logits); sum <= P_max."""
    if p_max_w <= 0:
        raise ValueError(f"p_max_w must be positive, got {p_max_w}")
    scale = p_max_w * sigmoid(np.asarray(scaling_logit))
    return np.asarray(scale)[..., None] * softmax(np.atleast_2d(power_logits))


def config_from_heads(outputs: HeadOutputs, index: int = 0) -> ModularConfig:
    """Activation pair from the softmax heads: argmax per head, +1.

    Ties break toward the larger index (larger active block).
    """
    def argmax_last(p):
        rev = p[::-1]
        return len(p) - 1 - int(np.argmax(rev))

    cx = argmax_last(outputs.cx_probs[index]) + 1
    cy = argmax_last(outputs.cy_probs[index]) + 1
    return modular_mask(cx, cy)


def transmit_covariance(active_svd: SvdResult, p: np.ndarray) -> TransmitCovariance:
    """Q = V diag(p) V^H on the active channel's right-singular basis."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("powers must be nonnegative")
    v = active_svd.right
    return TransmitCovariance.from_matrix((v * p) @ v.conj().T)


def save_checkpoint(path: Path | str, params: NetworkParams, extra: dict | None = None):
    """Versioned JSON checkpoint; floats round-trip bit-exactly via repr."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "seed": params.seed,
        "r_norm_m": R_NORM_M,
        "trunk": [
            {"w_shape": list(w.shape), "w": w.ravel().tolist(), "b": b.tolist()}
            for w, b in zip(params.trunk_w, params.trunk_b)
        ],
        "heads": {
            name: {
                "w_shape": list(params.head_w[name].shape),
                "w": params.head_w[name].ravel().tolist(),
                "b": params.head_b[name].tolist(),
            }
            for name in HEAD_NAMES
        },
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_checkpoint(path: Path | str) -> NetworkParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    trunk_w = [np.array(l["w"]).reshape(l["w_shape"]) for l in doc["trunk"]]
    trunk_b = [np.array(l["b"]) for l in doc["trunk"]]
    head_w = {k: np.array(v["w"]).reshape(v["w_shape"]) for k, v in doc["heads"].items()}
    head_b = {k: np.array(v["b"]) for k, v in doc["heads"].items()}
    return NetworkParams(trunk_w, trunk_b, head_w, head_b, seed=doc["seed"])
