"""Unsupervised training loop that maximizes expected energy efficiency.

The discrete activation heads are trained on the exact expectation of EE
over all 9 configurations weighted by the two softmax heads (differentiable,
9 EE evaluations per sample); evaluation uses the argmax configuration.
Gradients reach the power heads by central finite differences on the five
continuous head scalars and flow through the trunk by analytic backprop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import compact_svd, subselect
from .distortion import DistortionParams
from .features import Sample
from .geometry import ModularConfig, all_modular_configs
from .network import (
    HeadOutputs,
    NetworkParams,
    backward,
    forward,
    power_from_heads,
    sigmoid,
    softmax,
)
from .power_model import HardwareParams

logger = logging.getLogger(__name__)

LN2 = np.log(2.0)
N_CONFIGS = 9
DISTANCE_BINS = 10


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 2e-4
    lr_min: float = 1e-5
    epochs: int = 10
    batch_size: int = 64
    alpha: float = 0.6
    p_max_w: float = 0.25
    seed: int = 0
    fd_rel_step: float = 1e-4

    def __post_init__(self):
        if self.lr <= 0 or self.lr_min <= 0 or self.lr_min > self.lr:
            raise ValueError("need 0 < lr_min <= lr")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid epochs/batch_size")
        if self.p_max_w <= 0:
            raise ValueError("p_max_w must be positive")


class TrainingDiverged(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class PreparedSet:
    """Dataset with the 9 per-config active-channel SVDs precomputed.

    The SVDs depend only on geometry, never on network parameters, so they
    are computed once and reused across every epoch.
    """

    features: np.ndarray  # (N, D)
    weights: np.ndarray  # (N,)
    r_m: np.ndarray  # (N,)
    config_v: list[np.ndarray] = field(repr=False)  # 9 x (N, K_c, M)
    config_s: list[np.ndarray] = field(repr=False)  # 9 x (N, M)
    configs: list[ModularConfig] = field(default_factory=all_modular_configs)

    def __len__(self):
        return self.features.shape[0]


def prepare_samples(samples: list[Sample]) -> PreparedSet:
    configs = all_modular_configs()
    n = len(samples)
    features = np.array([s.features for s in samples])
    weights = np.array([s.weight for s in samples])
    r_m = np.array([s.geometry.range_m for s in samples])
    config_v, config_s = [], []
    for cfg in configs:
        v_list, s_list = [], []
        for smp in samples:
            svd = compact_svd(subselect(smp.full_channel, cfg))
            v_list.append(svd.right)
            s_list.append(svd.singular_values)
        config_v.append(np.array(v_list))
        config_s.append(np.array(s_list))
    return PreparedSet(features, weights, r_m, config_v, config_s, configs)


def ee_batch(
    v: np.ndarray,
    s: np.ndarray,
    p: np.ndarray,
    k_active: int,
    hw: HardwareParams,
    d: DistortionParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Spectral and energy efficiency for stacked power allocations.

    v: (N, K, M) right-singular bases of the active channels, s: (N, M)
    singular values, p: (N, B, M) candidate allocations.  Returns
    (se, ee), each (N, B).  Works in the left-unitary-invariant M x M
    domain, so the full channel never appears.
    """
    n, k, m = v.shape
    rho = d.rho
    b_gain = 1.0 + 2.0 * rho
    sig2 = d.noise_power_w
    eye = np.eye(m)
    ps2 = p * (s**2)[:, None, :]  # (N, B, M) = diagonal of S P S
    if rho == 0.0:
        se = np.sum(np.log1p(ps2 / sig2), axis=-1) / LN2
    else:
        q = np.einsum("nkm,nbm,nlm->nbkl", v, p, v.conj(), optimize=True)
        diag = np.real(np.einsum("nbkk->nbk", q))
        eps = 1e-18 * np.maximum(1.0, diag.sum(axis=-1, keepdims=True))
        inv = np.where(diag >= eps, 1.0 / np.where(diag >= eps, diag, 1.0), 0.0)
        c_eta = (2.0 * rho**2) * (np.abs(q) ** 2 * q)
        c_eta *= inv[..., :, None] * inv[..., None, :]
        g = np.einsum("nkm,nbkl,nlj->nbmj", v.conj(), c_eta, v, optimize=True)
        cn = (s[:, None, :, None] * g) * s[:, None, None, :] + sig2 * eye
        total = cn + (b_gain**2) * ps2[..., None] * eye
        _, ld_total = np.linalg.slogdet(total)
        _, ld_cn = np.linalg.slogdet(cn)
        se = np.maximum((ld_total - ld_cn) / LN2, 0.0)
    p_tot = (
        p.sum(axis=-1) / hw.kappa
        + hw.mu_w
        + (hw.d0_w + hw.upsilon_j_per_sample * hw.bandwidth_hz) * k_active
        + hw.eta_j_per_bit * hw.bandwidth_hz * se
    )
    ee = hw.bandwidth_hz * se / p_tot
    return se, ee


def _fd_power_points(
    power_logits: np.ndarray, scaling_logit: np.ndarray, p_max: float, rel_step: float
) -> tuple[np.ndarray, np.ndarray]:
    """Power vectors for the base point and +-delta on each head scalar.

    Returns (points, deltas): points (N, 11, M) with layout
    [base, +d0, -d0, ..., +d4, -d4] over (logits_0..3, u); deltas (N, 5).
    """
    n, m = power_logits.shape
    theta = np.concatenate([power_logits, scaling_logit[:, None]], axis=1)  # (N, 5)
    deltas = rel_step * np.maximum(1.0, np.abs(theta))
    n_theta = m + 1
    points = np.repeat(theta[:, None, :], 1 + 2 * n_theta, axis=1)
    for j in range(n_theta):
        points[:, 1 + 2 * j, j] += deltas[:, j]
        points[:, 2 + 2 * j, j] -= deltas[:, j]
    p = power_from_heads(
        points[..., :m].reshape(-1, m), points[..., m].ravel(), p_max
    ).reshape(n, 1 + 2 * n_theta, m)
    return p, deltas


@dataclass
class BatchLoss:
    """Loss value, head-level gradients, and per-sample diagnostics."""

    loss: float
    d_power_logits: np.ndarray
    d_scaling: np.ndarray
    d_cx_logits: np.ndarray
    d_cy_logits: np.ndarray
    ee_per_config: np.ndarray  # (N, 9), at the unperturbed power point
    expected_ee: np.ndarray  # (N,)
    valid: np.ndarray  # (N,) bool


def batch_loss_and_grads(
    outputs: HeadOutputs,
    prepared: PreparedSet,
    idx: np.ndarray,
    cfg: TrainConfig,
    hw: HardwareParams,
    d: DistortionParams,
) -> BatchLoss:
    """Expected-EE loss over a mini-batch and its head-output gradients.

    Loss = -(1/S) sum_j weight_j * sum_{a,b} Px[a] Py[b] EE_j(a, b); the
    mixture weights enter bilinearly (analytic gradient), the five power
    scalars via central finite differences shared across all 9 configs.
    """
    n = idx.size
    m = outputs.power_logits.shape[1]
    weights = prepared.weights[idx]
    p_points, deltas = _fd_power_points(
        outputs.power_logits, outputs.scaling_logit, cfg.p_max_w, cfg.fd_rel_step
    )
    ee_all = np.empty((N_CONFIGS, n, p_points.shape[1]))
    for c, config in enumerate(prepared.configs):
        _, ee = ee_batch(
            prepared.config_v[c][idx], prepared.config_s[c][idx],
            p_points, config.k_active, hw, d,
        )
        ee_all[c] = ee
    valid = np.isfinite(ee_all).all(axis=(0, 2))
    if not valid.all():
        logger.warning("skipping %d samples with non-finite EE", int((~valid).sum()))
        ee_all[:, ~valid, :] = 0.0
    w_eff = np.where(valid, weights, 0.0)
    n_eff = max(int(valid.sum()), 1)

    mix = np.einsum("na,nb->nab", outputs.cx_probs, outputs.cy_probs).reshape(n, N_CONFIGS)
    ee_base = ee_all[:, :, 0].T  # (N, 9)
    expected_ee = np.sum(mix * ee_base, axis=1)
    loss = -np.sum(w_eff * expected_ee) / n_eff

    # d loss / d theta_j through the finite-difference stencil, mixed over configs.
    slope = (ee_all[:, :, 1::2] - ee_all[:, :, 2::2]) / (2.0 * deltas)[None, :, :]
    # slope: (9, N, 5); mix over configs
    d_theta = -np.einsum("nc,cnj->nj", mix, slope) * w_eff[:, None] / n_eff

    d_ee_cx = np.einsum("nab,nb->na", ee_base.reshape(n, 3, 3), outputs.cy_probs)
    d_ee_cy = np.einsum("nab,na->nb", ee_base.reshape(n, 3, 3), outputs.cx_probs)
    d_cx_probs = -w_eff[:, None] * d_ee_cx / n_eff
    d_cy_probs = -w_eff[:, None] * d_ee_cy / n_eff
    d_cx_logits = _softmax_backward(outputs.cx_probs, d_cx_probs)
    d_cy_logits = _softmax_backward(outputs.cy_probs, d_cy_probs)
    return BatchLoss(
        loss=float(loss),
        d_power_logits=d_theta[:, :m],
        d_scaling=d_theta[:, m],
        d_cx_logits=d_cx_logits,
        d_cy_logits=d_cy_logits,
        ee_per_config=ee_base,
        expected_ee=expected_ee,
        valid=valid,
    )


def _softmax_backward(probs: np.ndarray, d_probs: np.ndarray) -> np.ndarray:
    inner = np.sum(probs * d_probs, axis=-1, keepdims=True)
    return probs * (d_probs - inner)


def sample_loss(
    params: NetworkParams,
    prepared: PreparedSet,
    index: int,
    cfg: TrainConfig,
    hw: HardwareParams,
    d: DistortionParams,
) -> BatchLoss:
    """Loss contribution and head gradients for a single sample (eval mode)."""
    outputs, _ = forward(params, prepared.features[index])
    return batch_loss_and_grads(outputs, prepared, np.array([index]), cfg, hw, d)


class AdamW:
    """Decoupled-weight-decay Adam over a list of parameter arrays."""

    def __init__(self, shapes, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, arrays, grads, lr, weight_decay):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, (w, g) in enumerate(zip(arrays, grads)):
            w *= 1.0 - lr * weight_decay
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g**2
            m_hat = self.m[i] / (1 - b1**self.t)
            v_hat = self.v[i] / (1 - b2**self.t)
            w -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def cosine_lr(step: int, total_steps: int, lr: float, lr_min: float) -> float:
    """lr_min + (lr - lr_min) (1 + cos(pi t / T)) / 2."""
    if total_steps <= 0:
        return lr
    frac = min(max(step / total_steps, 0.0), 1.0)
    return lr_min + 0.5 * (lr - lr_min) * (1.0 + np.cos(np.pi * frac))


@dataclass
class EvalMetrics:
    se: np.ndarray  # (N,)
    ee: np.ndarray  # (N,)
    weighted_ee_mean: float
    bin_edges: np.ndarray
    bin_ee_mean: np.ndarray
    bin_se_mean: np.ndarray


def evaluate(
    params: NetworkParams,
    prepared: PreparedSet,
    cfg: TrainConfig,
    hw: HardwareParams,
    d: DistortionParams,
    r_range: tuple[float, float] = (10.0, 200.0),
) -> EvalMetrics:
    """Deterministic policy evaluation: argmax configuration, learned powers."""
    outputs, _ = forward(params, prepared.features)
    p = power_from_heads(outputs.power_logits, outputs.scaling_logit, cfg.p_max_w)
    cx = _argmax_high(outputs.cx_probs)
    cy = _argmax_high(outputs.cy_probs)
    config_idx = cx * 3 + cy
    n = len(prepared)
    se = np.empty(n)
    ee = np.empty(n)
    for c, config in enumerate(prepared.configs):
        sel = np.flatnonzero(config_idx == c)
        if sel.size == 0:
            continue
        se_c, ee_c = ee_batch(
            prepared.config_v[c][sel], prepared.config_s[c][sel],
            p[sel][:, None, :], config.k_active, hw, d,
        )
        se[sel] = se_c[:, 0]
        ee[sel] = ee_c[:, 0]
    edges = np.linspace(r_range[0], r_range[1], DISTANCE_BINS + 1)
    bin_ee = np.full(DISTANCE_BINS, np.nan)
    bin_se = np.full(DISTANCE_BINS, np.nan)
    which = np.clip(np.digitize(prepared.r_m, edges) - 1, 0, DISTANCE_BINS - 1)
    for i in range(DISTANCE_BINS):
        sel = which == i
        if sel.any():
            bin_ee[i] = ee[sel].mean()
            bin_se[i] = se[sel].mean()
    return EvalMetrics(
        se=se,
        ee=ee,
        weighted_ee_mean=float(np.mean(prepared.weights * ee)),
        bin_edges=edges,
        bin_ee_mean=bin_ee,
        bin_se_mean=bin_se,
    )


def _argmax_high(probs: np.ndarray) -> np.ndarray:
    """Row-wise argmax with ties broken toward the larger index."""
    rev = probs[:, ::-1]
    return probs.shape[1] - 1 - np.argmax(rev, axis=1)


def train(
    params: NetworkParams,
    train_set: PreparedSet,
    val_set: PreparedSet | None,
    cfg: TrainConfig,
    hw: HardwareParams,
    d: DistortionParams,
) -> tuple[NetworkParams, list[dict]]:
    """Mini-batch AdamW with cosine-annealed learning rate.

    Returns the trained parameters and a history of per-step rows; epoch
    boundaries additionally carry validation metrics.  Deterministic for a
    given seed under serial execution.
    """
    params = params.copy()
    arrays = params.arrays()
    opt = AdamW([a.shape for a in arrays])
    shuffle_rng = np.random.default_rng([cfg.seed, 7])
    dropout_rng = np.random.default_rng([cfg.seed, 11])
    n = len(train_set)
    n_batches = max(1, (n + cfg.batch_size - 1) // cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    history: list[dict] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for b in range(n_batches):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            if idx.size == 0:
                continue
            lr = cosine_lr(step, total_steps, cfg.lr, cfg.lr_min)
            outputs, cache = forward(params, train_set.features[idx], dropout_rng=dropout_rng)
            bl = batch_loss_and_grads(outputs, train_set, idx, cfg, hw, d)
            if not np.isfinite(bl.loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} step {step}", history
                )
            grads = backward(
                params, cache, bl.d_power_logits, bl.d_scaling,
                bl.d_cx_logits, bl.d_cy_logits,
            )
            opt.step(arrays, grads.arrays(), lr, cfg.weight_decay)
            history.append(
                {"epoch": epoch, "step": step, "lr": lr, "train_loss": bl.loss}
            )
            step += 1
        if val_set is not None and len(val_set) > 0:
            metrics = evaluate(params, val_set, cfg, hw, d)
            history[-1]["val_weighted_ee"] = metrics.weighted_ee_mean
            for i in range(DISTANCE_BINS):
                history[-1][f"val_ee_bin{i}"] = metrics.bin_ee_mean[i]
    return params, history


def parameter_gradient(
    params: NetworkParams,
    prepared: PreparedSet,
    idx: np.ndarray,
    cfg: TrainConfig,
    hw: HardwareParams,
    d: DistortionParams,
) -> NetworkParams:
    """End-to-end gradient of the batch loss w.r.t. every parameter (eval mode)."""
    outputs, cache = forward(params, prepared.features[idx])
    bl = batch_loss_and_grads(outputs, prepared, idx, cfg, hw, d)
    return backward(
        params, cache, bl.d_power_logits, bl.d_scaling, bl.d_cx_logits, bl.d_cy_logits
    )


def gradient_check(
    params: NetworkParams,
    prepared: PreparedSet,
    idx: np.ndarray,
    cfg: TrainConfig,
    hw: HardwareParams,
    d: DistortionParams,
    n_params: int = 100,
    fd_step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between the implemented gradient and parameter-space
    central finite differences over a random parameter subset."""
    grads = parameter_gradient(params, prepared, idx, cfg, hw, d)
    g_arrays = grads.arrays()
    p_arrays = params.arrays()
    rng = np.random.default_rng(seed)

    def loss_value():
        outputs, _ = forward(params, prepared.features[idx])
        return batch_loss_and_grads(outputs, prepared, idx, cfg, hw, d).loss

    sizes = np.array([a.size for a in p_arrays])
    flat_total = sizes.sum()
    picks = rng.choice(flat_total, size=min(n_params, flat_total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    scale = max(abs(g).max() for g in g_arrays)
    worst = 0.0
    for flat_idx in picks:
        ai = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        local = int(flat_idx - offsets[ai])
        arr = p_arrays[ai].reshape(-1)
        orig = arr[local]
        h = fd_step * max(1.0, abs(orig))
        arr[local] = orig + h
        f_plus = loss_value()
        arr[local] = orig - h
        f_minus = loss_value()
        arr[local] = orig
        fd = (f_plus - f_minus) / (2 * h)
        analytic = g_arrays[ai].reshape(-1)[local]
        denom = max(abs(fd), abs(analytic), 1e-12 * scale)
        worst = max(worst, abs(fd - analytic) / denom)
    return worst
