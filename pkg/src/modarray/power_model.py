"""Power consumption, energy efficiency, water-filling, and EE-optimal sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelMatrix, SvdResult, compact_svd
from .distortion import DistortionParams, TransmitCovariance, radiated_power, spectral_efficiency
from .geometry import ModularConfig


@dataclass(frozen=True)
class HardwareParams:
    """Radio power-consumption model constants."""

    kappa: float = 0.4  # amplifier efficiency
    mu_w: float = 0.1  # fixed load-independent power
    d0_w: float = 0.02  # per-RF-chain power
    upsilon_j_per_sample: float = 1e-10  # processing energy per sample
    eta_j_per_bit: float = 1e-11  # coding energy per bit
    bandwidth_hz: float = 1e8

    def __post_init__(self):
        if not 0.0 < self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa}")
        for name in ("mu_w", "d0_w", "upsilon_j_per_sample", "eta_j_per_bit"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.bandwidth_hz <= 0:
            raise ValueError(f"bandwidth_hz must be positive, got {self.bandwidth_hz}")


@dataclass(frozen=True)
class EvalRecord:
    """One operating point: rate, consumed power, efficiency, and how it arose."""

    se_bps_hz: float
    p_tot_w: float
    ee_bits_per_joule: float
    k_active: int
    config: ModularConfig | None
    power_vector_w: np.ndarray = field(repr=False)
    total_input_power_w: float = 0.0
    radiated_power_w: float = 0.0


def total_power(trace_q_w: float, k_active: int, se: float, hw: HardwareParams) -> float:
    """Total consumed radio power in watts.

    Amplifier input power scaled by 1/kappa, fixed power, per-active-chain
    RF and processing power, and rate-proportional coding power.
    """
    if trace_q_w < 0 or k_active < 0 or se < 0:
        raise ValueError("trace_q_w, k_active and se must be nonnegative")
    return (
        trace_q_w / hw.kappa
        + hw.mu_w
        + (hw.d0_w + hw.upsilon_j_per_sample * hw.bandwidth_hz) * k_active
        + hw.eta_j_per_bit * hw.bandwidth_hz * se
    )


def energy_efficiency(se: float, p_tot_w: float, bandwidth_hz: float) -> float:
    """Bits per joule: B * SE / P_tot."""
    if p_tot_w <= 0:
        raise ValueError(f"p_tot_w must be positive, got {p_tot_w}")
    return bandwidth_hz * se / p_tot_w


def water_filling(
    singular_values: np.ndarray, noise_power: float, total_power: float
) -> np.ndarray:
    """Classical water-filling over parallel channels, exact active-set solve.

    Returns p with p_i = max(0, nu - noise/s_i^2), the water level nu chosen
    so the powers sum to total_power.  Streams with zero singular value get
    zero power.
    """
    s = np.asarray(singular_values, dtype=float)
    if total_power <= 0:
        raise ValueError(f"total_power must be positive, got {total_power}")
    gains = s**2
    if not np.any(gains > 0):
        raise ValueError("at least one singular value must be positive")
    thresholds = np.full(s.shape, np.inf)
    pos = gains > 0
    thresholds[pos] = noise_power / gains[pos]
    order = np.argsort(thresholds, kind="stable")
    t_sorted = thresholds[order]
    # Largest active set m such that the implied water level exceeds t_sorted[m-1].
    n_finite = int(np.sum(np.isfinite(t_sorted)))
    csum = np.cumsum(t_sorted[:n_finite])
    m_active = 1
    for m in range(1, n_finite + 1):
        nu = (total_power + csum[m - 1]) / m
        if nu > t_sorted[m - 1]:
            m_active = m
        else:
            break
    nu = (total_power + csum[m_active - 1]) / m_active
    p = np.zeros_like(s)
    active = order[:m_active]
    p[active] = nu - thresholds[active]
    return p


def ee_power_sweep(
    channel: ChannelMatrix,
    config: ModularConfig | None,
    hw: HardwareParams,
    d: DistortionParams,
    grid_dbw: np.ndarray,
    svd: SvdResult | None = None,
) -> EvalRecord:
    """Best-EE operating point over a grid of total amplifier input powers.

    For each grid power: water-filling on the active channel's singular
    values, Q = V diag(p) V^H, distortion-aware SE, consumed power, EE.
    Ties in EE break toward the lower input power (the grid is scanned in
    ascending power order and only strict improvements are kept).
    """
    grid_dbw = np.asarray(grid_dbw, dtype=float)
    if grid_dbw.size == 0:
        raise ValueError("power grid must be nonempty")
    if svd is None:
        svd = compact_svd(channel)
    k_active = channel.entries.shape[1]
    best: EvalRecord | None = None
    for p_dbw in np.sort(grid_dbw):
        p_in = 10.0 ** (p_dbw / 10.0)
        p_vec = water_filling(svd.singular_values, d.noise_power_w, p_in)
        v = svd.right
        # PSD by construction; skip the O(K^3) eigenvalue validation.
        qm = (v * p_vec) @ v.conj().T
        q = TransmitCovariance(q=0.5 * (qm + qm.conj().T))
        se = spectral_efficiency(channel, q, d)
        p_tot = total_power(p_in, k_active, se, hw)
        ee = energy_efficiency(se, p_tot, hw.bandwidth_hz)
        if best is None or ee > best.ee_bits_per_joule:
            best = EvalRecord(
                se_bps_hz=se,
                p_tot_w=p_tot,
                ee_bits_per_joule=ee,
                k_active=k_active,
                config=config,
                power_vector_w=p_vec,
                total_input_power_w=p_in,
                radiated_power_w=radiated_power(q, d.rho),
            )
    return best
