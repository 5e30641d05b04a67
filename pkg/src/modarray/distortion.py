"""Third-order amplifier distortion: Bussgang gain, distortion covariance,
radiated power, and the distortion-aware achievable rate.

The per-antenna nonlinearity is z_k = x_k + (rho / E|x_k|^2) |x_k|^2 x_k
with compression parameter rho <= 0.  For Gaussian inputs the output splits
into a linear gain (1 + 2 rho) times the input plus uncorrelated distortion
whose covariance follows from the sixth-order Gaussian moments; a seeded
Monte-Carlo oracle validates both closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix

LN2 = np.log(2.0)


@dataclass(frozen=True)
class DistortionParams:
    rho: float
    noise_power_w: float

    def __post_init__(self):
        if not -0.5 <= self.rho <= 0.0:
            raise ValueError(f"rho must lie in [-0.5, 0], got {self.rho}")
        if self.noise_power_w <= 0:
            raise ValueError(f"noise_power_w must be positive, got {self.noise_power_w}")


@dataclass(frozen=True)
class TransmitCovariance:
    """Hermitian PSD transmit covariance with a cached diagonal."""

    q: np.ndarray

    @classmethod
    def from_matrix(cls, q: np.ndarray) -> "TransmitCovariance":
        """Symmetrize and validate; rejects matrices that are not PSD to
        within -1e-10 * trace."""
        q = np.asarray(q, dtype=complex)
        q = 0.5 * (q + q.conj().T)
        tr = np.real(np.trace(q))
        w = np.linalg.eigvalsh(q)
        if w.min() < -1e-10 * max(tr, 1e-300):
            raise ValueError(f"covariance is not PSD: min eigenvalue {w.min():.3e}")
        return cls(q=q)

    @property
    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.q))

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.q)))


def bussgang_gain(rho: float) -> float:
    """Linear gain of the Bussgang decomposition, 1 + 2*rho."""
    return 1.0 + 2.0 * rho


def distortion_covariance(q: np.ndarray | TransmitCovariance, rho: float) -> np.ndarray:
    """Covariance of the uncorrelated distortion term.

    C = 2 rho^2 D^-1 (Q . Q* . Q) D^-1 with D = diag(Q) and . elementwise.
    Antennas whose input power is below 1e-18 * max(1, tr(Q)) transmit
    essentially nothing; their rows and columns are set to zero (the
    analytic limit).
    """
    qm = q.q if isinstance(q, TransmitCovariance) else np.asarray(q, dtype=complex)
    diag = np.real(np.diag(qm))
    eps = 1e-18 * max(1.0, float(diag.sum()))
    inv = np.where(diag >= eps, 1.0 / np.where(diag >= eps, diag, 1.0), 0.0)
    c = (2.0 * rho**2) * (np.abs(qm) ** 2 * qm) * np.outer(inv, inv)
    return 0.5 * (c + c.conj().T)


def radiated_power(q: np.ndarray | TransmitCovariance, rho: float) -> float:
    """Total power at the amplifier outputs: (1+2rho)^2 tr(Q) + tr(C_distortion)."""
    qm = q.q if isinstance(q, TransmitCovariance) else np.asarray(q, dtype=complex)
    tr_q = float(np.real(np.trace(qm)))
    tr_c = float(np.real(np.trace(distortion_covariance(qm, rho))))
    return bussgang_gain(rho) ** 2 * tr_q + tr_c


def _logdet_hermitian(a: np.ndarray) -> float:
    """log det of a Hermitian positive-definite matrix via Cholesky."""
    chol = np.linalg.cholesky(a)
    return 2.0 * float(np.sum(np.log(np.real(np.diag(chol)))))


def spectral_efficiency(
    channel: ChannelMatrix | np.ndarray,
    q: np.ndarray | TransmitCovariance,
    params: DistortionParams,
) -> float:
    """Distortion-aware achievable rate in bits/s/Hz.

    log2 det(I + (1+2rho)^2 Cn^-1 H Q H^H) with effective noise covariance
    Cn = H C_distortion H^H + sigma^2 I, evaluated as a log-determinant
    difference of two Cholesky factorizations (no explicit inverse).
    """
    h = channel.entries if isinstance(channel, ChannelMatrix) else np.asarray(channel)
    qc = q if isinstance(q, TransmitCovariance) else TransmitCovariance.from_matrix(q)
    m = h.shape[0]
    b = bussgang_gain(params.rho)
    c_eta = distortion_covariance(qc, params.rho)
    cn = h @ c_eta @ h.conj().T + params.noise_power_w * np.eye(m)
    cn = 0.5 * (cn + cn.conj().T)
    signal = h @ qc.q @ h.conj().T
    total = cn + b**2 * 0.5 * (signal + signal.conj().T)
    se = (_logdet_hermitian(total) - _logdet_hermitian(cn)) / LN2
    return max(se, 0.0)


def monte_carlo_distortion(
    q: np.ndarray | TransmitCovariance,
    rho: float,
    n_samples: int,
    seed: int,
    chunk: int = 100_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Empirical Bussgang gain matrix and distortion covariance.

    Draws x ~ CN(0, Q), pushes each antenna through the third-order model,
    and estimates B = E[z x^H] (E[x x^H])^-1 and the covariance of
    z - B x from sample moments.  Deterministic for a given seed; singular
    Q gets diagonal loading 1e-15 * tr(Q)/K on the gain estimate only.
    """
    qm = q.q if isinstance(q, TransmitCovariance) else np.asarray(q, dtype=complex)
    k = qm.shape[0]
    if n_samples < 10_000:
        raise ValueError(f"n_samples must be >= 1e4, got {n_samples}")
    diag = np.real(np.diag(qm)).copy()
    safe_diag = np.where(diag > 0, diag, 1.0)

    w, u = np.linalg.eigh(0.5 * (qm + qm.conj().T))
    factor = u * np.sqrt(np.clip(w, 0.0, None))

    rng = np.random.default_rng(seed)
    s_xx = np.zeros((k, k), dtype=complex)
    s_zx = np.zeros((k, k), dtype=complex)
    s_zz = np.zeros((k, k), dtype=complex)
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        g = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
        x = (g / np.sqrt(2.0)) @ factor.conj().T
        z = x + (rho / safe_diag) * np.abs(x) ** 2 * x
        s_xx += x.conj().T @ x
        s_zx += z.conj().T @ x
        s_zz += z.conj().T @ z
        done += n
    s_xx /= n_samples
    s_zx /= n_samples
    s_zz /= n_samples

    tr = float(np.real(np.trace(qm)))
    loaded = s_xx + 1e-15 * (tr / k) * np.eye(k)
    gain = np.linalg.solve(loaded.conj().T, s_zx.conj().T).conj().T
    c_eta = s_zz - gain @ s_zx.conj().T - s_zx @ gain.conj().T + gain @ s_xx @ gain.conj().T
    return gain, 0.5 * (c_eta + c_eta.conj().T)
