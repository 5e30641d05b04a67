"""Near-field line-of-sight channel construction and its compact SVD."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ModularConfig


@dataclass(frozen=True)
class PropagationParams:
    """Free-space LOS propagation constants."""

    beta0: float  # reference path gain at 1 m, linear
    xi: float  # path-loss exponent
    wavelength_m: float

    def __post_init__(self):
        if self.beta0 <= 0:
            raise ValueError(f"beta0 must be positive, got {self.beta0}")
        if self.xi <= 0:
            raise ValueError(f"xi must be positive, got {self.xi}")
        if self.wavelength_m <= 0:
            raise ValueError(f"wavelength_m must be positive, got {self.wavelength_m}")


@dataclass(frozen=True)
class ChannelMatrix:
    """Complex M x K channel with the activation pattern that produced it."""

    entries: np.ndarray = field(repr=False)
    config: ModularConfig | None = None  # None -> full array

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def k(self) -> int:
        return self.entries.shape[1]


def build_channel(
    tx_positions: np.ndarray,
    rx_positions: np.ndarray,
    params: PropagationParams,
    config: ModularConfig | None = None,
) -> ChannelMatrix:
    """Per-element spherical-wave channel.

    Entry (m, k) has amplitude sqrt(beta0) / d_mk^(xi/2) and phase
    -2*pi*d_mk/lambda, with d_mk the exact 3-D distance between transmit
    antenna k and receive antenna m.  No planar or Fresnel approximation.
    """
    diff = rx_positions[:, None, :] - tx_positions[None, :, :]
    d = np.linalg.norm(diff, axis=2)
    if np.any(d <= 0):
        raise ValueError("coincident transmit/receive positions")
    amp = np.sqrt(params.beta0) / d ** (params.xi / 2.0)
    phase = -2.0 * np.pi * d / params.wavelength_m
    return ChannelMatrix(entries=amp * np.exp(1j * phase), config=config)


@dataclass(frozen=True)
class SvdResult:
    """Compact SVD H = U diag(s) V^H with a fixed phase convention."""

    left: np.ndarray = field(repr=False)  # (M, M)
    singular_values: np.ndarray = field(repr=False)  # (M,), descending
    right: np.ndarray = field(repr=False)  # (K, M), orthonormal columns

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.conj().T


def compact_svd(channel: ChannelMatrix | np.ndarray) -> SvdResult:
    """Compact SVD with each right-singular column phase-normalized.

    The first element of each column of V whose magnitude exceeds
    1e-12 times the column max is rotated to be real nonnegative (the
    matching column of U absorbs the same rotation), making the
    decomposition reproducible across runs.
    """
    h = channel.entries if isinstance(channel, ChannelMatrix) else np.asarray(channel)
    m, k = h.shape
    if m > k:
        raise ValueError(f"unsupported shape: M={m} > K={k}")
    u, s, vh = np.linalg.svd(h, full_matrices=False)
    v = vh.conj().T
    for j in range(m):
        col = v[:, j]
        mags = np.abs(col)
        idx = np.flatnonzero(mags > 1e-12 * mags.max())
        if idx.size == 0:
            continue
        pivot = col[idx[0]]
        rot = np.conj(pivot) / np.abs(pivot)
        v[:, j] = col * rot
        u[:, j] = u[:, j] * rot
    return SvdResult(left=u, singular_values=s, right=v)


def subselect(full: ChannelMatrix, config: ModularConfig) -> ChannelMatrix:
    """Columns of the full channel where the activation mask is true."""
    if full.entries.shape[1] != config.mask.size:
        raise ValueError(
            f"mask length {config.mask.size} does not match "
            f"channel with {full.entries.shape[1]} columns"
        )
    return ChannelMatrix(entries=full.entries[:, config.mask], config=config)
