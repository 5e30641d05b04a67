"""Dataset generation: user geometry sampling, channels, and network features.

Each sample is seeded individually from (dataset seed, split tag, index), so
a dataset can be generated in any order or in parallel and remain identical
to serial generation.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelMatrix, PropagationParams, SvdResult, build_channel, compact_svd
from .geometry import ArraySpec, UeGeometry, antenna_positions, ue_positions

logger = logging.getLogger(__name__)

R_NORM_M = 200.0  # range normalization constant for the feature vector

TRAIN_TAG = 0
VAL_TAG = 1


@dataclass(frozen=True)
class DatasetSpec:
    n_train: int
    n_val: int
    r_range_m: tuple[float, float] = (10.0, 200.0)
    phi_range_rad: tuple[float, float] = (0.0, np.pi / 2)
    alpha: float = 0.6
    seed: int = 0
    height_diff_m: float = 10.0
    m_antennas: int = 4
    sampling: str = "uniform-rphi"  # or "disk" (area-uniform, ablation)

    def __post_init__(self):
        if self.n_train < 0 or self.n_val < 0:
            raise ValueError("sample counts must be nonnegative")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.r_range_m[0] <= 0 or self.r_range_m[1] <= self.r_range_m[0]:
            raise ValueError(f"invalid r_range_m {self.r_range_m}")
        if self.sampling not in ("uniform-rphi", "disk"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")


@dataclass(frozen=True)
class Sample:
    geometry: UeGeometry
    full_channel: ChannelMatrix = field(repr=False)
    features: np.ndarray = field(repr=False)
    weight: float = 1.0


def _draw_geometry(spec: DatasetSpec, tag: int, index: int) -> UeGeometry:
    rng = np.random.default_rng([spec.seed, tag, index])
    r_lo, r_hi = spec.r_range_m
    phi_lo, phi_hi = spec.phi_range_rad
    if spec.sampling == "uniform-rphi":
        r = rng.uniform(r_lo, r_hi)
        phi = rng.uniform(phi_lo, phi_hi)
    else:
        # Area-uniform in the disk of radius r_hi, first quadrant and
        # annulus r >= r_lo kept by rejection.
        while True:
            x, y = rng.uniform(-r_hi, r_hi, size=2)
            r = np.hypot(x, y)
            if x >= 0 and y >= 0 and r_lo <= r <= r_hi:
                break
        phi = np.arctan2(y, x)
        phi = min(max(phi, phi_lo), phi_hi)
    return UeGeometry(
        range_m=float(r),
        azimuth_rad=float(phi),
        height_diff_m=spec.height_diff_m,
        m_antennas=spec.m_antennas,
    )


def sample_geometries(spec: DatasetSpec, count: int, tag: int = TRAIN_TAG) -> list[UeGeometry]:
    """Draw `count` user geometries; deterministic per (seed, tag, index)."""
    return [_draw_geometry(spec, tag, i) for i in range(count)]


def build_features(geometry: UeGeometry, svd_full: SvdResult) -> np.ndarray:
    """Network input vector from the full-array channel SVD.

    Layout: [ln(1+s_1..s_M), r/200, phi, Re(vec(V)), Im(vec(V))] with V the
    K x M right-singular matrix vectorized column-major; length M + 2 + 2*M*K.
    """
    s = svd_full.singular_values
    v = svd_full.right
    vflat = v.flatten(order="F")
    return np.concatenate(
        [
            np.log1p(s),
            [geometry.range_m / R_NORM_M, geometry.azimuth_rad],
            vflat.real,
            vflat.imag,
        ]
    )


def make_sample(
    geometry: UeGeometry,
    array: ArraySpec,
    prop: PropagationParams,
    alpha: float,
) -> Sample:
    tx = antenna_positions(array)
    rx = ue_positions(geometry, prop.wavelength_m)
    full = build_channel(tx, rx, prop)
    svd = compact_svd(full)
    features = build_features(geometry, svd)
    return Sample(
        geometry=geometry,
        full_channel=full,
        features=features,
        weight=geometry.range_m**-alpha,
    )


def build_dataset(
    spec: DatasetSpec, array: ArraySpec, prop: PropagationParams
) -> tuple[list[Sample], list[Sample]]:
    """Training and validation splits, fully determined by the dataset seed."""
    train = [
        make_sample(g, array, prop, spec.alpha)
        for g in sample_geometries(spec, spec.n_train, TRAIN_TAG)
    ]
    val = [
        make_sample(g, array, prop, spec.alpha)
        for g in sample_geometries(spec, spec.n_val, VAL_TAG)
    ]
    return train, val


def _dataset_key(spec: DatasetSpec, array: ArraySpec, prop: PropagationParams) -> str:
    payload = json.dumps(
        {
            "spec": [
                spec.n_train,
                spec.n_val,
                list(spec.r_range_m),
                list(spec.phi_range_rad),
                spec.alpha,
                spec.seed,
                spec.height_diff_m,
                spec.m_antennas,
                spec.sampling,
            ],
            "array": [array.n_side, array.spacing_m, array.wavelength_m, list(array.center)],
            "prop": [prop.beta0, prop.xi, prop.wavelength_m],
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def load_or_build_dataset(
    cache_path: Path | str,
    spec: DatasetSpec,
    array: ArraySpec,
    prop: PropagationParams,
) -> tuple[list[Sample], list[Sample]]:
    """Dataset with an npz cache keyed by the generation parameters.

    A stale or mismatched cache is regenerated and overwritten.
    """
    cache_path = Path(cache_path)
    key = _dataset_key(spec, array, prop)
    if cache_path.exists():
        try:
            data = np.load(cache_path, allow_pickle=False)
            if str(data["key"]) == key:
                return _unpack(data, spec)
            logger.info("dataset cache key mismatch, regenerating %s", cache_path)
        except Exception:  # corrupt cache: regenerate
            logger.warning("unreadable dataset cache %s, regenerating", cache_path)
    train, val = build_dataset(spec, array, prop)
    _save(cache_path, key, train, val)
    return train, val


def _save(path: Path, key: str, train: list[Sample], val: list[Sample]):
    def pack(samples):
        return {
            "geom": np.array(
                [[s.geometry.range_m, s.geometry.azimuth_rad] for s in samples]
            ).reshape(len(samples), 2),
            "chan": np.array([s.full_channel.entries for s in samples]),
            "feat": np.array([s.features for s in samples]),
            "weight": np.array([s.weight for s in samples]),
        }
    tr, va = pack(train), pack(val)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        path,
        key=key,
        train_geom=tr["geom"], train_chan=tr["chan"],
        train_feat=tr["feat"], train_weight=tr["weight"],
        val_geom=va["geom"], val_chan=va["chan"],
        val_feat=va["feat"], val_weight=va["weight"],
    )


def _unpack(data, spec: DatasetSpec) -> tuple[list[Sample], list[Sample]]:
    def unpack(prefix):
        geom = data[f"{prefix}_geom"]
        chan = data[f"{prefix}_chan"]
        feat = data[f"{prefix}_feat"]
        weight = data[f"{prefix}_weight"]
        out = []
        for i in range(geom.shape[0]):
            g = UeGeometry(
                range_m=float(geom[i, 0]),
                azimuth_rad=float(geom[i, 1]),
                height_diff_m=spec.height_diff_m,
                m_antennas=spec.m_antennas,
            )
            out.append(
                Sample(
                    geometry=g,
                    full_channel=ChannelMatrix(entries=chan[i]),
                    features=feat[i],
                    weight=float(weight[i]),
                )
            )
        return out
    return unpack("train"), unpack("val")
