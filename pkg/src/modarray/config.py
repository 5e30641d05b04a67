"""Experiment configuration: defaults, strict JSON parsing, derived constants."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import PropagationParams
from .features import DatasetSpec
from .geometry import ArraySpec
from .power_model import HardwareParams
from .training import TrainConfig

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Malformed or out-of-range configuration value; message names the key path."""


@dataclass(frozen=True)
class SimulationParams:
    carrier_hz: float = 15e9
    bandwidth_hz: float = 1e8
    n0_dbw_per_hz: float = -204.0
    noise_figure_db: float = 10.0
    beta0_db: float = -60.0
    xi: float = 2.5
    rho: float = -0.05
    seed: int = 0

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def noise_power_w(self) -> float:
        """sigma^2 = N0 * B * F."""
        return 10.0 ** ((self.n0_dbw_per_hz + self.noise_figure_db) / 10.0) * self.bandwidth_hz

    @property
    def beta0(self) -> float:
        return 10.0 ** (self.beta0_db / 10.0)


@dataclass(frozen=True)
class SweepSettings:
    array_sizes: tuple[int, ...] = (6, 12, 24, 48)
    power_min_dbw: float = -30.0
    power_max_dbw: float = -10.0
    power_step_db: float = 2.0
    rho_list: tuple[float, ...] = (-0.3, -0.25, -0.2, -0.15, -0.1, -0.05, 0.0)
    ue_range_m: float = 50.0
    ue_azimuth_rad: float = float(np.pi / 4)

    def power_grid_dbw(self) -> np.ndarray:
        n = int(round((self.power_max_dbw - self.power_min_dbw) / self.power_step_db)) + 1
        return self.power_min_dbw + self.power_step_db * np.arange(n)


@dataclass(frozen=True)
class ResolvedConfig:
    """Everything the harness needs, with derived objects precomputed."""

    simulation: SimulationParams = SimulationParams()
    hardware: HardwareParams = HardwareParams()
    dataset: DatasetSpec = field(default_factory=lambda: DatasetSpec(n_train=5000, n_val=2000))
    training: TrainConfig = TrainConfig()
    sweep: SweepSettings = SweepSettings()
    array_n_side: int = 6
    array_spacing_wavelengths: float = 8.0
    ue_m_antennas: int = 4
    ue_height_diff_m: float = 10.0

    def array_spec(self, n_side: int | None = None) -> ArraySpec:
        lam = self.simulation.wavelength_m
        ref = ArraySpec(
            n_side=self.array_n_side,
            spacing_m=self.array_spacing_wavelengths * lam,
            wavelength_m=lam,
        )
        if n_side is None or n_side == ref.n_side:
            return ref
        from .geometry import equal_aperture_spec

        return equal_aperture_spec(ref, n_side)

    def propagation(self) -> PropagationParams:
        return PropagationParams(
            beta0=self.simulation.beta0,
            xi=self.simulation.xi,
            wavelength_m=self.simulation.wavelength_m,
        )


_SCHEMA = {
    "simulation": {
        "carrier_hz": lambda v: v > 0,
        "bandwidth_hz": lambda v: v > 0,
        "n0_dbw_per_hz": lambda v: np.isfinite(v),
        "noise_figure_db": lambda v: np.isfinite(v),
        "beta0_db": lambda v: np.isfinite(v),
        "xi": lambda v: v > 0,
        "rho": lambda v: -0.5 <= v <= 0.0,
        "seed": lambda v: isinstance(v, int) and v >= 0,
    },
    "hardware": {
        "kappa": lambda v: 0 < v <= 1,
        "mu_w": lambda v: v >= 0,
        "d0_w": lambda v: v >= 0,
        "upsilon_j_per_sample": lambda v: v >= 0,
        "eta_j_per_bit": lambda v: v >= 0,
    },
    "array": {
        "n_side": lambda v: isinstance(v, int) and v >= 2,
        "spacing_wavelengths": lambda v: v > 0,
    },
    "ue": {
        "m_antennas": lambda v: isinstance(v, int) and v >= 1,
        "height_diff_m": lambda v: np.isfinite(v),
    },
    "dataset": {
        "n_train": lambda v: isinstance(v, int) and v >= 0,
        "n_val": lambda v: isinstance(v, int) and v >= 0,
        "alpha": lambda v: 0 < v < 1,
        "sampling": lambda v: v in ("uniform-rphi", "disk"),
        "r_min_m": lambda v: v > 0,
        "r_max_m": lambda v: v > 0,
    },
    "training": {
        "lr": lambda v: v > 0,
        "weight_decay": lambda v: v >= 0,
        "lr_min": lambda v: v > 0,
        "epochs": lambda v: isinstance(v, int) and v >= 0,
        "batch_size": lambda v: isinstance(v, int) and v >= 1,
        "p_max_w": lambda v: v > 0,
    },
    "sweep": {
        "array_sizes": lambda v: isinstance(v, list) and all(isinstance(x, int) and x >= 2 for x in v),
        "power_min_dbw": lambda v: np.isfinite(v),
        "power_max_dbw": lambda v: np.isfinite(v),
        "power_step_db": lambda v: v > 0,
        "rho_list": lambda v: isinstance(v, list) and all(-0.5 <= x <= 0.0 for x in v),
        "ue_range_m": lambda v: v > 0,
        "ue_azimuth_rad": lambda v: 0 <= v <= np.pi / 2,
    },
}


def _validate(doc: dict):
    if not isinstance(doc, dict):
        raise ConfigError("top-level configuration must be an object")
    for section, body in doc.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown configuration section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for key, value in body.items():
            check = _SCHEMA[section].get(key)
            if check is None:
                raise ConfigError(f"unknown key {section!r}.{key!r}")
            numeric_ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            if not (numeric_ok or isinstance(value, (str, list))):
                raise ConfigError(f"{section!r}.{key!r} has unsupported type {type(value).__name__}")
            try:
                ok = check(value)
            except TypeError:
                ok = False
            if not ok:
                raise ConfigError(f"value out of range for {section!r}.{key!r}: {value!r}")


def parse_config(path: Path | str | None) -> ResolvedConfig:
    """Load a JSON config; missing file sections/keys fall back to defaults.

    An empty file is treated as an empty object.  Unknown sections or keys
    are rejected with the offending key path in the error message.
    """
    doc: dict = {}
    if path is not None:
        text = Path(path).read_text().strip()
        if text:
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    _validate(doc)

    sim = SimulationParams(**doc.get("simulation", {}))
    hw_in = doc.get("hardware", {})
    hw = HardwareParams(bandwidth_hz=sim.bandwidth_hz, **hw_in)
    arr = doc.get("array", {})
    ue = doc.get("ue", {})
    ds_in = dict(doc.get("dataset", {}))
    r_min = ds_in.pop("r_min_m", 10.0)
    r_max = ds_in.pop("r_max_m", 200.0)
    if r_max <= r_min:
        raise ConfigError("'dataset'.'r_max_m' must exceed 'dataset'.'r_min_m'")
    dataset = DatasetSpec(
        n_train=ds_in.pop("n_train", 5000),
        n_val=ds_in.pop("n_val", 2000),
        r_range_m=(r_min, r_max),
        alpha=ds_in.pop("alpha", 0.6),
        seed=sim.seed,
        height_diff_m=ue.get("height_diff_m", 10.0),
        m_antennas=ue.get("m_antennas", 4),
        sampling=ds_in.pop("sampling", "uniform-rphi"),
    )
    tr_in = dict(doc.get("training", {}))
    training = TrainConfig(alpha=dataset.alpha, seed=sim.seed, **tr_in)
    sw_in = dict(doc.get("sweep", {}))
    if "array_sizes" in sw_in:
        sw_in["array_sizes"] = tuple(sw_in["array_sizes"])
    if "rho_list" in sw_in:
        sw_in["rho_list"] = tuple(sw_in["rho_list"])
    sweep = SweepSettings(**sw_in)
    return ResolvedConfig(
        simulation=sim,
        hardware=hw,
        dataset=dataset,
        training=training,
        sweep=sweep,
        array_n_side=arr.get("n_side", 6),
        array_spacing_wavelengths=arr.get("spacing_wavelengths", 8.0),
        ue_m_antennas=ue.get("m_antennas", 4),
        ue_height_diff_m=ue.get("height_diff_m", 10.0),
    )


def echo_config(cfg: ResolvedConfig) -> dict:
    """Effective configuration as a plain JSON-serializable dict."""
    sim, hw, ds, tr, sw = cfg.simulation, cfg.hardware, cfg.dataset, cfg.training, cfg.sweep
    return {
        "simulation": {
            "carrier_hz": sim.carrier_hz,
            "bandwidth_hz": sim.bandwidth_hz,
            "n0_dbw_per_hz": sim.n0_dbw_per_hz,
            "noise_figure_db": sim.noise_figure_db,
            "beta0_db": sim.beta0_db,
            "xi": sim.xi,
            "rho": sim.rho,
            "seed": sim.seed,
            "derived_noise_power_w": sim.noise_power_w,
            "derived_wavelength_m": sim.wavelength_m,
        },
        "hardware": {
            "kappa": hw.kappa,
            "mu_w": hw.mu_w,
            "d0_w": hw.d0_w,
            "upsilon_j_per_sample": hw.upsilon_j_per_sample,
            "eta_j_per_bit": hw.eta_j_per_bit,
        },
        "array": {
            "n_side": cfg.array_n_side,
            "spacing_wavelengths": cfg.array_spacing_wavelengths,
        },
        "ue": {"m_antennas": cfg.ue_m_antennas, "height_diff_m": cfg.ue_height_diff_m},
        "dataset": {
            "n_train": ds.n_train,
            "n_val": ds.n_val,
            "alpha": ds.alpha,
            "sampling": ds.sampling,
            "r_min_m": ds.r_range_m[0],
            "r_max_m": ds.r_range_m[1],
        },
        "training": {
            "lr": tr.lr,
            "weight_decay": tr.weight_decay,
            "lr_min": tr.lr_min,
            "epochs": tr.epochs,
            "batch_size": tr.batch_size,
            "p_max_w": tr.p_max_w,
        },
        "sweep": {
            "array_sizes": list(sw.array_sizes),
            "power_min_dbw": sw.power_min_dbw,
            "power_max_dbw": sw.power_max_dbw,
            "power_step_db": sw.power_step_db,
            "rho_list": list(sw.rho_list),
            "ue_range_m": sw.ue_range_m,
            "ue_azimuth_rad": sw.ue_azimuth_rad,
        },
    }
