"""Simulator, trainer, and benchmark harness for energy-efficient near-field
MIMO with sparse modular arrays under amplifier non-linearity."""

from .channel import (
    ChannelMatrix,
    PropagationParams,
    SvdResult,
    build_channel,
    compact_svd,
    subselect,
)
from .distortion import (
    DistortionParams,
    TransmitCovariance,
    bussgang_gain,
    distortion_covariance,
    monte_carlo_distortion,
    radiated_power,
    spectral_efficiency,
)
from .geometry import (
    ArraySpec,
    ModularConfig,
    UeGeometry,
    all_modular_configs,
    antenna_positions,
    equal_aperture_spec,
    modular_mask,
    ue_positions,
)
from .power_model import (
    EvalRecord,
    HardwareParams,
    ee_power_sweep,
    energy_efficiency,
    total_power,
    water_filling,
)

__all__ = [
    "ArraySpec",
    "ChannelMatrix",
    "DistortionParams",
    "EvalRecord",
    "HardwareParams",
    "ModularConfig",
    "PropagationParams",
    "SvdResult",
    "TransmitCovariance",
    "UeGeometry",
    "all_modular_configs",
    "antenna_positions",
    "build_channel",
    "bussgang_gain",
    "compact_svd",
    "distortion_covariance",
    "ee_power_sweep",
    "energy_efficiency",
    "equal_aperture_spec",
    "modular_mask",
    "monte_carlo_distortion",
    "radiated_power",
    "spectral_efficiency",
    "subselect",
    "total_power",
    "ue_positions",
    "water_filling",
]

__version__ = "0.1.0"
