"""Experiment drivers: density sweeps, benchmark evaluation, CSV/SVG emission."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import build_channel, compact_svd
from .config import ResolvedConfig
from .distortion import DistortionParams
from .features import Sample
from .geometry import UeGeometry, antenna_positions, ue_positions
from .network import NetworkParams, forward, power_from_heads
from .power_model import ee_power_sweep, water_filling
from .training import DISTANCE_BINS, PreparedSet, _argmax_high, ee_batch

SWEEP_HEADER = ["array", "rho", "se_bpshz", "ee_bits_per_joule", "p_opt_dbw", "k_active"]
BENCH_HEADER = ["scheme", "bin_lo_m", "bin_hi_m", "mean_se", "mean_ee", "n"]

SCHEMES = (
    "dnn",
    "wf_learned_power_and_antennas",
    "wf_all_learned_power",
    "wf_learned_antennas_full_power",
    "wf_all_full_power",
)


def run_density_sweep(cfg: ResolvedConfig) -> list[dict]:
    """Best-EE operating points versus compression for equal-aperture arrays.

    Fixed single-UE geometry; full-array activation with water-filling over
    the sweep power grid.  Rows are sorted by (array size, rho).
    """
    sw = cfg.sweep
    grid = sw.power_grid_dbw()
    sigma2 = cfg.simulation.noise_power_w
    geom = UeGeometry(
        range_m=sw.ue_range_m,
        azimuth_rad=sw.ue_azimuth_rad,
        height_diff_m=cfg.ue_height_diff_m,
        m_antennas=cfg.ue_m_antennas,
    )
    rows = []
    for n_side in sorted(sw.array_sizes):
        spec = cfg.array_spec(n_side)
        tx = antenna_positions(spec)
        rx = ue_positions(geom, spec.wavelength_m)
        channel = build_channel(tx, rx, cfg.propagation())
        svd = compact_svd(channel)
        for rho in sorted(sw.rho_list):
            d = DistortionParams(rho=rho, noise_power_w=sigma2)
            rec = ee_power_sweep(channel, None, cfg.hardware, d, grid, svd=svd)
            rows.append(
                {
                    "array": n_side,
                    "rho": rho,
                    "se_bpshz": rec.se_bps_hz,
                    "ee_bits_per_joule": rec.ee_bits_per_joule,
                    "p_opt_dbw": 10.0 * np.log10(rec.total_input_power_w),
                    "k_active": rec.k_active,
                }
            )
    return rows


@dataclass
class SchemeResult:
    se: np.ndarray  # (N,)
    ee: np.ndarray  # (N,)


def evaluate_schemes(
    params: NetworkParams,
    prepared: PreparedSet,
    cfg: ResolvedConfig,
) -> dict[str, SchemeResult]:
    """Per-sample SE/EE of the learned policy and its four water-filling variants.

    All schemes share the distortion-aware rate; they differ in total input
    power (learned scaling vs. full), active antennas (learned configuration
    vs. all), and allocation (learned powers vs. water-filling).
    """
    sim, hw, tr = cfg.simulation, cfg.hardware, cfg.training
    d = DistortionParams(rho=sim.rho, noise_power_w=sim.noise_power_w)
    outputs, _ = forward(params, prepared.features)
    n = len(prepared)
    p_dnn = power_from_heads(outputs.power_logits, outputs.scaling_logit, tr.p_max_w)
    p_learned_total = p_dnn.sum(axis=1)
    config_idx = _argmax_high(outputs.cx_probs) * 3 + _argmax_high(outputs.cy_probs)
    full_idx = len(prepared.configs) - 1  # (3,3): all antennas active

    results = {name: SchemeResult(np.empty(n), np.empty(n)) for name in SCHEMES}

    def run(name, which_config, powers):
        res = results[name]
        for c, config in enumerate(prepared.configs):
            sel = np.flatnonzero(which_config == c)
            if sel.size == 0:
                continue
            se, ee = ee_batch(
                prepared.config_v[c][sel],
                prepared.config_s[c][sel],
                powers[sel][:, None, :],
                config.k_active,
                hw,
                d,
            )
            res.se[sel] = se[:, 0]
            res.ee[sel] = ee[:, 0]

    def wf_powers(which_config, totals):
        p = np.empty_like(p_dnn)
        for i in range(n):
            s = prepared.config_s[which_config[i]][i]
            p[i] = water_filling(s, sim.noise_power_w, totals[i])
        return p

    all_full = np.full(n, full_idx)
    full_power = np.full(n, tr.p_max_w)

    run("dnn", config_idx, p_dnn)
    run("wf_learned_power_and_antennas", config_idx, wf_powers(config_idx, p_learned_total))
    run("wf_all_learned_power", all_full, wf_powers(all_full, p_learned_total))
    run("wf_learned_antennas_full_power", config_idx, wf_powers(config_idx, full_power))
    run("wf_all_full_power", all_full, wf_powers(all_full, full_power))
    return results


def run_benchmarks(
    params: NetworkParams,
    prepared: PreparedSet,
    cfg: ResolvedConfig,
) -> list[dict]:
    """Distance-binned mean SE/EE rows for the five benchmark schemes."""
    results = evaluate_schemes(params, prepared, cfg)
    r_lo, r_hi = cfg.dataset.r_range_m
    edges = np.linspace(r_lo, r_hi, DISTANCE_BINS + 1)
    which = np.clip(np.digitize(prepared.r_m, edges) - 1, 0, DISTANCE_BINS - 1)
    rows = []
    for name in SCHEMES:
        res = results[name]
        for i in range(DISTANCE_BINS):
            sel = which == i
            count = int(sel.sum())
            rows.append(
                {
                    "scheme": name,
                    "bin_lo_m": edges[i],
                    "bin_hi_m": edges[i + 1],
                    "mean_se": float(res.se[sel].mean()) if count else float("nan"),
                    "mean_ee": float(res.ee[sel].mean()) if count else float("nan"),
                    "n": count,
                }
            )
    return rows


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.9g}"


def write_csv(path: Path | str, header: list[str], rows: list[dict]):
    """Deterministic CSV: fixed header, 9 significant digits for floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in header])


def plot_sweep(rows: list[dict], out_dir: Path):
    """SE-vs-rho and EE-vs-rho line plots per array size."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    arrays = sorted({r["array"] for r in rows})
    for metric, fname, ylabel in (
        ("se_bpshz", "sweep_se.svg", "SE [bit/s/Hz]"),
        ("ee_bits_per_joule", "sweep_ee.svg", "EE [bit/J]"),
    ):
        fig, ax = plt.subplots(figsize=(6, 4))
        for n_side in arrays:
            pts = sorted((r["rho"], r[metric]) for r in rows if r["array"] == n_side)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    label=f"{n_side}x{n_side}")
        ax.set_xlabel("compression parameter")
        ax.set_ylabel(ylabel)
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(out_dir / fname)
        plt.close(fig)


def plot_benchmarks(rows: list[dict], out_dir: Path):
    """Distance-binned EE and SE comparison plots across schemes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for metric, fname, ylabel in (
        ("mean_ee", "bench_ee.svg", "EE [bit/J]"),
        ("mean_se", "bench_se.svg", "SE [bit/s/Hz]"),
    ):
        fig, ax = plt.subplots(figsize=(6, 4))
        for scheme in SCHEMES:
            pts = [
                (0.5 * (r["bin_lo_m"] + r["bin_hi_m"]), r[metric])
                for r in rows
                if r["scheme"] == scheme and r["n"] > 0
            ]
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=scheme)
        ax.set_xlabel("UE distance [m]")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=7)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(out_dir / fname)
        plt.close(fig)
