"""Command-line harness: sweep, train, eval, mc-check.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import benchmarks
from .config import ConfigError, ResolvedConfig, echo_config, parse_config
from .distortion import (
    DistortionParams,
    bussgang_gain,
    distortion_covariance,
    monte_carlo_distortion,
)
from .features import load_or_build_dataset
from .network import init_params, load_checkpoint, save_checkpoint
from .training import DISTANCE_BINS, prepare_samples, train

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modarray",
        description="Energy-efficient modular-array simulator and trainer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--no-plots", action="store_true", help="skip SVG plot emission")
        p.add_argument(
            "--deterministic",
            action="store_true",
            help="force serial, reproducible execution (the default; kept for scripts)",
        )

    common(sub.add_parser("sweep", help="density sweep over equal-aperture arrays"))
    common(sub.add_parser("train", help="train the policy network"))
    p_eval = sub.add_parser("eval", help="evaluate a checkpoint against WF benchmarks")
    common(p_eval)
    p_eval.add_argument("--checkpoint", type=Path, default=None,
                        help="checkpoint path (default: <out>/checkpoint.json)")
    p_mc = sub.add_parser("mc-check", help="Monte-Carlo check of the distortion model")
    p_mc.add_argument("--rho", type=float, default=-0.1)
    p_mc.add_argument("--k", type=int, default=2)
    p_mc.add_argument("--samples", type=int, default=1_000_000)
    p_mc.add_argument("--seed", type=int, default=0)
    return parser


def _resolve(args) -> ResolvedConfig:
    cfg = parse_config(args.config)
    if args.seed is not None:
        from dataclasses import replace

        sim = replace(cfg.simulation, seed=args.seed)
        ds = replace(cfg.dataset, seed=args.seed)
        tr = replace(cfg.training, seed=args.seed)
        cfg = replace(cfg, simulation=sim, dataset=ds, training=tr)
    return cfg


def _prepare_out(cfg: ResolvedConfig, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.json").write_text(json.dumps(echo_config(cfg), indent=2, sort_keys=True))
    return out


def cmd_sweep(args) -> int:
    cfg = _resolve(args)
    out = _prepare_out(cfg, args.out)
    rows = benchmarks.run_density_sweep(cfg)
    benchmarks.write_csv(out / "sweep.csv", benchmarks.SWEEP_HEADER, rows)
    if not args.no_plots:
        benchmarks.plot_sweep(rows, out)
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} rows)")
    return 0


def _load_dataset(cfg: ResolvedConfig, out: Path):
    cache = out / "dataset.npz"
    return load_or_build_dataset(cache, cfg.dataset, cfg.array_spec(), cfg.propagation())


def cmd_train(args) -> int:
    cfg = _resolve(args)
    out = _prepare_out(cfg, args.out)
    train_samples, val_samples = _load_dataset(cfg, out)
    train_set = prepare_samples(train_samples)
    val_set = prepare_samples(val_samples)
    params = init_params(train_set.features.shape[1], n_streams=cfg.ue_m_antennas,
                         seed=cfg.training.seed)
    d = DistortionParams(rho=cfg.simulation.rho, noise_power_w=cfg.simulation.noise_power_w)
    trained, history = train(params, train_set, val_set, cfg.training, cfg.hardware, d)
    ckpt = out / "checkpoint.json"
    save_checkpoint(ckpt, trained, extra={"rho": cfg.simulation.rho})
    hist_header = ["epoch", "step", "lr", "train_loss", "val_weighted_ee"] + [
        f"val_ee_bin{i}" for i in range(DISTANCE_BINS)
    ]
    rows = [{k: h.get(k, float("nan")) for k in hist_header} for h in history]
    benchmarks.write_csv(out / "history.csv", hist_header, rows)
    print(f"wrote {ckpt} and {out / 'history.csv'} ({len(history)} steps)")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    out = _prepare_out(cfg, args.out)
    ckpt = args.checkpoint or (out / "checkpoint.json")
    if not Path(ckpt).exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    params = load_checkpoint(ckpt)
    _, val_samples = _load_dataset(cfg, out)
    val_set = prepare_samples(val_samples)
    rows = benchmarks.run_benchmarks(params, val_set, cfg)
    benchmarks.write_csv(out / "bench.csv", benchmarks.BENCH_HEADER, rows)
    if not args.no_plots:
        benchmarks.plot_benchmarks(rows, out)
    print(f"wrote {out / 'bench.csv'} ({len(rows)} rows)")
    return 0


def cmd_mc_check(args) -> int:
    """Analytic vs. empirical distortion statistics as CSV on stdout."""
    rng = np.random.default_rng(args.seed)
    k = args.k
    a = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
    q = a @ a.conj().T / k
    gain_emp, c_emp = monte_carlo_distortion(q, args.rho, args.samples, seed=args.seed + 1)
    gain_true = bussgang_gain(args.rho)
    c_true = distortion_covariance(q, args.rho)
    gain_scalar = float(np.real(np.trace(gain_emp)) / k)
    c_err = float(np.linalg.norm(c_emp - c_true) / max(np.linalg.norm(c_true), 1e-300))
    writer = csv.writer(sys.stdout)
    writer.writerow(["rho", "k", "metric", "analytic", "empirical", "rel_err"])
    writer.writerow(
        [f"{args.rho:.9g}", k, "bussgang_gain", f"{gain_true:.9g}", f"{gain_scalar:.9g}",
         f"{abs(gain_scalar - gain_true) / max(abs(gain_true), 1e-300):.9g}"]
    )
    writer.writerow(
        [f"{args.rho:.9g}", k, "distortion_cov_fro",
         f"{np.linalg.norm(c_true):.9g}", f"{np.linalg.norm(c_emp):.9g}", f"{c_err:.9g}"]
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "sweep": cmd_sweep,
        "train": cmd_train,
        "eval": cmd_eval,
        "mc-check": cmd_mc_check,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
