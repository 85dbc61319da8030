"""Command-line interface: dataset generation, calibration, simulation.

    dmimo generate  --config cfg.yaml --out DIR
    dmimo calibrate --dataset DIR --out DIR [--config cfg.yaml]
    dmimo simulate  --config cfg.yaml --out DIR [--trials N] [--seed N]
                    [--workers N]

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure. All commands are deterministic given their config (seeds
included); repeated runs produce byte-identical payload files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import calibration, configio, csidata
from .errors import (
    ConfigError,
    DataError,
    GeometryError,
    PlacementError,
    PrecodingError,
)
from .scenarios import ScenarioSummary, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

RESULTS_CSV_HEADER = "trial,user,precoder,sinr_db,nmse"


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit with code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dmimo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", help="write a synthetic CSI dataset")
    gen.add_argument("--config", required=True, help="generation config (YAML)")
    gen.add_argument("--out", required=True, help="output dataset directory")

    cal = sub.add_parser("calibrate", help="estimate and apply phase offsets")
    cal.add_argument("--dataset", required=True, help="input dataset directory")
    cal.add_argument("--out", required=True, help="output directory")
    cal.add_argument(
        "--config",
        default=None,
        help="optional geometry config overriding the dataset manifest",
    )

    sim = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    sim.add_argument("--config", required=True, help="scenario config (YAML)")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--trials", type=int, default=None, help="override trial count")
    sim.add_argument("--seed", type=int, default=None, help="override RNG seed")
    sim.add_argument("--workers", type=int, default=None, help="override worker count")
    return parser


def cmd_generate(config_path: str, out_dir: str) -> int:
    geometry, grid_spec, params, tx_count, offsets_seed = configio.parse_generate_config(
        config_path
    )
    grid, manifest, table = csidata.generate_synthetic_dataset(
        geometry, grid_spec, params, tx_count=tx_count, offsets_seed=offsets_seed
    )
    out = Path(out_dir)
    csidata.write_dataset(grid, manifest, out)
    if table is not None:
        table.to_csv(out / "offsets_true.csv")
        print(f"injected hardware offsets (ground truth in {out / 'offsets_true.csv'})")
    gm, gn = grid.grid_shape
    print(
        f"wrote dataset to {out}: {tx_count} tx x {manifest.rx_count} rx over "
        f"{gm}x{gn} grid positions"
    )
    return EXIT_OK


def cmd_calibrate(dataset_dir: str, out_dir: str, config_path: str | None = None) -> int:
    grid, manifest = csidata.read_dataset(dataset_dir)
    rx_positions = manifest.rx_positions
    wavelength = manifest.wavelength
    if config_path is not None:
        doc = configio.load_yaml(config_path)
        geometry, _ = configio.parse_geometry(doc.get("geometry", {}))
        if geometry.num_antennas != manifest.rx_count:
            raise ConfigError(
                f"geometry override has {geometry.num_antennas} antennas, "
                f"dataset has {manifest.rx_count}"
            )
        rx_positions = geometry.antenna_positions
        wavelength = geometry.wavelength
    table = calibration.estimate_phase_offsets(grid, rx_positions, wavelength)
    calibrated = calibration.apply_calibration(grid, table)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "offsets.csv")
    csidata.write_dataset(calibrated, manifest, out)
    residual = calibration.mean_phase_residual(calibrated, rx_positions, wavelength)
    print(f"wrote offset table to {out / 'offsets.csv'} and calibrated dataset to {out}")
    print(f"mean residual phase error vs LoS: {residual:.3e} rad")
    return EXIT_OK


def _json_safe(value):
    import numpy as np

    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    return value


def summary_document(summary: ScenarioSummary) -> dict:
    """Self-describing JSON document for one scenario run."""
    cfg = summary.config
    doc = {
        "schema_version": configio.SCHEMA_VERSION,
        "noise_var": summary.noise_var,
        "mean_user_gain": summary.mean_user_gain,
        "mean_entry_gain": summary.mean_entry_gain,
        "sigma_grid": summary.sigma_grid,
        "config": {
            "k_users": cfg.k_users,
            "trials": cfg.trials,
            "rng_seed": cfg.rng_seed,
            "noise_floor_db": cfg.noise_floor_db,
            "min_spacing_m": cfg.min_spacing_m,
            "amplitude_model": cfg.amplitude_model,
            "reference_gain": cfg.reference_gain,
            "channel_source": cfg.channel_source,
            "dataset_path": cfg.dataset_path,
            "nmse_grid": list(cfg.nmse_grid) if cfg.nmse_grid is not None else None,
            "nmse_relative": cfg.nmse_relative,
            "clustering": [list(p) for p in cfg.clustering]
            if cfg.clustering is not None
            else None,
            "workers": cfg.workers,
            "precoders": [dataclasses.asdict(s) for s in cfg.precoders],
            "geometry": {
                "wavelength_m": cfg.geometry.wavelength,
                "num_antennas": cfg.geometry.num_antennas,
                "num_aps": cfg.geometry.num_aps,
                "antenna_positions": cfg.geometry.antenna_positions,
                "ap_partition": [list(ap) for ap in cfg.geometry.ap_partition],
            },
            "roi": {"lo": cfg.roi.lo, "hi": cfg.roi.hi},
        },
        "precoders": [
            {
                "precoder": s.precoder,
                "sigma_e2": s.sigma_e2,
                "mean_nmse": s.mean_nmse,
                "n_trials": s.n_trials,
                "n_failed_trials": s.n_failed_trials,
                "failure_rate": s.failure_rate,
                "n_samples": s.n_samples,
                "median_db": s.median_db,
                "guaranteed_90_db": s.guaranteed_90_db,
                "cdf": None
                if s.cdf_values is None
                else {"sinr_db": s.cdf_values, "probability": s.cdf_probs},
            }
            for s in summary.stats
        ],
    }
    return _json_safe(doc)


def write_results_csv(summary: ScenarioSummary, path) -> None:
    """Per-trial rows: trial,user,precoder,sinr_db,nmse (failures omitted)."""
    with open(path, "w") as fh:
        fh.write(RESULTS_CSV_HEADER + "\n")
        for res in summary.trial_results:
            for entry in res.entries:
                if entry.sinr_db is None:
                    continue
                nmse = "" if entry.nmse is None else repr(float(entry.nmse))
                for user in range(summary.config.k_users):
                    fh.write(
                        f"{res.trial},{user},{entry.precoder},"
                        f"{repr(float(entry.sinr_db[user]))},{nmse}\n"
                    )


def cmd_simulate(
    config_path: str,
    out_dir: str,
    trials: int | None = None,
    seed: int | None = None,
    workers: int | None = None,
) -> int:
    config = configio.parse_simulate_config(config_path)
    overrides = {}
    if trials is not None:
        overrides["trials"] = trials
    if seed is not None:
        overrides["rng_seed"] = seed
    if workers is not None:
        overrides["workers"] = workers
    if overrides:
        config = dataclasses.replace(config, **overrides)

    summary = run_scenario(config)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(summary, out / "results.csv")
    with open(out / "summary.json", "w") as fh:
        json.dump(summary_document(summary), fh, indent=1)
        fh.write("\n")

    print(
        f"noise_var = {summary.noise_var:.6e} "
        f"({config.noise_floor_db:+.1f} dB vs mean received power)"
    )
    for s in summary.stats:
        sig = "" if s.sigma_e2 is None else f" sigma_e2={s.sigma_e2:.3e}"
        med = "n/a" if s.median_db is None else f"{s.median_db:7.2f} dB"
        p10 = "n/a" if s.guaranteed_90_db is None else f"{s.guaranteed_90_db:7.2f} dB"
        print(
            f"{s.precoder:>12}{sig}: median {med}, 90%-guaranteed {p10}, "
            f"failures {s.failure_rate:.1%}"
        )
    print(f"wrote {out / 'results.csv'} and {out / 'summary.json'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_CONFIG
    try:
        if args.command == "generate":
            return cmd_generate(args.config, args.out)
        if args.command == "calibrate":
            return cmd_calibrate(args.dataset, args.out, args.config)
        return cmd_simulate(
            args.config, args.out, args.trials, args.seed, args.workers
        )
    except ConfigError as exc:
        print(f"dmimo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"dmimo: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PrecodingError, PlacementError, GeometryError, FloatingPointError) as exc:
        print(f"dmimo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
