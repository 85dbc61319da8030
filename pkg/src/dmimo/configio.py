"""YAML run-configuration parsing with strict key validation.

Units are meters for all coordinates/spacings, dB for the noise floor,
and linear variance for channel-error values. Unknown keys are rejected
so typos fail loudly. ``schema_version`` must be 1.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .csidata import GridSpec
from .errors import ConfigError
from .geometry import ArrayGeometry, Box, default_roi, perimeter_geometry
from .precoders import PrecoderSpec, parse_precoder_name
from .scenarios import ScenarioConfig

SCHEMA_VERSION = 1


def _require_mapping(doc, context: str) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(f"{context} must be a mapping, got {type(doc).__name__}")
    return doc


def _check_keys(doc: dict, allowed: set[str], required: set[str], context: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) {sorted(unknown)} in {context}; allowed: {sorted(allowed)}"
        )
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"missing key(s) {sorted(missing)} in {context}")


def load_yaml(path) -> dict:
    p = Path(path)
    try:
        with open(p) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {p}: {exc}") from exc
    doc = _require_mapping(doc, f"config file {p}")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"{p}: schema_version must be {SCHEMA_VERSION}, got {version!r}"
        )
    return doc


def parse_geometry(doc) -> tuple[ArrayGeometry, Box | None]:
    """Geometry section; returns (geometry, default RoI or None)."""
    doc = _require_mapping(doc, "geometry")
    kind = doc.get("kind", "perimeter")
    if kind == "perimeter":
        _check_keys(
            doc,
            {"kind", "wavelength_m", "side_m", "n_aps", "antennas_per_ap", "height_m"},
            set(),
            "geometry",
        )
        side = float(doc.get("side_m", 6.0))
        geo = perimeter_geometry(
            wavelength=float(doc.get("wavelength_m", 0.115)),
            side=side,
            n_aps=int(doc.get("n_aps", 8)),
            antennas_per_ap=int(doc.get("antennas_per_ap", 8)),
            height=float(doc.get("height_m", 1.25)),
        )
        return geo, default_roi(side=side)
    if kind == "explicit":
        _check_keys(
            doc,
            {"kind", "wavelength_m", "antenna_positions", "ap_partition"},
            {"wavelength_m", "antenna_positions", "ap_partition"},
            "geometry",
        )
        geo = ArrayGeometry(
            antenna_positions=doc["antenna_positions"],
            ap_partition=tuple(tuple(ap) for ap in doc["ap_partition"]),
            wavelength=float(doc["wavelength_m"]),
        )
        return geo, None
    raise ConfigError(f"geometry kind must be 'perimeter' or 'explicit', got {kind!r}")


def parse_roi(doc) -> Box:
    doc = _require_mapping(doc, "roi")
    _check_keys(
        doc,
        {"x_min", "x_max", "y_min", "y_max", "z", "z_min", "z_max"},
        {"x_min", "x_max", "y_min", "y_max"},
        "roi",
    )
    if "z" in doc and ("z_min" in doc or "z_max" in doc):
        raise ConfigError("roi: give either z or z_min/z_max, not both")
    z_min = float(doc.get("z_min", doc.get("z", 0.0)))
    z_max = float(doc.get("z_max", doc.get("z", 0.0)))
    return Box(
        lo=[float(doc["x_min"]), float(doc["y_min"]), z_min],
        hi=[float(doc["x_max"]), float(doc["y_max"]), z_max],
    )


def parse_precoder_entry(entry) -> PrecoderSpec:
    """A precoder is either a canonical name or an explicit mapping."""
    if isinstance(entry, str):
        return parse_precoder_name(entry)
    entry = _require_mapping(entry, "precoder entry")
    _check_keys(
        entry,
        {"name", "base", "suppression", "regularized", "alpha", "scope"},
        {"name", "base"},
        f"precoder entry {entry.get('name', '?')!r}",
    )
    alpha = entry.get("alpha")
    return PrecoderSpec(
        name=str(entry["name"]),
        base=str(entry["base"]),
        suppression=str(entry.get("suppression", "none")),
        regularized=bool(entry.get("regularized", False)),
        alpha=None if alpha is None else float(alpha),
        scope=str(entry.get("scope", "centralized")),
    )


_SIMULATE_KEYS = {
    "schema_version",
    "geometry",
    "roi",
    "users",
    "trials",
    "seed",
    "noise_floor_db",
    "min_spacing_m",
    "amplitude_model",
    "reference_gain",
    "precoders",
    "nmse_grid",
    "clustering",
    "channel",
    "workers",
}


def parse_simulate_config(path) -> ScenarioConfig:
    doc = load_yaml(path)
    _check_keys(doc, _SIMULATE_KEYS, {"geometry", "users", "trials", "precoders"}, str(path))
    geometry, roi = parse_geometry(doc["geometry"])
    if "roi" in doc:
        roi = parse_roi(doc["roi"])
    if roi is None:
        raise ConfigError("explicit geometry requires an roi section")

    precoders = tuple(parse_precoder_entry(e) for e in doc["precoders"])

    nmse_grid = None
    nmse_relative = False
    if "nmse_grid" in doc and doc["nmse_grid"] is not None:
        sect = _require_mapping(doc["nmse_grid"], "nmse_grid")
        _check_keys(sect, {"values", "relative"}, {"values"}, "nmse_grid")
        nmse_grid = tuple(float(v) for v in sect["values"])
        nmse_relative = bool(sect.get("relative", False))

    clustering = None
    if "clustering" in doc and doc["clustering"] is not None:
        sect = _require_mapping(doc["clustering"], "clustering")
        _check_keys(sect, {"pairs"}, {"pairs"}, "clustering")
        clustering = tuple(tuple(int(a) for a in pair) for pair in sect["pairs"])

    source = "synthetic"
    dataset_path = None
    if "channel" in doc and doc["channel"] is not None:
        sect = _require_mapping(doc["channel"], "channel")
        _check_keys(sect, {"source", "path"}, {"source"}, "channel")
        source = str(sect["source"])
        if sect.get("path") is not None:
            dataset_path = str(sect["path"])

    return ScenarioConfig(
        geometry=geometry,
        roi=roi,
        k_users=int(doc["users"]),
        trials=int(doc["trials"]),
        precoders=precoders,
        noise_floor_db=float(doc.get("noise_floor_db", -20.0)),
        min_spacing_m=float(doc.get("min_spacing_m", 0.10)),
        nmse_grid=nmse_grid,
        nmse_relative=nmse_relative,
        clustering=clustering,
        rng_seed=int(doc.get("seed", 0)),
        channel_source=source,
        dataset_path=dataset_path,
        amplitude_model=str(doc.get("amplitude_model", "free-space")),
        reference_gain=float(doc.get("reference_gain", 1.0)),
        workers=int(doc.get("workers", 1)),
    )


_GENERATE_KEYS = {
    "schema_version",
    "geometry",
    "grid",
    "tx_count",
    "amplitude_model",
    "reference_gain",
    "hardware_offsets",
}


def parse_generate_config(path):
    """Returns (geometry, GridSpec, LosChannelParams-args, tx_count, offsets_seed)."""
    from .geometry import LosChannelParams

    doc = load_yaml(path)
    _check_keys(doc, _GENERATE_KEYS, {"geometry", "grid"}, str(path))
    geometry, _ = parse_geometry(doc["geometry"])
    sect = _require_mapping(doc["grid"], "grid")
    _check_keys(
        sect,
        {"nx", "ny", "x_min", "x_max", "y_min", "y_max", "z"},
        {"nx", "ny", "x_min", "x_max", "y_min", "y_max"},
        "grid",
    )
    grid_spec = GridSpec(
        nx=int(sect["nx"]),
        ny=int(sect["ny"]),
        x_min=float(sect["x_min"]),
        x_max=float(sect["x_max"]),
        y_min=float(sect["y_min"]),
        y_max=float(sect["y_max"]),
        z=float(sect.get("z", 0.0)),
    )
    params = LosChannelParams(
        wavelength=geometry.wavelength,
        amplitude_model=str(doc.get("amplitude_model", "free-space")),
        reference_gain=float(doc.get("reference_gain", 1.0)),
    )
    offsets_seed = None
    if "hardware_offsets" in doc and doc["hardware_offsets"] is not None:
        sect = _require_mapping(doc["hardware_offsets"], "hardware_offsets")
        _check_keys(sect, {"seed"}, {"seed"}, "hardware_offsets")
        offsets_seed = int(sect["seed"])
    tx_count = int(doc.get("tx_count", 4))
    return geometry, grid_spec, params, tx_count, offsets_seed
