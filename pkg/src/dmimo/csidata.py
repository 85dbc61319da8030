"""CSI-grid dataset format: read/write and synthetic generation.

A dataset is a directory with two files:

``manifest.json``
    format_version, wavelength (m), tx_count, rx_count, rx_positions
    (list of [x, y, z] in meters) and grid (list of [m, n, x, y, z]
    covering a full rectangle of measurement positions).

``csi.csv``
    header ``tx,rx,m,n,re,im``; one row per available complex CSI value,
    0-based antenna and grid indices, real/imag in full round-trip
    decimal precision. Missing (tx, rx, m, n) triples are simply omitted
    and flagged missing on read.

The tx index plays the role of a UE-side antenna measured over the grid;
the rx index is a base-station antenna. All tx antennas of a synthetic
dataset share the same ideal LoS channel and differ only through
injected hardware offsets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError, GeometryError
from .geometry import ArrayGeometry, LosChannelParams, los_phase

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
CSI_NAME = "csi.csv"
CSV_HEADER = "tx,rx,m,n,re,im"


@dataclass(frozen=True)
class CsiGrid:
    """Complex CSI indexed by (tx antenna, rx antenna, grid position).

    csi       : (T, R, GM, GN) complex
    present   : (T, R, GM, GN) bool, False where a value is missing
    positions : (GM, GN, 3) float, meters
    """

    csi: np.ndarray
    present: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        csi = np.asarray(self.csi, dtype=complex)
        present = np.asarray(self.present, dtype=bool)
        positions = np.asarray(self.positions, dtype=float)
        if csi.ndim != 4:
            raise DatasetFormatError(f"csi must be 4D (T,R,GM,GN), got {csi.shape}")
        if present.shape != csi.shape:
            raise DatasetFormatError("present mask must match csi shape")
        if positions.shape != (csi.shape[2], csi.shape[3], 3):
            raise DatasetFormatError(
                f"positions must have shape (GM, GN, 3) = "
                f"{(csi.shape[2], csi.shape[3], 3)}, got {positions.shape}"
            )
        if not np.all(np.isfinite(positions)):
            raise DatasetFormatError("grid positions must be finite")
        if not np.all(np.isfinite(csi[present])):
            raise DatasetFormatError("present CSI values must be finite")
        object.__setattr__(self, "csi", csi)
        object.__setattr__(self, "present", present)
        object.__setattr__(self, "positions", positions)

    @property
    def tx_count(self) -> int:
        return self.csi.shape[0]

    @property
    def rx_count(self) -> int:
        return self.csi.shape[1]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.csi.shape[2], self.csi.shape[3]


@dataclass(frozen=True)
class DatasetManifest:
    """Dimensions and geometry of one CSI grid dataset."""

    wavelength: float
    tx_count: int
    rx_count: int
    rx_positions: np.ndarray
    grid_positions: np.ndarray
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        rx = np.asarray(self.rx_positions, dtype=float)
        grid = np.asarray(self.grid_positions, dtype=float)
        if not self.wavelength > 0:
            raise DatasetFormatError(f"wavelength must be > 0, got {self.wavelength}")
        if rx.ndim != 2 or rx.shape[1] != 3:
            raise DatasetFormatError(f"rx_positions must be (R, 3), got {rx.shape}")
        if rx.shape[0] != self.rx_count:
            raise DatasetFormatError(
                f"rx_positions has {rx.shape[0]} rows but rx_count is {self.rx_count}"
            )
        if self.tx_count < 1:
            raise DatasetFormatError(f"tx_count must be >= 1, got {self.tx_count}")
        if grid.ndim != 3 or grid.shape[2] != 3:
            raise DatasetFormatError(
                f"grid_positions must be (GM, GN, 3), got {grid.shape}"
            )
        object.__setattr__(self, "rx_positions", rx)
        object.__setattr__(self, "grid_positions", grid)


@dataclass(frozen=True)
class GridSpec:
    """Rectangular lattice of measurement positions at a fixed height."""

    nx: int
    ny: int
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z: float = 0.0

    def positions(self) -> np.ndarray:
        if self.nx < 1 or self.ny < 1:
            raise GeometryError("grid needs nx >= 1 and ny >= 1")
        x = np.linspace(self.x_min, self.x_max, self.nx)
        y = np.linspace(self.y_min, self.y_max, self.ny)
        out = np.empty((self.nx, self.ny, 3))
        out[:, :, 0] = x[:, None]
        out[:, :, 1] = y[None, :]
        out[:, :, 2] = self.z
        return out


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(grid: CsiGrid, manifest: DatasetManifest, path) -> None:
    """Write manifest.json and csi.csv into the directory ``path``."""
    if manifest.tx_count != grid.tx_count or manifest.rx_count != grid.rx_count:
        raise DatasetFormatError("manifest and grid disagree on antenna counts")
    if manifest.grid_positions.shape != grid.positions.shape or not np.array_equal(
        manifest.grid_positions, grid.positions
    ):
        raise DatasetFormatError("manifest and grid disagree on grid positions")
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        gm, gn = grid.grid_shape
        doc = {
            "format_version": manifest.format_version,
            "wavelength": manifest.wavelength,
            "tx_count": manifest.tx_count,
            "rx_count": manifest.rx_count,
            "rx_positions": [[float(v) for v in p] for p in manifest.rx_positions],
            "grid": [
                [m, n] + [float(v) for v in manifest.grid_positions[m, n]]
                for m in range(gm)
                for n in range(gn)
            ],
        }
        with open(out / MANIFEST_NAME, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
        with open(out / CSI_NAME, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for t in range(grid.tx_count):
                for r in range(grid.rx_count):
                    for m in range(gm):
                        for n in range(gn):
                            if not grid.present[t, r, m, n]:
                                continue
                            z = grid.csi[t, r, m, n]
                            fh.write(
                                f"{t},{r},{m},{n},{_fmt(z.real)},{_fmt(z.imag)}\n"
                            )
    except OSError as exc:
        raise DatasetFormatError(f"cannot write dataset at {out}: {exc}") from exc


def _read_manifest(path: Path) -> DatasetManifest:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DatasetFormatError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"malformed manifest {path}: {exc}") from exc
    required = {
        "format_version",
        "wavelength",
        "tx_count",
        "rx_count",
        "rx_positions",
        "grid",
    }
    missing = required - set(doc)
    if missing:
        raise DatasetFormatError(f"manifest {path} missing keys: {sorted(missing)}")
    version = doc["format_version"]
    if version != FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported format_version {version} (supported: {FORMAT_VERSION})"
        )
    rows = doc["grid"]
    if not rows:
        raise DatasetFormatError(f"manifest {path} has an empty grid")
    seen = {}
    for row in rows:
        if len(row) != 5:
            raise DatasetFormatError(f"grid rows must be [m, n, x, y, z], got {row}")
        m, n = int(row[0]), int(row[1])
        if (m, n) in seen:
            raise DatasetFormatError(f"duplicate grid entry for (m, n) = ({m}, {n})")
        seen[(m, n)] = [float(v) for v in row[2:]]
    gm = max(m for m, _ in seen) + 1
    gn = max(n for _, n in seen) + 1
    if len(seen) != gm * gn or any(m < 0 or n < 0 for m, n in seen):
        raise DatasetFormatError(
            f"grid must cover the full rectangle 0..{gm - 1} x 0..{gn - 1}"
        )
    positions = np.empty((gm, gn, 3))
    for (m, n), xyz in seen.items():
        positions[m, n] = xyz
    return DatasetManifest(
        wavelength=float(doc["wavelength"]),
        tx_count=int(doc["tx_count"]),
        rx_count=int(doc["rx_count"]),
        rx_positions=np.asarray(doc["rx_positions"], dtype=float),
        grid_positions=positions,
        format_version=int(version),
    )


def read_dataset(path) -> tuple[CsiGrid, DatasetManifest]:
    """Read a dataset directory; validates dimensions and consistency."""
    base = Path(path)
    manifest = _read_manifest(base / MANIFEST_NAME)
    gm, gn = manifest.grid_positions.shape[:2]
    t_count, r_count = manifest.tx_count, manifest.rx_count
    csi = np.zeros((t_count, r_count, gm, gn), dtype=complex)
    present = np.zeros((t_count, r_count, gm, gn), dtype=bool)
    csv_path = base / CSI_NAME
    try:
        fh = open(csv_path)
    except OSError as exc:
        raise DatasetFormatError(f"cannot read CSI file {csv_path}: {exc}") from exc
    with fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise DatasetFormatError(
                f"{csv_path}: line 1: expected header {CSV_HEADER!r}, got {header!r}"
            )
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise DatasetFormatError(
                    f"{csv_path}: line {lineno}: expected 6 fields, got {len(parts)}"
                )
            try:
                t, r, m, n = (int(p) for p in parts[:4])
                re_v, im_v = float(parts[4]), float(parts[5])
            except ValueError as exc:
                raise DatasetFormatError(
                    f"{csv_path}: line {lineno}: {exc}"
                ) from exc
            if not (0 <= t < t_count and 0 <= r < r_count and 0 <= m < gm and 0 <= n < gn):
                raise DatasetFormatError(
                    f"{csv_path}: line {lineno}: index ({t},{r},{m},{n}) out of range"
                )
            if present[t, r, m, n]:
                raise DatasetFormatError(
                    f"{csv_path}: line {lineno}: duplicate entry ({t},{r},{m},{n})"
                )
            csi[t, r, m, n] = complex(re_v, im_v)
            present[t, r, m, n] = True
    distinct_rx = int(np.any(present, axis=(0, 2, 3)).sum())
    if distinct_rx != r_count:
        raise DatasetFormatError(
            f"manifest rx_count {r_count} != {distinct_rx} distinct rx values in CSV"
        )
    distinct_tx = int(np.any(present, axis=(1, 2, 3)).sum())
    if distinct_tx != t_count:
        raise DatasetFormatError(
            f"manifest tx_count {t_count} != {distinct_tx} distinct tx values in CSV"
        )
    grid = CsiGrid(csi=csi, present=present, positions=manifest.grid_positions)
    return grid, manifest


def generate_synthetic_dataset(
    geometry: ArrayGeometry,
    grid_spec: GridSpec,
    params: LosChannelParams,
    tx_count: int = 4,
    offsets_seed=None,
):
    """Exact LoS CSI over a position grid, optionally with hardware offsets.

    Every tx antenna carries the same ideal LoS channel between the grid
    position and each rx (base-station) antenna; when ``offsets_seed`` is
    given, one phase offset per (tx, rx) pair is injected and the
    ground-truth table returned for closed-loop validation.

    Returns (CsiGrid, DatasetManifest, PhaseOffsetTable or None).
    """
    positions = grid_spec.positions()
    rx_positions = geometry.antenna_positions
    flat = positions.reshape(-1, 3)
    d = np.linalg.norm(flat[None, :, :] - rx_positions[:, None, :], axis=2)
    if np.any(d == 0):
        raise GeometryError("a grid position coincides with an antenna position")
    ideal = params.amplitude(d) * np.exp(1j * los_phase(d, params.wavelength))
    ideal = ideal.reshape(rx_positions.shape[0], *positions.shape[:2])
    csi = np.broadcast_to(ideal, (tx_count, *ideal.shape)).copy()
    grid = CsiGrid(
        csi=csi,
        present=np.ones(csi.shape, dtype=bool),
        positions=positions,
    )
    manifest = DatasetManifest(
        wavelength=params.wavelength,
        tx_count=tx_count,
        rx_count=rx_positions.shape[0],
        rx_positions=rx_positions,
        grid_positions=positions,
    )
    table = None
    if offsets_seed is not None:
        from .calibration import inject_hardware_offsets

        grid, table = inject_hardware_offsets(grid, offsets_seed)
    return grid, manifest, table
