"""Monte Carlo evaluation scenarios.

A scenario repeatedly places UEs, derives channels (synthetic LoS or
sampled from a measured CSI dataset), builds every configured precoder
and records per-user SINR under simultaneous transmission to all users.
Supported setups: full AP coordination, distributed (per-AP) operation,
channel-estimation-error sweeps, and network-centric clustering where
each AP pair serves the users with the best average channel gain and
suppresses inter-cluster interference from location information.

Determinism: every random draw derives from
``numpy.random.default_rng([rng_seed, trial_index, stream])`` with
stream 0 for UE placement and stream 1 for channel-estimation noise, so
results are independent of trial execution order and worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .csidata import read_dataset
from .errors import ConfigError, GeometryError, PlacementError, PrecodingError
from .geometry import (
    AMPLITUDE_MODELS,
    ArrayGeometry,
    Box,
    LosChannelParams,
    los_channel,
    place_ues,
)
from .metrics import (
    ChannelErrorModel,
    LinkRealization,
    empirical_cdf,
    guaranteed_sinr,
    inject_channel_error,
    noise_variance_from_floor,
    sinr_all,
)
from .precoders import (
    ChannelAccess,
    InfoEnvironment,
    PrecoderSpec,
    _array_axis,
    build_precoder,
)

#: Stream ids for per-trial RNG derivation.
_STREAM_PLACEMENT = 0
_STREAM_CHANNEL_ERROR = 1

#: Re-placements allowed in dataset mode when UEs snap to the same cell.
_SNAP_ATTEMPTS = 100

#: Maximum CDF support points stored per precoder in a summary.
CDF_MAX_POINTS = 512

CHANNEL_SOURCES = ("synthetic", "dataset")


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one Monte Carlo experiment.

    nmse_grid holds per-entry channel-error variances; with
    ``nmse_relative`` they are interpreted as target NMSE fractions and
    scaled by the measured mean per-entry channel power. clustering
    lists disjoint AP-index pairs covering all APs.
    """

    geometry: ArrayGeometry
    roi: Box
    k_users: int
    trials: int
    precoders: tuple[PrecoderSpec, ...]
    noise_floor_db: float = -20.0
    min_spacing_m: float = 0.10
    nmse_grid: tuple[float, ...] | None = None
    nmse_relative: bool = False
    clustering: tuple[tuple[int, int], ...] | None = None
    rng_seed: int = 0
    channel_source: str = "synthetic"
    dataset_path: str | None = None
    amplitude_model: str = "free-space"
    reference_gain: float = 1.0
    workers: int = 1

    def los_params(self) -> LosChannelParams:
        return LosChannelParams(
            wavelength=self.geometry.wavelength,
            amplitude_model=self.amplitude_model,
            reference_gain=self.reference_gain,
        )


@dataclass(frozen=True)
class ClusterAssignment:
    """Users mapped to their argmax-mean-gain AP pair (ties: lowest index)."""

    ue_to_pair: np.ndarray
    mean_gains: np.ndarray


@dataclass(frozen=True)
class TrialEntry:
    """Outcome of one (precoder, error-grid point) in one trial."""

    precoder: str
    sigma_e2: float | None
    nmse: float | None
    sinr_db: np.ndarray | None
    failure: str | None


@dataclass(frozen=True)
class TrialResult:
    trial: int
    ue_positions: np.ndarray
    entries: tuple[TrialEntry, ...]


@dataclass(frozen=True)
class PrecoderStats:
    """Aggregate statistics for one (precoder, error-grid point)."""

    precoder: str
    sigma_e2: float | None
    n_trials: int
    n_failed_trials: int
    n_samples: int
    median_db: float | None
    guaranteed_90_db: float | None
    mean_nmse: float | None
    cdf_values: np.ndarray | None
    cdf_probs: np.ndarray | None

    @property
    def failure_rate(self) -> float:
        return self.n_failed_trials / self.n_trials if self.n_trials else 0.0


@dataclass(frozen=True)
class ScenarioSummary:
    config: ScenarioConfig
    noise_var: float
    mean_user_gain: float
    mean_entry_gain: float
    sigma_grid: tuple[float, ...] | None
    stats: tuple[PrecoderStats, ...]
    trial_results: tuple[TrialResult, ...]


def validate_config(config: ScenarioConfig) -> None:
    """Reject invalid configurations before any trial runs."""
    if config.trials < 1:
        raise ConfigError(f"trials must be >= 1, got {config.trials}")
    if config.k_users < 1:
        raise ConfigError(f"k_users must be >= 1, got {config.k_users}")
    if not np.isfinite(config.noise_floor_db):
        raise ConfigError(f"noise_floor_db must be finite, got {config.noise_floor_db}")
    if config.min_spacing_m < 0:
        raise ConfigError(f"min_spacing_m must be >= 0, got {config.min_spacing_m}")
    if config.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {config.workers}")
    if config.rng_seed < 0:
        raise ConfigError(f"rng_seed must be >= 0, got {config.rng_seed}")
    if not config.precoders:
        raise ConfigError("at least one precoder must be configured")
    names = [s.name for s in config.precoders]
    if len(set(names)) != len(names):
        raise ConfigError(f"precoder names must be unique, got {names}")
    if config.channel_source not in CHANNEL_SOURCES:
        raise ConfigError(
            f"channel_source must be one of {CHANNEL_SOURCES}, "
            f"got {config.channel_source!r}"
        )
    if config.channel_source == "dataset" and not config.dataset_path:
        raise ConfigError("dataset channel source requires dataset_path")
    if config.amplitude_model not in AMPLITUDE_MODELS:
        raise ConfigError(
            f"amplitude_model must be one of {AMPLITUDE_MODELS}, "
            f"got {config.amplitude_model!r}"
        )
    if config.nmse_grid is not None:
        if len(config.nmse_grid) == 0:
            raise ConfigError("nmse_grid must not be empty when given")
        if any(v < 0 for v in config.nmse_grid):
            raise ConfigError("nmse_grid values must be >= 0")
    if config.clustering is not None:
        flat = [a for pair in config.clustering for a in pair]
        if any(len(pair) != 2 for pair in config.clustering):
            raise ConfigError("clustering entries must be AP pairs")
        if sorted(flat) != list(range(config.geometry.num_aps)):
            raise ConfigError(
                "clustering pairs must be disjoint and cover all APs exactly once"
            )
    _validate_far_field(config)


def _validate_far_field(config: ScenarioConfig) -> None:
    """Far-field bases need collinear assembly units; check up front."""
    geo = config.geometry
    for spec in config.precoders:
        if spec.base != "ff":
            continue
        if spec.scope == "per-ap":
            units = [geo.ap_indices(a) for a in range(geo.num_aps)]
        elif config.clustering is not None:
            units = [
                np.concatenate([geo.ap_indices(a) for a in pair])
                for pair in config.clustering
            ]
        else:
            units = [np.arange(geo.num_antennas)]
        for unit in units:
            try:
                _array_axis(geo.antenna_positions[unit])
            except GeometryError as exc:
                raise ConfigError(
                    f"precoder {spec.name!r}: far-field base needs collinear "
                    f"antennas per assembly unit: {exc}"
                ) from exc


def cluster_users(gains, pairs, geometry: ArrayGeometry) -> ClusterAssignment:
    """Assign each user to the AP pair with the highest mean channel gain.

    ``gains`` is (K, M) per-antenna channel power |h|^2. Ties resolve to
    the lowest pair index.
    """
    g = np.asarray(gains, dtype=float)
    if g.ndim != 2 or g.shape[1] != geometry.num_antennas:
        raise ValueError(f"gains must be (K, {geometry.num_antennas}), got {g.shape}")
    mean_gains = np.stack(
        [
            g[:, np.concatenate([geometry.ap_indices(a) for a in pair])].mean(axis=1)
            for pair in pairs
        ],
        axis=1,
    )
    return ClusterAssignment(
        ue_to_pair=np.argmax(mean_gains, axis=1), mean_gains=mean_gains
    )


class _SyntheticSampler:
    """Draws exact LoS channels from the scenario geometry."""

    def __init__(self, config: ScenarioConfig):
        self.geometry = config.geometry
        self.params = config.los_params()

    def sample(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h = np.stack(
            [los_channel(self.geometry, p, self.params) for p in positions], axis=1
        )
        return h, positions


class _DatasetSampler:
    """Samples measured CSI at the nearest valid grid cell per UE.

    A valid cell is a grid position with a tx antenna whose CSI is
    present at every rx antenna; the lowest such tx index is used. The
    snapped grid position becomes the UE's location so measured CSI and
    location information agree.
    """

    def __init__(self, config: ScenarioConfig):
        grid, manifest = read_dataset(config.dataset_path)
        geo = config.geometry
        if manifest.rx_count != geo.num_antennas:
            raise ConfigError(
                f"dataset has {manifest.rx_count} rx antennas but the geometry "
                f"has {geo.num_antennas}"
            )
        if not np.allclose(manifest.rx_positions, geo.antenna_positions, atol=1e-9):
            raise ConfigError(
                "dataset rx antenna positions differ from the configured geometry"
            )
        self.grid = grid
        gm, gn = grid.grid_shape
        full = grid.present.all(axis=1)  # (T, GM, GN): every rx present
        cells = []
        for m in range(gm):
            for n in range(gn):
                tx = np.flatnonzero(full[:, m, n])
                if tx.size:
                    cells.append((int(tx[0]), m, n))
        if not cells:
            raise ConfigError("dataset has no grid cell with complete rx coverage")
        self.cells = cells
        self.cell_positions = np.array([grid.positions[m, n] for _, m, n in cells])

    def nearest_cells(self, positions: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(
            positions[:, None, :] - self.cell_positions[None, :, :], axis=2
        )
        return np.argmin(d, axis=1)

    def sample(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        idx = self.nearest_cells(positions)
        columns = []
        for i in idx:
            t, m, n = self.cells[i]
            columns.append(self.grid.csi[t, :, m, n])
        return np.stack(columns, axis=1), self.cell_positions[idx]


def _make_sampler(config: ScenarioConfig):
    if config.channel_source == "dataset":
        return _DatasetSampler(config)
    return _SyntheticSampler(config)


def draw_trial_channels(
    config: ScenarioConfig, trial_index: int, sampler=None
) -> tuple[np.ndarray, np.ndarray]:
    """UE positions and true channel matrix for one trial, (K, 3) and (M, K).

    Dataset mode snaps placements to grid cells and re-places (budgeted)
    until all users occupy distinct cells.
    """
    if sampler is None:
        sampler = _make_sampler(config)
    rng = np.random.default_rng(
        [config.rng_seed, trial_index, _STREAM_PLACEMENT]
    )
    for _ in range(_SNAP_ATTEMPTS):
        placement = place_ues(
            config.roi, config.k_users, config.min_spacing_m, rng
        )
        h, positions = sampler.sample(placement.positions)
        if isinstance(sampler, _DatasetSampler):
            cells = sampler.nearest_cells(placement.positions)
            if len(set(cells.tolist())) != config.k_users:
                continue
        return positions, h
    raise PlacementError(
        f"could not place {config.k_users} users on distinct dataset cells "
        f"after {_SNAP_ATTEMPTS} attempts (trial {trial_index})"
    )


def _trial_environment(
    config: ScenarioConfig, h_known: np.ndarray, h_true: np.ndarray, positions: np.ndarray
) -> InfoEnvironment:
    """Information environment for one trial.

    With clustering, users are assigned to pairs by true-channel mean
    gain; each AP is granted CSI only toward the users its pair serves,
    and each user is served by its pair's antennas only.
    """
    geo = config.geometry
    k = config.k_users
    if config.clustering is None:
        access = ChannelAccess.full(geo, h_known)
        serving = None
    else:
        assignment = cluster_users(np.abs(h_true.T) ** 2, config.clustering, geo)
        granted = np.zeros((geo.num_aps, k), dtype=bool)
        for user in range(k):
            for a in config.clustering[assignment.ue_to_pair[user]]:
                granted[a, user] = True
        access = ChannelAccess(geo, h_known, granted)
        serving = tuple(
            tuple(config.clustering[assignment.ue_to_pair[user]]) for user in range(k)
        )
    return InfoEnvironment(
        geometry=geo,
        num_users=k,
        csi=access,
        ue_positions=positions,
        serving=serving,
    )


def run_trial(
    config: ScenarioConfig,
    trial_index: int,
    noise_var: float | None = None,
    sigma_points: tuple[float | None, ...] = (None,),
    sampler=None,
) -> TrialResult:
    """Place UEs, build every configured precoder, evaluate SINR.

    ``sigma_points`` lists per-entry channel-error variances (None means
    perfect CSI). Precoders consume the perturbed channel estimates but
    SINR is always evaluated against the true channel. A precoder whose
    construction fails (rank deficiency, full suppression) contributes a
    failure marker instead of samples.

    ``noise_var`` defaults to the config's noise floor applied to the
    mean received power over all of the config's trials (the same value
    :func:`run_scenario` uses); pass it explicitly to avoid that pre-pass
    when calling in a loop.
    """
    if sampler is None:
        sampler = _make_sampler(config)
    if noise_var is None:
        noise_var = noise_variance_from_floor(
            config.noise_floor_db, mean_channel_gain(config, sampler)
        )
    positions, h_true = draw_trial_channels(config, trial_index, sampler)
    entries: list[TrialEntry] = []
    error_seed = [config.rng_seed, trial_index, _STREAM_CHANNEL_ERROR]
    for sigma in sigma_points:
        if sigma is None:
            h_known, realized = h_true, None
        else:
            h_known, realized = inject_channel_error(
                h_true, ChannelErrorModel(sigma_e2=sigma, rng_seed=error_seed)
            )
        env = _trial_environment(config, h_known, h_true, positions)
        for spec in config.precoders:
            try:
                w = np.stack(
                    [
                        build_precoder(spec, user, env, noise_var=noise_var)
                        for user in range(config.k_users)
                    ],
                    axis=1,
                )
            except PrecodingError as exc:
                entries.append(
                    TrialEntry(
                        precoder=spec.name,
                        sigma_e2=sigma,
                        nmse=realized,
                        sinr_db=None,
                        failure=f"{type(exc).__name__}: {exc}",
                    )
                )
                continue
            _, db = sinr_all(LinkRealization(h_true, w, noise_var))
            entries.append(
                TrialEntry(
                    precoder=spec.name,
                    sigma_e2=sigma,
                    nmse=realized,
                    sinr_db=db,
                    failure=None,
                )
            )
    return TrialResult(trial=trial_index, ue_positions=positions, entries=tuple(entries))


def mean_channel_gain(config: ScenarioConfig, sampler=None) -> float:
    """Mean ||h_k||^2 over all users and trials (the noise-floor reference)."""
    if sampler is None:
        sampler = _make_sampler(config)
    total = 0.0
    for t in range(config.trials):
        _, h = draw_trial_channels(config, t, sampler)
        total += float(np.sum(np.abs(h) ** 2))
    return total / (config.trials * config.k_users)


def _decimate_cdf(values: np.ndarray, probs: np.ndarray, max_points: int = CDF_MAX_POINTS):
    if values.size <= max_points:
        return values, probs
    idx = np.unique(np.round(np.linspace(0, values.size - 1, max_points)).astype(int))
    return values[idx], probs[idx]


def _aggregate(
    config: ScenarioConfig,
    results: list[TrialResult],
    sigma_points: tuple[float | None, ...],
) -> tuple[PrecoderStats, ...]:
    stats = []
    for sigma in sigma_points:
        for spec in config.precoders:
            samples: list[np.ndarray] = []
            nmses: list[float] = []
            failed = 0
            for res in results:
                for e in res.entries:
                    if e.precoder != spec.name or e.sigma_e2 != sigma:
                        continue
                    if e.failure is not None:
                        failed += 1
                    else:
                        samples.append(e.sinr_db)
                    if e.nmse is not None:
                        nmses.append(e.nmse)
            if samples:
                flat = np.concatenate(samples)
                values, probs = empirical_cdf(flat)
                values, probs = _decimate_cdf(values, probs)
                median = float(np.median(flat))
                p10 = guaranteed_sinr(flat, 0.9)
                n_samples = int(flat.size)
            else:
                values = probs = None
                median = p10 = None
                n_samples = 0
            stats.append(
                PrecoderStats(
                    precoder=spec.name,
                    sigma_e2=sigma,
                    n_trials=len(results),
                    n_failed_trials=failed,
                    n_samples=n_samples,
                    median_db=median,
                    guaranteed_90_db=p10,
                    mean_nmse=float(np.mean(nmses)) if nmses else None,
                    cdf_values=values,
                    cdf_probs=probs,
                )
            )
    return tuple(stats)


_WORKER_STATE: dict = {}


def _init_worker(config, noise_var, sigma_points):
    _WORKER_STATE["config"] = config
    _WORKER_STATE["noise_var"] = noise_var
    _WORKER_STATE["sigma_points"] = sigma_points
    _WORKER_STATE["sampler"] = _make_sampler(config)


def _worker_trial(trial_index: int) -> TrialResult:
    s = _WORKER_STATE
    return run_trial(
        s["config"], trial_index, s["noise_var"], s["sigma_points"], s["sampler"]
    )


def run_scenario(config: ScenarioConfig) -> ScenarioSummary:
    """Execute all trials and aggregate per-precoder statistics.

    The noise variance is fixed once per configuration: the configured
    floor (dB) relative to the mean MRT received power over the same
    trial channels. Results are bit-identical for a given seed
    regardless of ``workers``.
    """
    validate_config(config)
    sampler = _make_sampler(config)
    mean_user_gain = mean_channel_gain(config, sampler)
    noise_var = noise_variance_from_floor(config.noise_floor_db, mean_user_gain)
    mean_entry_gain = mean_user_gain / config.geometry.num_antennas

    if config.nmse_grid is None:
        sigma_points: tuple[float | None, ...] = (None,)
        sigma_grid = None
    else:
        scale = mean_entry_gain if config.nmse_relative else 1.0
        sigma_grid = tuple(float(v) * scale for v in config.nmse_grid)
        sigma_points = sigma_grid

    if config.workers == 1:
        results = [
            run_trial(config, t, noise_var, sigma_points, sampler)
            for t in range(config.trials)
        ]
    else:
        chunk = max(1, config.trials // (config.workers * 8))
        with ProcessPoolExecutor(
            max_workers=config.workers,
            initializer=_init_worker,
            initargs=(config, noise_var, sigma_points),
        ) as pool:
            results = list(
                pool.map(_worker_trial, range(config.trials), chunksize=chunk)
            )

    return ScenarioSummary(
        config=config,
        noise_var=noise_var,
        mean_user_gain=mean_user_gain,
        mean_entry_gain=mean_entry_gain,
        sigma_grid=sigma_grid,
        stats=_aggregate(config, results, sigma_points),
        trial_results=tuple(results),
    )
