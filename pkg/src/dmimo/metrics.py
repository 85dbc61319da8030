"""Link-quality evaluation: SINR, channel-estimation error, statistics.

The receive model is y_k = h_k^H w_k s_k + interference + noise with unit
symbol power, so user k sees

    SINR_k = |h_k^H w_k|^2 / (sum_{l != k} |h_k^H w_l|^2 + noise_var).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoDataError


@dataclass(frozen=True)
class LinkRealization:
    """One channel/precoder pair under a fixed noise variance.

    channel and precoding are both (M, K); column k of ``precoding`` is
    the unit-norm vector serving user k. noise_var is linear power.
    """

    channel: np.ndarray
    precoding: np.ndarray
    noise_var: float

    def __post_init__(self):
        h = np.asarray(self.channel, dtype=complex)
        w = np.asarray(self.precoding, dtype=complex)
        if h.ndim != 2 or w.ndim != 2 or h.shape != w.shape:
            raise ValueError(
                f"channel {h.shape} and precoding {w.shape} must be equal 2D shapes"
            )
        if not self.noise_var > 0:
            raise ValueError(f"noise_var must be > 0, got {self.noise_var}")
        object.__setattr__(self, "channel", h)
        object.__setattr__(self, "precoding", w)

    @property
    def num_users(self) -> int:
        return self.channel.shape[1]


def sinr_all(link: LinkRealization) -> tuple[np.ndarray, np.ndarray]:
    """SINR of every user, returned as (linear, dB) arrays of shape (K,).

    A user whose precoder delivers exactly zero signal gets -inf dB.
    """
    cross = np.abs(link.channel.conj().T @ link.precoding) ** 2
    signal = np.diag(cross).copy()
    interference = cross.sum(axis=1) - signal
    linear = signal / (interference + link.noise_var)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(linear)
    return linear, db


def sinr(link: LinkRealization, k: int) -> tuple[float, float]:
    """SINR of user k as (linear, dB)."""
    if not 0 <= k < link.num_users:
        raise ValueError(f"user index {k} out of range")
    linear, db = sinr_all(link)
    return float(linear[k]), float(db[k])


@dataclass(frozen=True)
class ChannelErrorModel:
    """i.i.d. circularly symmetric complex Gaussian estimation error."""

    sigma_e2: float
    rng_seed: object = 0

    def __post_init__(self):
        if not self.sigma_e2 >= 0:
            raise ValueError(f"sigma_e2 must be >= 0, got {self.sigma_e2}")


def inject_channel_error(
    h_matrix, model: ChannelErrorModel
) -> tuple[np.ndarray, float]:
    """Return (H + E, realized NMSE) with E ~ CN(0, sigma_e2) per entry.

    The realized NMSE is sum|E|^2 / sum|H|^2 (mean squared error over
    mean squared channel magnitude). Deterministic
    per seed; for a fixed seed the draws at different sigma_e2 are scaled
    versions of the same unit-variance noise, so error sweeps vary
    smoothly.
    """
    h = np.asarray(h_matrix, dtype=complex)
    rng = np.random.default_rng(model.rng_seed)
    unit = (
        rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
    ) / np.sqrt(2.0)
    error = np.sqrt(model.sigma_e2) * unit
    denom = float(np.sum(np.abs(h) ** 2))
    num = float(np.sum(np.abs(error) ** 2))
    nmse = 0.0 if num == 0 else num / denom
    return h + error, nmse


def guaranteed_sinr(samples, coverage: float) -> float:
    """SINR level exceeded in the given fraction of samples (dB in, dB out).

    coverage 0.9 returns the empirical 10th percentile with linear
    interpolation between order statistics.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise NoDataError("guaranteed_sinr needs at least one sample")
    if not 0.0 < coverage < 1.0:
        raise ValueError(f"coverage must be in (0, 1), got {coverage}")
    return float(np.quantile(x, 1.0 - coverage, method="linear"))


def empirical_cdf(samples) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF support points: sorted values and probabilities i/N."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise NoDataError("empirical_cdf needs at least one sample")
    values = np.sort(x)
    probs = np.arange(1, x.size + 1, dtype=float) / x.size
    return values, probs


def noise_variance_from_floor(noise_floor_db: float, mean_user_gain: float) -> float:
    """Noise variance at a floor relative to the average received power.

    The reference power is the mean over users and trials of the MRT
    received power |h_k^H mrt(h_k)|^2 = ||h_k||^2, supplied here as
    ``mean_user_gain``.
    """
    if not np.isfinite(noise_floor_db):
        raise ValueError(f"noise floor must be finite, got {noise_floor_db}")
    if not mean_user_gain > 0:
        raise ValueError(f"mean_user_gain must be > 0, got {mean_user_gain}")
    return 10.0 ** (noise_floor_db / 10.0) * mean_user_gain
