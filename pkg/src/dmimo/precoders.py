"""Precoding vector constructions.

Three families are provided:
  * steering-based weights computed from location only (far-field angle
    steering and near-field distance steering),
  * CSI-based linear precoders (MRT, ZF, RZF),
  * the orthogonalization generalization that suppresses interference by
    projecting a base vector onto the complement of a suppression
    subspace, enabling hybrids such as ``mrt_nf`` (MRT base, near-field
    suppression) and ``zf_nf`` (CSI suppression where CSI is held,
    near-field suppression elsewhere).

Naming scheme: ``a_b`` is a base vector of type ``a`` orthogonalized
against vectors of type ``b``; a leading ``r`` selects the regularized
projection; a ``dis_`` prefix restricts the projection to each AP's own
antennas and CSI.

All returned precoding vectors have unit Euclidean norm (per-user power
normalization); matrices are per-column normalized unless requested
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    ConfigError,
    DegenerateChannelError,
    FullySuppressedError,
    GeometryError,
    InformationError,
    RankDeficiencyError,
)
from .geometry import ArrayGeometry, los_phase

#: Residual norm below which a projected vector counts as fully suppressed.
FULL_SUPPRESSION_TOL = 1e-12

#: Maximum distance (m) of an antenna from the fitted array line for the
#: far-field steering angle to be considered well defined.
COLLINEARITY_TOL = 1e-6

BASES = ("mrt", "nf", "ff")
SUPPRESSIONS = ("none", "csi", "nf", "csi+nf")
SCOPES = ("centralized", "per-ap")


def _as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=complex)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    return v


def _as_matrix(x) -> np.ndarray:
    m = np.asarray(x, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    return m


def numerical_rank(a: np.ndarray) -> int:
    """Rank via singular values, threshold eps * sigma_max * max(shape)."""
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    tol = np.finfo(float).eps * s.max() * max(a.shape)
    return int(np.sum(s > tol))


def normalize_columns(w: np.ndarray) -> np.ndarray:
    """Scale every column to unit Euclidean norm."""
    norms = np.linalg.norm(w, axis=0)
    if np.any(norms == 0):
        raise DegenerateChannelError("cannot normalize a zero column")
    return w / norms


def phase_align(v: np.ndarray) -> np.ndarray:
    """Rotate a vector so its first nonzero element is real positive.

    Removes the unit-modulus scalar ambiguity before comparing precoding
    vectors.
    """
    v = _as_vector(v)
    nz = np.flatnonzero(np.abs(v) > 0)
    if nz.size == 0:
        return v.copy()
    return v * np.exp(-1j * np.angle(v[nz[0]]))


def far_field_weights(
    geometry: ArrayGeometry, theta: float, reference_antenna: int = 0
) -> np.ndarray:
    """Delay-and-sum steering weights for angle ``theta`` off broadside.

    Element i is exp(-j*2*pi*d_i*sin(theta)/lambda) with d_i the distance
    from antenna i to the reference antenna, normalized to a unit vector.
    Meaningful for (near-)collinear antennas; |theta| must be <= pi/2
    (pi/2 is endfire).
    """
    if not abs(theta) <= np.pi / 2:
        raise ValueError(f"|theta| must be <= pi/2, got {theta}")
    ref = geometry.antenna_positions[reference_antenna]
    d = np.linalg.norm(geometry.antenna_positions - ref, axis=1)
    w = np.exp(-2j * np.pi * d * np.sin(theta) / geometry.wavelength)
    return w / np.linalg.norm(w)


def near_field_weights(
    geometry: ArrayGeometry, ue_position, antenna_subset=None
) -> np.ndarray:
    """Beamfocusing weights exp(-j*2*pi*d_i/lambda) toward a point.

    d_i is the exact distance from antenna i to the intended receiver;
    the weights are returned over ``antenna_subset`` (default all
    antennas), normalized to unit norm.
    """
    if antenna_subset is None:
        positions = geometry.antenna_positions
    else:
        positions = geometry.antenna_positions[np.asarray(antenna_subset, dtype=int)]
    p = np.asarray(ue_position, dtype=float).reshape(3)
    d = np.linalg.norm(positions - p, axis=1)
    if np.any(d == 0):
        raise GeometryError("UE position coincides with an antenna position")
    w = np.exp(1j * los_phase(d, geometry.wavelength))
    return w / np.linalg.norm(w)


def mrt(h) -> np.ndarray:
    """Maximum ratio transmission: the unit vector along the channel."""
    h = _as_vector(h)
    n = np.linalg.norm(h)
    if n == 0:
        raise DegenerateChannelError("MRT undefined for a zero channel")
    return h / n


def zf(h_matrix, normalize: bool = True) -> np.ndarray:
    """Zero-forcing precoding matrix H (H^H H)^{-1}.

    Requires K <= M and full column rank; column k then satisfies
    h_l^H w_k = delta_{lk} before normalization. With ``normalize``
    (default) every column is scaled to unit norm.
    """
    h = _as_matrix(h_matrix)
    m, k = h.shape
    if numerical_rank(h) < k:
        raise RankDeficiencyError(
            f"channel matrix ({m}x{k}) is rank deficient; use rzf with alpha > 0"
        )
    gram = h.conj().T @ h
    w = h @ np.linalg.solve(gram, np.eye(k, dtype=complex))
    return normalize_columns(w) if normalize else w


def rzf(h_matrix, alpha: float, normalize: bool = True) -> np.ndarray:
    """Regularized zero-forcing H (H^H H + alpha*I)^{-1}.

    alpha is usually the noise variance. alpha = 0 reduces to ZF and
    then requires full column rank.
    """
    h = _as_matrix(h_matrix)
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    m, k = h.shape
    if alpha == 0 and numerical_rank(h) < k:
        raise RankDeficiencyError(
            f"alpha = 0 with a rank-deficient channel matrix ({m}x{k})"
        )
    gram = h.conj().T @ h + alpha * np.eye(k, dtype=complex)
    w = h @ np.linalg.solve(gram, np.eye(k, dtype=complex))
    return normalize_columns(w) if normalize else w


def orthogonalize(w, v_matrix) -> np.ndarray:
    """Project ``w`` onto the orthogonal complement of span(V).

    Returns w - V (V^H V)^{-1} V^H w, unnormalized. V must have full
    column rank. The result is zero exactly when w lies in span(V); a
    residual norm below ``FULL_SUPPRESSION_TOL`` (absolute, intended for
    roughly unit-scale inputs) raises FullySuppressedError.
    """
    w = _as_vector(w)
    v = _as_matrix(v_matrix)
    if v.shape[1] == 0:
        return w.copy()
    if v.shape[0] != w.size:
        raise ValueError(f"V has {v.shape[0]} rows, w has {w.size} elements")
    if numerical_rank(v) < v.shape[1]:
        raise RankDeficiencyError(
            f"suppression matrix ({v.shape[0]}x{v.shape[1]}) is rank deficient; "
            "use the regularized projection"
        )
    gram = v.conj().T @ v
    residual = w - v @ np.linalg.solve(gram, v.conj().T @ w)
    if np.linalg.norm(residual) < FULL_SUPPRESSION_TOL:
        raise FullySuppressedError(
            "base vector lies in the suppression subspace"
        )
    return residual


def orthogonalize_regularized(w, v_matrix, alpha: float) -> np.ndarray:
    """Regularized projection w - V (V^H V + alpha*I)^{-1} V^H w.

    Defined for any rank of V; alpha must be strictly positive. Unlike
    :func:`orthogonalize` the result depends on the column scaling of V.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    w = _as_vector(w)
    v = _as_matrix(v_matrix)
    if v.shape[1] == 0:
        return w.copy()
    if v.shape[0] != w.size:
        raise ValueError(f"V has {v.shape[0]} rows, w has {w.size} elements")
    gram = v.conj().T @ v + alpha * np.eye(v.shape[1], dtype=complex)
    return w - v @ np.linalg.solve(gram, v.conj().T @ w)


def _array_axis(positions: np.ndarray) -> np.ndarray:
    """Unit direction of a collinear antenna set (GeometryError otherwise)."""
    if positions.shape[0] < 2:
        raise GeometryError("array axis needs at least two antennas")
    centered = positions - positions.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axis = vt[0]
    off_line = centered - np.outer(centered @ axis, axis)
    if np.linalg.norm(off_line, axis=1).max() > COLLINEARITY_TOL:
        raise GeometryError("antenna subset is not collinear")
    return axis


def steering_angle(
    geometry: ArrayGeometry, ue_position, antenna_subset=None
) -> tuple[float, int]:
    """Far-field steering angle toward a UE for a collinear antenna set.

    Returns (theta, reference_antenna) such that
    ``far_field_weights(geometry, theta, reference_antenna)`` combines
    the LoS channel coherently in the far field. The reference antenna is
    the end of the array; theta is measured from broadside with the sign
    matching the exp(-j*2*pi*d*sin(theta)/lambda) weight convention.
    """
    if antenna_subset is None:
        subset = np.arange(geometry.num_antennas)
    else:
        subset = np.asarray(antenna_subset, dtype=int)
    positions = geometry.antenna_positions[subset]
    axis = _array_axis(positions)
    proj = (positions - positions.mean(axis=0)) @ axis
    ref_local = int(np.argmin(proj))
    to_ue = np.asarray(ue_position, dtype=float).reshape(3) - positions[ref_local]
    dist = np.linalg.norm(to_ue)
    if dist == 0:
        raise GeometryError("UE position coincides with the reference antenna")
    sin_geom = float(np.clip(axis @ to_ue / dist, -1.0, 1.0))
    if abs(sin_geom) == 1.0:
        raise GeometryError("UE lies on the array axis; steering angle undefined")
    return -float(np.arcsin(sin_geom)), int(subset[ref_local])


class InfoRequirements(NamedTuple):
    """What a precoder needs, mirroring the per-algorithm requirement table."""

    csi_intended: bool
    csi_unintended: bool
    location_intended: bool
    location_unintended: bool


@dataclass(frozen=True)
class PrecoderSpec:
    """Declarative description of one precoding algorithm instance.

    base         : "mrt" (CSI), "nf" (near-field from location) or "ff"
                   (far-field from location; collinear assembly only)
    suppression  : source of the suppression vector per unintended user:
                   "none", "csi" (users whose CSI the transmitter holds),
                   "nf" (near-field vectors from locations) or "csi+nf"
                   (CSI where held, near-field otherwise)
    regularized  : use the regularized projection
    alpha        : regularization weight; None resolves to the noise
                   variance at build time
    scope        : "centralized" assembles jointly over all serving
                   antennas; "per-ap" repeats the assembly per AP using
                   only that AP's antennas and CSI
    """

    name: str
    base: str
    suppression: str = "none"
    regularized: bool = False
    alpha: float | None = None
    scope: str = "centralized"

    def __post_init__(self):
        if self.base not in BASES:
            raise ConfigError(f"base must be one of {BASES}, got {self.base!r}")
        if self.suppression not in SUPPRESSIONS:
            raise ConfigError(
                f"suppression must be one of {SUPPRESSIONS}, got {self.suppression!r}"
            )
        if self.scope not in SCOPES:
            raise ConfigError(f"scope must be one of {SCOPES}, got {self.scope!r}")
        if self.alpha is not None:
            if not self.regularized:
                raise ConfigError("alpha is only meaningful for regularized specs")
            if not self.alpha >= 0:
                raise ConfigError(f"alpha must be >= 0, got {self.alpha}")

    def requirements(self) -> InfoRequirements:
        return InfoRequirements(
            csi_intended=self.base == "mrt",
            csi_unintended=self.suppression in ("csi", "csi+nf"),
            location_intended=self.base in ("nf", "ff"),
            location_unintended=self.suppression in ("nf", "csi+nf"),
        )


_NAME_TABLE = {
    "nf": dict(base="nf"),
    "ff": dict(base="ff"),
    "mrt": dict(base="mrt"),
    "zf": dict(base="mrt", suppression="csi"),
    "rzf": dict(base="mrt", suppression="csi", regularized=True),
    "nf_nf": dict(base="nf", suppression="nf"),
    "mrt_nf": dict(base="mrt", suppression="nf"),
    "rmrt_nf": dict(base="mrt", suppression="nf", regularized=True),
    "zf_nf": dict(base="mrt", suppression="csi+nf"),
    "rzf_nf": dict(base="mrt", suppression="csi+nf", regularized=True),
}


def parse_precoder_name(name: str) -> PrecoderSpec:
    """Build a PrecoderSpec from a canonical algorithm name.

    Recognized names: nf, ff, mrt, zf, rzf, nf_nf, mrt_nf, rmrt_nf,
    zf_nf, rzf_nf, each optionally prefixed with ``dis_`` for per-AP
    (distributed) assembly.
    """
    canonical = name.strip().lower()
    token = canonical
    scope = "centralized"
    if token.startswith("dis_"):
        scope = "per-ap"
        token = token[4:]
    if token not in _NAME_TABLE:
        valid = ", ".join(sorted(_NAME_TABLE))
        raise ConfigError(
            f"unknown precoder name {name!r}; expected one of: {valid} "
            "(optionally prefixed with 'dis_')"
        )
    return PrecoderSpec(name=canonical, scope=scope, **_NAME_TABLE[token])


@dataclass(frozen=True)
class ChannelAccess:
    """CSI blocks the transmitter holds, mediated per (AP, user).

    ``granted[ap, user]`` gates access to the rows of ``channel``
    belonging to that AP; reading an ungranted block raises
    InformationError so information constraints hold by construction.
    """

    geometry: ArrayGeometry
    channel: np.ndarray
    granted: np.ndarray

    def __post_init__(self):
        h = _as_matrix(self.channel)
        object.__setattr__(self, "channel", h)
        g = np.asarray(self.granted, dtype=bool)
        if h.shape[0] != self.geometry.num_antennas:
            raise ConfigError(
                f"channel has {h.shape[0]} rows, geometry has "
                f"{self.geometry.num_antennas} antennas"
            )
        if g.shape != (self.geometry.num_aps, h.shape[1]):
            raise ConfigError(
                f"granted mask must have shape (num_aps, K) = "
                f"({self.geometry.num_aps}, {h.shape[1]}), got {g.shape}"
            )
        object.__setattr__(self, "granted", g)

    @classmethod
    def full(cls, geometry: ArrayGeometry, channel) -> "ChannelAccess":
        h = _as_matrix(channel)
        return cls(geometry, h, np.ones((geometry.num_aps, h.shape[1]), dtype=bool))

    @property
    def num_users(self) -> int:
        return self.channel.shape[1]

    def has(self, ap: int, user: int) -> bool:
        return bool(self.granted[ap, user])

    def block(self, ap: int, user: int) -> np.ndarray:
        if not self.granted[ap, user]:
            raise InformationError(f"CSI for AP {ap}, user {user} was not granted")
        return self.channel[self.geometry.ap_indices(ap), user]


@dataclass(frozen=True)
class InfoEnvironment:
    """Everything a transmitter may consult when building precoders.

    csi/ue_positions are None when that category of information is not
    granted at all. ``serving`` lists the AP indices that transmit to
    each user (None means all APs serve everyone).
    """

    geometry: ArrayGeometry
    num_users: int
    csi: ChannelAccess | None = None
    ue_positions: np.ndarray | None = None
    serving: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if self.ue_positions is not None:
            p = np.asarray(self.ue_positions, dtype=float)
            if p.shape != (self.num_users, 3):
                raise ConfigError(
                    f"ue_positions must have shape ({self.num_users}, 3), got {p.shape}"
                )
            object.__setattr__(self, "ue_positions", p)
        if self.csi is not None and self.csi.num_users != self.num_users:
            raise ConfigError("CSI access and environment disagree on K")
        if self.serving is not None and len(self.serving) != self.num_users:
            raise ConfigError("serving must list AP indices for every user")

    def serving_aps(self, user: int) -> tuple[int, ...]:
        if self.serving is None:
            return tuple(range(self.geometry.num_aps))
        return tuple(self.serving[user])

    def position(self, user: int) -> np.ndarray:
        if self.ue_positions is None:
            raise InformationError("UE locations were not granted")
        return self.ue_positions[user]


def _check_requirements(spec: PrecoderSpec, env: InfoEnvironment) -> None:
    req = spec.requirements()
    if (req.csi_intended or req.csi_unintended) and env.csi is None:
        raise InformationError(
            f"precoder {spec.name!r} requires CSI but none was granted"
        )
    if (req.location_intended or req.location_unintended) and env.ue_positions is None:
        raise InformationError(
            f"precoder {spec.name!r} requires UE locations but none were granted"
        )


def _nf_phasors(geometry: ArrayGeometry, antennas: np.ndarray, point) -> np.ndarray:
    p = np.asarray(point, dtype=float).reshape(3)
    d = np.linalg.norm(geometry.antenna_positions[antennas] - p, axis=1)
    if np.any(d == 0):
        raise GeometryError("UE position coincides with an antenna position")
    return np.exp(1j * los_phase(d, geometry.wavelength))


def _ff_phasors(
    geometry: ArrayGeometry, antennas: np.ndarray, point
) -> np.ndarray:
    theta, ref = steering_angle(geometry, point, antenna_subset=antennas)
    ref_pos = geometry.antenna_positions[ref]
    d = np.linalg.norm(geometry.antenna_positions[antennas] - ref_pos, axis=1)
    return np.exp(-2j * np.pi * d * np.sin(theta) / geometry.wavelength)


def _unit_base(
    spec: PrecoderSpec, k: int, env: InfoEnvironment, unit: tuple[int, ...]
) -> np.ndarray:
    antennas = np.concatenate([env.geometry.ap_indices(a) for a in unit])
    if spec.base == "mrt":
        return np.concatenate([env.csi.block(a, k) for a in unit])
    if spec.base == "nf":
        return _nf_phasors(env.geometry, antennas, env.position(k))
    return _ff_phasors(env.geometry, antennas, env.position(k))


def _unit_suppression(
    spec: PrecoderSpec, k: int, env: InfoEnvironment, unit: tuple[int, ...]
) -> tuple[np.ndarray, bool]:
    """Suppression matrix for one assembly unit.

    Returns (V, mixed) where ``mixed`` flags V containing both CSI and
    near-field columns. CSI columns keep their natural (channel) scale,
    near-field columns are unit norm; when a regularized projection mixes
    the two sources, all columns are normalized to unit norm so alpha
    acts on a single scale.
    """
    antennas = np.concatenate([env.geometry.ap_indices(a) for a in unit])
    columns: list[np.ndarray] = []
    sources: list[str] = []
    for l in range(env.num_users):
        if l == k or spec.suppression == "none":
            continue
        csi_held = spec.suppression in ("csi", "csi+nf") and all(
            env.csi is not None and env.csi.has(a, l) for a in unit
        )
        if csi_held:
            columns.append(np.concatenate([env.csi.block(a, l) for a in unit]))
            sources.append("csi")
        elif spec.suppression in ("nf", "csi+nf"):
            col = _nf_phasors(env.geometry, antennas, env.position(l))
            columns.append(col / np.linalg.norm(col))
            sources.append("nf")
    if not columns:
        return np.zeros((antennas.size, 0), dtype=complex), False
    v = np.stack(columns, axis=1)
    mixed = len(set(sources)) > 1
    return v, mixed


def build_precoder(
    spec: PrecoderSpec,
    k: int,
    env: InfoEnvironment,
    noise_var: float | None = None,
) -> np.ndarray:
    """Assemble the precoding vector for user ``k`` under ``spec``.

    The base vector (MRT from CSI, or a steering vector from the UE
    location) is orthogonalized against the suppression subspace built
    from the other users' CSI columns and/or near-field vectors. With
    scope "per-ap" the projection is repeated independently over each
    serving AP's antennas using only that AP's CSI. The per-unit results
    are concatenated over the serving antennas and the full vector is
    normalized to unit norm; entries outside the serving antennas are
    zero.

    ``noise_var`` supplies the default regularization weight when the
    spec is regularized with ``alpha=None``.
    """
    if not 0 <= k < env.num_users:
        raise ValueError(f"user index {k} out of range for K={env.num_users}")
    _check_requirements(spec, env)
    alpha = None
    if spec.regularized:
        alpha = spec.alpha if spec.alpha is not None else noise_var
        if alpha is None:
            raise ConfigError(
                f"regularized precoder {spec.name!r} needs alpha or noise_var"
            )

    aps = env.serving_aps(k)
    units: list[tuple[int, ...]]
    if spec.scope == "centralized":
        units = [tuple(aps)]
    else:
        units = [(a,) for a in aps]

    bases = []
    for unit in units:
        try:
            bases.append(_unit_base(spec, k, env, unit))
        except (GeometryError, InformationError):
            raise
    total = np.sqrt(sum(float(np.sum(np.abs(b) ** 2)) for b in bases))
    if total == 0:
        raise DegenerateChannelError(
            f"precoder {spec.name!r}, user {k}: zero base vector"
        )

    w = np.zeros(env.geometry.num_antennas, dtype=complex)
    for unit, base in zip(units, bases):
        antennas = np.concatenate([env.geometry.ap_indices(a) for a in unit])
        base = base / total
        v, mixed = _unit_suppression(spec, k, env, unit)
        label = "centralized" if spec.scope == "centralized" else f"AP {unit[0]}"
        try:
            if spec.regularized:
                if mixed and v.shape[1] > 0:
                    v = normalize_columns(v)
                w[antennas] = orthogonalize_regularized(base, v, alpha)
            else:
                w[antennas] = orthogonalize(base, v)
        except (RankDeficiencyError, FullySuppressedError) as exc:
            raise type(exc)(
                f"precoder {spec.name!r}, user {k}, {label}: {exc}"
            ) from exc

    norm = np.linalg.norm(w)
    if norm < FULL_SUPPRESSION_TOL:
        raise FullySuppressedError(
            f"precoder {spec.name!r}, user {k}: all components suppressed"
        )
    return w / norm
