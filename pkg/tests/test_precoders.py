import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crandn
from dmimo import (
    ArrayGeometry,
    ChannelAccess,
    InfoEnvironment,
    LosChannelParams,
    PrecoderSpec,
    build_precoder,
    far_field_weights,
    los_channel,
    mrt,
    near_field_weights,
    orthogonalize,
    orthogonalize_regularized,
    parse_precoder_name,
    perimeter_geometry,
    phase_align,
    rzf,
    steering_angle,
    zf,
)
from dmimo.errors import (
    ConfigError,
    DegenerateChannelError,
    FullySuppressedError,
    GeometryError,
    InformationError,
    RankDeficiencyError,
)


def ula(n: int, lam: float = 0.115) -> ArrayGeometry:
    positions = [[i * lam / 2, 0.0, 0.0] for i in range(n)]
    return ArrayGeometry(positions, (tuple(range(n)),), lam)


def assert_same_direction(a, b, tol=1e-10):
    a = phase_align(a / np.linalg.norm(a))
    b = phase_align(b / np.linalg.norm(b))
    assert np.linalg.norm(a - b) < tol


class TestFarField:
    def test_broadside_uniform(self):
        w = far_field_weights(ula(8), 0.0)
        np.testing.assert_allclose(w, w[0], atol=1e-15)
        assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-12)

    def test_endfire_antiphase(self):
        # two antennas half a wavelength apart, steered along the array
        w = far_field_weights(ula(2), np.pi / 2)
        assert abs(abs(np.angle(w[1] / w[0])) - np.pi) < 1e-12

    def test_phase_ramp(self):
        # 8-element half-wavelength array at 30 degrees: ramp of -pi/2 per element
        w = far_field_weights(ula(8), np.pi / 6)
        steps = np.angle(w[1:] / w[:-1])
        np.testing.assert_allclose(steps, -np.pi / 2, atol=1e-12)

    def test_angle_domain(self):
        with pytest.raises(ValueError):
            far_field_weights(ula(4), np.pi / 2 + 0.01)

    def test_far_field_approaches_near_field(self):
        geo = ula(8)
        ue = np.array([1.0, 400.0, 0.0])  # far compared to the 0.4 m aperture
        theta, ref = steering_angle(geo, ue)
        w_ff = far_field_weights(geo, theta, ref)
        w_nf = near_field_weights(geo, ue)
        assert abs(np.vdot(w_ff, w_nf)) > 1 - 1e-5

    def test_steering_angle_non_collinear(self):
        geo = perimeter_geometry()
        with pytest.raises(GeometryError):
            steering_angle(geo, [3.0, 3.0, 0.0])


class TestNearField:
    def test_equidistant_uniform(self):
        lam = 0.5
        geo = ArrayGeometry(
            [[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]], ((0, 1, 2, 3),), lam
        )
        w = near_field_weights(geo, [0, 0, 0])
        np.testing.assert_allclose(w, w[0], atol=1e-12)

    def test_single_antenna_subset(self):
        geo = ula(4)
        w = near_field_weights(geo, [0.3, 2.0, 0.0], antenna_subset=[2])
        assert w.shape == (1,)
        assert abs(abs(w[0]) - 1.0) < 1e-12

    def test_matched_filter_gain(self, geometry):
        # conjugate phases cancel: |<h, w>| = sqrt(M) for a unit-magnitude channel
        params = LosChannelParams(wavelength=geometry.wavelength, amplitude_model="unit")
        ue = [2.4, 3.3, 0.0]
        h = los_channel(geometry, ue, params)
        w = near_field_weights(geometry, ue)
        assert abs(np.vdot(h, w)) == pytest.approx(
            np.sqrt(geometry.num_antennas), abs=1e-9
        )

    def test_zero_distance(self):
        geo = ula(4)
        with pytest.raises(GeometryError):
            near_field_weights(geo, geo.antenna_positions[1])


class TestMrt:
    def test_basis_vector(self):
        e1 = np.zeros(4, dtype=complex)
        e1[0] = 1.0
        np.testing.assert_allclose(mrt(e1), e1)

    def test_positive_scale_invariance(self, rng):
        h = crandn(rng, 6)
        np.testing.assert_allclose(mrt(h), mrt(3.7 * h), atol=1e-14)

    def test_cauchy_schwarz_equality(self, rng):
        for _ in range(20):
            h = crandn(rng, 16)
            assert abs(np.vdot(h, mrt(h))) == pytest.approx(
                np.linalg.norm(h), abs=1e-12
            )

    def test_zero_channel(self):
        with pytest.raises(DegenerateChannelError):
            mrt(np.zeros(4, dtype=complex))


class TestZf:
    def test_single_user_equals_mrt(self, rng):
        h = crandn(rng, 8, 1)
        np.testing.assert_allclose(zf(h)[:, 0], mrt(h[:, 0]), atol=1e-12)

    def test_orthogonal_columns_equal_mrt(self, rng):
        h = np.zeros((8, 3), dtype=complex)
        h[0, 0] = 2.0 + 1j
        h[3, 1] = -1.5j
        h[6, 2] = 0.7
        w = zf(h)
        for k in range(3):
            assert_same_direction(w[:, k], mrt(h[:, k]), tol=1e-12)

    def test_interference_cancellation(self, rng):
        h = crandn(rng, 8, 3)
        w = zf(h, normalize=False)
        cross = h.conj().T @ w
        off = cross - np.eye(3)
        assert np.abs(off).max() < 1e-10

    def test_unit_columns(self, rng):
        w = zf(crandn(rng, 8, 3))
        np.testing.assert_allclose(np.linalg.norm(w, axis=0), 1.0, atol=1e-10)

    def test_rank_deficient(self, rng):
        h = crandn(rng, 8, 2)
        h = np.concatenate([h, h[:, :1]], axis=1)  # duplicated column
        with pytest.raises(RankDeficiencyError):
            zf(h)

    def test_more_users_than_antennas(self, rng):
        with pytest.raises(RankDeficiencyError):
            zf(crandn(rng, 4, 6))


class TestRzf:
    def test_small_alpha_matches_zf(self, rng):
        h = crandn(rng, 8, 3)
        np.testing.assert_allclose(rzf(h, 1e-12), zf(h), atol=1e-6)

    def test_alpha_zero_full_rank_is_zf(self, rng):
        h = crandn(rng, 8, 3)
        np.testing.assert_allclose(rzf(h, 0.0), zf(h), atol=1e-12)

    def test_large_alpha_approaches_mrt(self, rng):
        h = crandn(rng, 8, 3)
        w = rzf(h, 1e9)
        for k in range(3):
            assert_same_direction(w[:, k], mrt(h[:, k]), tol=1e-6)

    def test_overloaded_system(self, rng):
        # more users than antennas: rank deficiency forces regularization
        h = crandn(rng, 8, 10)
        sigma_n2 = 0.05
        w = rzf(h, sigma_n2)
        assert np.all(np.isfinite(w))
        with pytest.raises(RankDeficiencyError):
            rzf(h, 0.0)

    def test_negative_alpha(self, rng):
        with pytest.raises(ValueError):
            rzf(crandn(rng, 4, 2), -0.1)

    def test_interference_signal_tradeoff(self, rng):
        # larger alpha never decreases signal power nor the total
        # interference created, on the grid {0, sigma, 10 sigma}
        for _ in range(50):
            h = crandn(rng, 8, 4)
            sigma_n2 = 0.05
            prev_sig = prev_intf = None
            for alpha in (0.0, sigma_n2, 10 * sigma_n2):
                w = rzf(h, alpha)
                cross = np.abs(h.conj().T @ w) ** 2
                sig = np.diag(cross)
                intf = cross.sum(axis=1) - sig
                if prev_sig is not None:
                    assert np.all(sig >= prev_sig - 1e-9)
                    assert np.all(intf >= prev_intf - 1e-9)
                prev_sig, prev_intf = sig, intf


class TestOrthogonalize:
    def test_empty_subspace(self, rng):
        w = crandn(rng, 6)
        out = orthogonalize(w, np.zeros((6, 0), dtype=complex))
        np.testing.assert_array_equal(out, w)

    def test_self_projection_fully_suppressed(self, rng):
        w = mrt(crandn(rng, 6))
        with pytest.raises(FullySuppressedError):
            orthogonalize(w, w[:, None])

    def test_matches_zf_column(self, rng):
        # MRT seeded, suppressed against the other users' channels:
        # equal to the normalized ZF column up to a unit-modulus scalar
        h = crandn(rng, 16, 5)
        w_zf = zf(h)
        for k in range(5):
            v = np.delete(h, k, axis=1)
            w = orthogonalize(mrt(h[:, k]), v)
            assert_same_direction(w, w_zf[:, k], tol=1e-10)

    def test_rank_deficient_subspace(self, rng):
        v = crandn(rng, 8, 2)
        v = np.concatenate([v, v[:, :1]], axis=1)
        with pytest.raises(RankDeficiencyError):
            orthogonalize(crandn(rng, 8), v)

    @settings(max_examples=100, deadline=None)
    @given(data=st.data(), m=st.integers(3, 12), l=st.integers(1, 2))
    def test_residual_orthogonal_property(self, data, m, l):
        seed = data.draw(st.integers(0, 2**32 - 1))
        rng = np.random.default_rng(seed)
        v = crandn(rng, m, min(l, m - 1))
        w = crandn(rng, m)
        out = orthogonalize(w, v)
        assert np.abs(v.conj().T @ out).max() < 1e-10

    def test_column_scale_invariance(self, rng):
        w = crandn(rng, 10)
        v = crandn(rng, 10, 3)
        scales = np.array([2.0, -0.3 + 1.1j, 1e3j])
        a = orthogonalize(w, v)
        b = orthogonalize(w, v * scales)
        assert np.linalg.norm(a - b) < 1e-10


class TestOrthogonalizeRegularized:
    def test_large_alpha_returns_w(self, rng):
        w = crandn(rng, 8)
        v = crandn(rng, 8, 3)
        out = orthogonalize_regularized(w, v, 1e12)
        np.testing.assert_allclose(out, w, atol=1e-9)

    def test_small_alpha_matches_orthogonalize(self, rng):
        w = crandn(rng, 8)
        v = crandn(rng, 8, 3)
        out = orthogonalize_regularized(w, v, 1e-10)
        np.testing.assert_allclose(out, orthogonalize(w, v), atol=1e-6)

    def test_duplicated_column_analytic_oracle(self, rng):
        # V = [v, v]: closed-form 2x2 inverse of (V^H V + alpha I)
        v = crandn(rng, 8)
        w = crandn(rng, 8)
        alpha = 0.01
        out = orthogonalize_regularized(w, np.stack([v, v], axis=1), alpha)
        assert np.all(np.isfinite(out))
        g = float(np.vdot(v, v).real)
        p = float(np.vdot(v, w).real) + 1j * float(np.vdot(v, w).imag)
        det = (g + alpha) ** 2 - g * g
        inv = np.array([[g + alpha, -g], [-g, g + alpha]]) / det
        coeff = inv @ np.array([p, p])
        expected = w - np.stack([v, v], axis=1) @ coeff
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_alpha_must_be_positive(self, rng):
        with pytest.raises(ValueError):
            orthogonalize_regularized(crandn(rng, 4), crandn(rng, 4, 2), 0.0)

    def test_raw_csi_columns_reproduce_rzf(self, rng):
        # with unnormalized channel columns the regularized projection of
        # h_k yields exactly the direction of the RZF column
        h = crandn(rng, 16, 5)
        alpha = 0.3
        w_rzf = rzf(h, alpha)
        for k in range(5):
            v = np.delete(h, k, axis=1)
            w = orthogonalize_regularized(h[:, k], v, alpha)
            assert_same_direction(w, w_rzf[:, k], tol=1e-10)


class TestPhaseAlign:
    def test_first_nonzero_real_positive(self, rng):
        v = crandn(rng, 5)
        v[0] = 0.0
        out = phase_align(v)
        assert abs(out[1].imag) < 1e-15 and out[1].real > 0

    def test_zero_vector(self):
        v = np.zeros(3, dtype=complex)
        np.testing.assert_array_equal(phase_align(v), v)


class TestPrecoderSpec:
    # rows of the information-requirement table:
    # (name, csi_intended, csi_unintended, loc_intended, loc_unintended)
    TABLE = [
        ("nf", False, False, True, False),
        ("mrt", True, False, False, False),
        ("zf", True, True, False, False),
        ("rzf", True, True, False, False),
        ("dis_zf", True, True, False, False),
        ("dis_rzf", True, True, False, False),
        ("nf_nf", False, False, True, True),
        ("mrt_nf", True, False, False, True),
        ("rmrt_nf", True, False, False, True),
        ("dis_mrt_nf", True, False, False, True),
        ("dis_rmrt_nf", True, False, False, True),
        ("zf_nf", True, True, False, True),
        ("rzf_nf", True, True, False, True),
    ]

    @pytest.mark.parametrize("name,csi_i,csi_u,loc_i,loc_u", TABLE)
    def test_information_requirements(self, name, csi_i, csi_u, loc_i, loc_u):
        req = parse_precoder_name(name).requirements()
        assert req.csi_intended == csi_i
        assert req.csi_unintended == csi_u
        assert req.location_intended == loc_i
        assert req.location_unintended == loc_u

    def test_dis_prefix_sets_scope(self):
        assert parse_precoder_name("dis_zf").scope == "per-ap"
        assert parse_precoder_name("zf").scope == "centralized"

    def test_unknown_name(self):
        with pytest.raises(ConfigError):
            parse_precoder_name("mmse")

    def test_alpha_requires_regularized(self):
        with pytest.raises(ConfigError):
            PrecoderSpec(name="x", base="mrt", suppression="csi", alpha=0.1)

    def test_invalid_enum_values(self):
        with pytest.raises(ConfigError):
            PrecoderSpec(name="x", base="mmse")
        with pytest.raises(ConfigError):
            PrecoderSpec(name="x", base="mrt", suppression="zf")
        with pytest.raises(ConfigError):
            PrecoderSpec(name="x", base="mrt", scope="global")


def make_env(geometry, h, positions, csi=True, locations=True, granted=None, serving=None):
    access = None
    if csi:
        if granted is None:
            access = ChannelAccess.full(geometry, h)
        else:
            access = ChannelAccess(geometry, h, granted)
    return InfoEnvironment(
        geometry=geometry,
        num_users=h.shape[1],
        csi=access,
        ue_positions=positions if locations else None,
        serving=serving,
    )


@pytest.fixture
def scenario_env(geometry, rng):
    params = LosChannelParams(wavelength=geometry.wavelength)
    positions = np.column_stack(
        [rng.uniform(1.5, 4.5, 5), rng.uniform(1.5, 4.5, 5), np.zeros(5)]
    )
    h = np.stack([los_channel(geometry, p, params) for p in positions], axis=1)
    return geometry, h, positions


class TestBuildPrecoder:
    def test_mrt_single_user(self, geometry, rng):
        params = LosChannelParams(wavelength=geometry.wavelength)
        pos = np.array([[3.0, 2.0, 0.0]])
        h = los_channel(geometry, pos[0], params)[:, None]
        env = make_env(geometry, h, pos)
        w = build_precoder(parse_precoder_name("mrt"), 0, env)
        np.testing.assert_allclose(w, mrt(h[:, 0]), atol=1e-12)

    def test_zf_spec_equals_zf_columns(self, scenario_env):
        geometry, h, positions = scenario_env
        env = make_env(geometry, h, positions)
        w_zf = zf(h)
        spec = parse_precoder_name("zf")
        for k in range(5):
            w = build_precoder(spec, k, env)
            assert_same_direction(w, w_zf[:, k], tol=1e-9)

    def test_rzf_spec_equals_rzf_columns(self, scenario_env):
        # pure-CSI regularized suppression keeps raw channel columns, so
        # the build route reproduces the classical RZF matrix exactly
        geometry, h, positions = scenario_env
        env = make_env(geometry, h, positions)
        alpha = 1e-2 * float(np.mean(np.abs(h) ** 2)) * geometry.num_antennas
        w_rzf = rzf(h, alpha)
        spec = parse_precoder_name("rzf")
        for k in range(5):
            w = build_precoder(spec, k, env, noise_var=alpha)
            assert_same_direction(w, w_rzf[:, k], tol=1e-9)

    def test_nf_nf_needs_no_csi(self, scenario_env):
        geometry, h, positions = scenario_env
        env = make_env(geometry, h, positions, csi=False)
        w = build_precoder(parse_precoder_name("nf_nf"), 2, env)
        assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-10)

    def test_nf_nf_orthogonal_to_other_steering_vectors(self, scenario_env):
        geometry, h, positions = scenario_env
        env = make_env(geometry, h, positions, csi=False)
        w = build_precoder(parse_precoder_name("nf_nf"), 0, env)
        for l in range(1, 5):
            v = near_field_weights(geometry, positions[l])
            assert abs(np.vdot(v, w)) < 1e-9

    def test_requirements_enforced(self, scenario_env):
        geometry, h, positions = scenario_env
        no_csi = make_env(geometry, h, positions, csi=False)
        with pytest.raises(InformationError):
            build_precoder(parse_precoder_name("zf"), 0, no_csi)
        no_loc = make_env(geometry, h, positions, locations=False)
        with pytest.raises(InformationError):
            build_precoder(parse_precoder_name("nf_nf"), 0, no_loc)
        with pytest.raises(InformationError):
            build_precoder(parse_precoder_name("mrt_nf"), 0, no_loc)

    def test_block_access_gated(self, geometry, rng):
        h = crandn(rng, 64, 3)
        granted = np.zeros((8, 3), dtype=bool)
        granted[:, 0] = True
        access = ChannelAccess(geometry, h, granted)
        assert access.has(0, 0) and not access.has(0, 1)
        with pytest.raises(InformationError):
            access.block(0, 1)

    def test_unit_norm_all_specs(self, scenario_env):
        geometry, h, positions = scenario_env
        env = make_env(geometry, h, positions)
        noise = 1e-2 * float(np.mean(np.sum(np.abs(h) ** 2, axis=0)))
        for name in ["nf", "mrt", "zf", "rzf", "nf_nf", "mrt_nf", "rmrt_nf",
                     "zf_nf", "rzf_nf", "dis_zf", "dis_rzf", "dis_mrt_nf",
                     "dis_rmrt_nf", "dis_nf_nf"]:
            w = build_precoder(parse_precoder_name(name), 1, env, noise_var=noise)
            assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-10), name

    def test_per_ap_rank_deficiency_at_k10(self, geometry, rng):
        params = LosChannelParams(wavelength=geometry.wavelength)
        positions = np.column_stack(
            [rng.uniform(1.5, 4.5, 10), rng.uniform(1.5, 4.5, 10), np.zeros(10)]
        )
        h = np.stack([los_channel(geometry, p, params) for p in positions], axis=1)
        env = make_env(geometry, h, positions)
        # 9 suppression columns per 8-antenna AP: always rank deficient
        with pytest.raises(RankDeficiencyError) as err:
            build_precoder(parse_precoder_name("dis_mrt_nf"), 0, env)
        assert "user 0" in str(err.value) and "AP" in str(err.value)
        w = build_precoder(
            parse_precoder_name("dis_rmrt_nf"), 0, env, noise_var=1e-6
        )
        assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-10)

    def test_distributed_restricts_subspace_per_ap(self, scenario_env):
        geometry, h, positions = scenario_env
        env = make_env(geometry, h, positions)
        w = build_precoder(parse_precoder_name("dis_zf"), 0, env)
        # per-AP blocks are orthogonal to the other users' per-AP channels
        for a in range(geometry.num_aps):
            idx = geometry.ap_indices(a)
            for l in range(1, 5):
                assert abs(np.vdot(h[idx, l], w[idx])) < 1e-9

    def test_serving_subset_zeroes_other_antennas(self, scenario_env):
        geometry, h, positions = scenario_env
        serving = tuple((0, 1) for _ in range(5))
        granted = np.zeros((8, 5), dtype=bool)
        granted[0] = granted[1] = True
        env = make_env(geometry, h, positions, granted=granted, serving=serving)
        w = build_precoder(parse_precoder_name("zf"), 0, env)
        outside = np.concatenate([geometry.ap_indices(a) for a in range(2, 8)])
        np.testing.assert_array_equal(w[outside], 0.0)
        assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-10)

    def test_hybrid_mixes_csi_and_nf(self, scenario_env):
        # serving pair holds CSI for users {0, 1} only; zf_nf must null
        # the co-served channel and the out-of-cluster steering vectors
        geometry, h, positions = scenario_env
        serving = tuple((0, 1) for _ in range(5))
        granted = np.zeros((8, 5), dtype=bool)
        granted[0:2, 0:2] = True
        env = make_env(geometry, h, positions, granted=granted, serving=serving)
        w = build_precoder(parse_precoder_name("zf_nf"), 0, env)
        pair_idx = np.concatenate([geometry.ap_indices(0), geometry.ap_indices(1)])
        # co-served user suppressed through its actual channel
        assert abs(np.vdot(h[pair_idx, 1], w[pair_idx])) < 1e-9
        # out-of-cluster users suppressed through steering vectors
        for l in range(2, 5):
            v = near_field_weights(geometry, positions[l], antenna_subset=pair_idx)
            assert abs(np.vdot(v, w[pair_idx])) < 1e-9

    def test_ff_base_on_linear_array(self):
        lam = 0.115
        geo = ula(8, lam)
        positions = np.array([[0.2, 5.0, 0.0], [0.3, 7.0, 0.0]])
        env = InfoEnvironment(
            geometry=geo, num_users=2, csi=None, ue_positions=positions
        )
        w = build_precoder(parse_precoder_name("ff"), 0, env)
        assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-12)
        # beam gain toward the intended user beats an off-target direction
        h_on = near_field_weights(geo, positions[0])
        h_off = near_field_weights(geo, [3.0, 4.0, 0.0])
        assert abs(np.vdot(h_on, w)) > abs(np.vdot(h_off, w))

    def test_regularized_needs_alpha(self, scenario_env):
        geometry, h, positions = scenario_env
        env = make_env(geometry, h, positions)
        with pytest.raises(ConfigError):
            build_precoder(parse_precoder_name("rzf"), 0, env, noise_var=None)
