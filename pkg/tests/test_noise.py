"""Tests for the exact mode sampler: distributional identities and streams."""

import numpy as np
import pytest

from torusmc.noise import (
    HeatModeState,
    NoiseSpec,
    TimeGrid,
    WaveModeState,
    _wave_increment_chol,
    _wave_rotation,
    derive_mode_stream,
    half_lattice_points,
    heat_mode_step,
    heat_stationary_init,
    sample_lin_path,
    subsample_trajectory,
    wave_mode_step,
)
from torusmc.oracles import heat_cov_kappa, wave_cov_sigma
from torusmc.spectral import hermitian_defect


class ZeroStream:
    """Stands in for a Generator when the deterministic part is under test."""

    def standard_normal(self, shape=None):
        return np.zeros(shape) if shape is not None else 0.0


def qmatrix(br, h, alpha):
    l11, l21, l22 = _wave_increment_chol(np.array([br]), h, alpha)
    L = np.array([[l11[0], 0.0], [l21[0], l22[0]]])
    return L @ L.T


class TestStreams:
    def test_deterministic(self):
        a = derive_mode_stream(99, 3, (2, -5), "wave").standard_normal(16)
        b = derive_mode_stream(99, 3, (2, -5), "wave").standard_normal(16)
        assert np.array_equal(a, b)

    def test_distinct_modes_independent(self):
        a = derive_mode_stream(7, 0, (1, 0), "wave").standard_normal(100_000)
        b = derive_mode_stream(7, 0, (0, 1), "wave").standard_normal(100_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.02

    def test_distinct_replicas_independent(self):
        a = derive_mode_stream(7, 0, (3, 2), "heat").standard_normal(100_000)
        b = derive_mode_stream(7, 1, (3, 2), "heat").standard_normal(100_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.02

    def test_kinds_give_distinct_streams(self):
        a = derive_mode_stream(7, 0, (1, 0), "wave").standard_normal(8)
        b = derive_mode_stream(7, 0, (1, 0), "heat").standard_normal(8)
        assert not np.array_equal(a, b)

    def test_half_lattice(self):
        hx, hy = half_lattice_points(3)
        pts = set(zip(hx.tolist(), hy.tolist()))
        assert (0, 0) not in pts
        assert all((x > 0) or (x == 0 and y > 0) for x, y in pts)
        # half lattice + negations + origin covers the disk
        full = {(x, y) for x in range(-3, 4) for y in range(-3, 4) if x * x + y * y <= 9}
        assert pts | {(-x, -y) for x, y in pts} | {(0, 0)} == full


class TestWaveStep:
    def test_zero_step(self):
        st = WaveModeState(1.2 + 0.3j, -0.7j)
        out = wave_mode_step(st, (2, 1), 0.3, 0.0, ZeroStream())
        assert out.a == st.a and out.adot == st.adot

    def test_one_step_variance_is_sigma(self):
        # Var(a(h)) from rest equals the closed-form covariance at (h, h):
        # q11 must reproduce sigma_n(h,h) for every mode and step
        rng = np.random.default_rng(0)
        for _ in range(25):
            br = rng.uniform(1.0, 40.0)
            h, alpha = rng.uniform(0.01, 2.0), rng.uniform(0.1, 0.45)
            q = qmatrix(br, h, alpha)
            n_fake = (np.sqrt(br**2 - 1.0), 0.0)  # jbracket(n_fake) == br
            assert np.isclose(q[0, 0], wave_cov_sigma(n_fake, h, h, alpha), rtol=1e-12)

    def test_two_time_covariance_algebraic(self):
        # E[a(t2) conj a(t1)] = [R(t2-t1) Q(t1)]_{00} must equal sigma(t1,t2)
        rng = np.random.default_rng(1)
        for _ in range(25):
            br = rng.uniform(1.0, 30.0)
            alpha = rng.uniform(0.1, 0.45)
            t1 = rng.uniform(0.05, 1.0)
            t2 = t1 + rng.uniform(0.0, 1.0)
            Q = qmatrix(br, t1, alpha)
            c, sdivb, msb, c2 = _wave_rotation(np.array([br]), t2 - t1)
            cross = c[0] * Q[0, 0] + sdivb[0] * Q[1, 0]
            n_fake = (np.sqrt(br**2 - 1.0), 0.0)
            assert np.isclose(cross, wave_cov_sigma(n_fake, t1, t2, alpha), rtol=1e-10)

    def test_chapman_kolmogorov(self):
        # Q(h) = R(h/2) Q(h/2) R(h/2)^T + Q(h/2): exact step composition
        for br, h, alpha in [(1.0, 0.25, 0.3), (13.2, 0.125, 0.45), (40.0, 0.01, 0.2)]:
            c, sdivb, msb, _ = _wave_rotation(np.array([br]), h / 2)
            R = np.array([[c[0], sdivb[0]], [msb[0], c[0]]])
            lhs = qmatrix(br, h, alpha)
            rhs = R @ qmatrix(br, h / 2, alpha) @ R.T + qmatrix(br, h / 2, alpha)
            assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-16)

    def test_small_step_series_guard(self):
        # u - sin(u) cancels catastrophically in double precision near u=0
        br, h, alpha = 1.0, 1e-6, 0.3
        q = qmatrix(br, h, alpha)
        u = np.longdouble(2.0 * h * br)
        ref = float(u**3 / 6 - u**5 / 120)
        assert q[0, 0] > 0
        assert np.isclose(q[0, 0], ref / 4.0, rtol=1e-5)

    def test_mc_two_time_covariance(self):
        n, alpha = (2, 1), 0.35
        R = 10_000
        a1 = np.empty(R, dtype=complex)
        a2 = np.empty(R, dtype=complex)
        for r in range(R):
            g = derive_mode_stream(11, r, n, "wave")
            st = WaveModeState(0.0, 0.0)
            for _ in range(3):
                st = wave_mode_step(st, n, alpha, 0.1, g)
            a1[r] = st.a
            for _ in range(2):
                st = wave_mode_step(st, n, alpha, 0.1, g)
            a2[r] = st.a
        prod = (a1 * np.conj(a2)).real
        se = prod.std(ddof=1) / np.sqrt(R)
        target = wave_cov_sigma(n, 0.3, 0.5, alpha)
        assert abs(prod.mean() - target) <= 4.0 * se


class TestHeatStep:
    def test_deterministic_decay(self):
        out = heat_mode_step(HeatModeState(1.0), (0, 0), 0.4, 1.0, ZeroStream())
        assert np.isclose(out.a, np.exp(-1.0))

    def test_long_step_reaches_stationarity(self):
        # increment variance tends to the invariant variance as h -> inf
        br = np.sqrt(1.0 + 4.0)
        alpha = 0.3
        var = br ** (2 * alpha - 2.0) * (1.0 - np.exp(-2 * 50.0 * br**2)) / 2.0
        assert np.isclose(var, br ** (2 * alpha - 2.0) / 2.0, rtol=1e-15)

    def test_chapman_kolmogorov(self):
        for br, h, alpha in [(1.0, 0.5, 0.3), (5.0, 0.125, 0.45)]:
            d = np.exp(-h / 2 * br * br)
            v = br ** (2 * alpha - 2.0) * (1.0 - d * d) / 2.0
            d_full = np.exp(-h * br * br)
            v_full = br ** (2 * alpha - 2.0) * (1.0 - d_full * d_full) / 2.0
            assert np.isclose(v_full, d * d * v + v, rtol=1e-14)

    def test_mc_lag_covariance(self):
        n, alpha, tau = (1, 1), 0.5, 0.3
        R = 10_000
        prods = np.empty(R)
        for r in range(R):
            g = derive_mode_stream(21, r, n, "heat")
            st = heat_stationary_init(n, alpha, g)
            a0 = st.a
            st = heat_mode_step(st, n, alpha, tau, g)
            prods[r] = (st.a * np.conj(a0)).real
        se = prods.std(ddof=1) / np.sqrt(R)
        assert abs(prods.mean() - heat_cov_kappa(n, tau, 0.0, alpha)) <= 4.0 * se


class TestStationaryInit:
    def test_variances(self):
        R = 10_000
        draws0 = np.array(
            [heat_stationary_init((0, 0), 0.4, derive_mode_stream(5, r, (0, 0), "heat")).a for r in range(R)]
        )
        assert abs(draws0.imag).max() == 0.0
        se = (np.abs(draws0) ** 2).std(ddof=1) / np.sqrt(R)
        assert abs((np.abs(draws0) ** 2).mean() - 0.5) <= 4 * se
        se_m = draws0.real.std(ddof=1) / np.sqrt(R)
        assert abs(draws0.real.mean()) <= 4 * se_m

        draws3 = np.array(
            [heat_stationary_init((3, 0), 0.5, derive_mode_stream(6, r, (3, 0), "heat")).a for r in range(R)]
        )
        target = 1.0 / (2.0 * np.sqrt(10.0))
        v = np.abs(draws3) ** 2
        assert abs(v.mean() - target) <= 4 * v.std(ddof=1) / np.sqrt(R)


class TestLinPath:
    def test_wave_starts_at_zero(self):
        traj = sample_lin_path(NoiseSpec(0.3, 8, "wave", 42), TimeGrid(0.0, 0.125, 5))
        assert np.all(traj.fields[0].coeffs == 0)
        assert np.all(traj.vel[0].coeffs == 0)
        assert traj.kind == "lin" and traj.flow == "wave"

    def test_wave_requires_zero_start(self):
        with pytest.raises(ValueError):
            sample_lin_path(NoiseSpec(0.3, 4, "wave", 1), TimeGrid(-1.0, 0.1, 3))

    def test_hermitian_fields(self):
        for kind in ("wave", "heat"):
            traj = sample_lin_path(NoiseSpec(0.4, 6, kind, 7), TimeGrid(0.0, 0.2, 4))
            for f in traj.fields:
                assert hermitian_defect(f) == 0.0

    def test_deterministic(self):
        spec = NoiseSpec(0.3, 6, "heat", 123, replica=5)
        grid = TimeGrid(0.0, 0.25, 4)
        t1 = sample_lin_path(spec, grid)
        t2 = sample_lin_path(spec, grid)
        for f, g in zip(t1.fields, t2.fields):
            assert np.array_equal(f.coeffs, g.coeffs)

    def test_band_coupling(self):
        # larger band reuses exactly the same per-mode draws on shared modes
        grid = TimeGrid(0.0, 0.25, 4)
        small = sample_lin_path(NoiseSpec(0.3, 4, "wave", 9), grid)
        big = sample_lin_path(NoiseSpec(0.3, 8, "wave", 9), grid)
        off = 8 - 4
        for f, g in zip(small.fields, big.fields):
            window = g.coeffs[off : off + 9, off : off + 9]
            mask = f.coeffs != 0
            assert np.array_equal(f.coeffs[mask], window[mask])

    def test_mc_variance_matches_oracles(self):
        R = 1500
        grid = TimeGrid(0.0, 0.25, 3)
        probes = [(0, 0), (1, 2), (3, 0)]
        for kind, oracle in (("wave", wave_cov_sigma), ("heat", heat_cov_kappa)):
            samples = {n: np.empty(R, dtype=complex) for n in probes}
            for r in range(R):
                traj = sample_lin_path(NoiseSpec(0.35, 4, kind, 777, replica=r), grid)
                for n in probes:
                    samples[n][r] = traj.fields[2].coeff(n)
            for n in probes:
                v = np.abs(samples[n]) ** 2
                se = v.std(ddof=1) / np.sqrt(R)
                assert abs(v.mean() - oracle(n, 0.5, 0.5, 0.35)) <= 4.0 * se, (kind, n)

    def test_subsample(self):
        traj = sample_lin_path(NoiseSpec(0.3, 4, "wave", 3), TimeGrid(0.0, 0.125, 9))
        sub = subsample_trajectory(traj, 2)
        assert sub.grid.h == 0.25 and sub.grid.M == 5
        assert sub.fields[1] is traj.fields[2]
        assert sub.vel[1] is traj.vel[2]
        with pytest.raises(ValueError):
            subsample_trajectory(traj, 3)
