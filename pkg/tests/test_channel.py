import math

import numpy as np
import pytest
from oracles import subpath_sum_entry

from ris_imager.channel import (
    build_channels,
    build_sensing_matrices,
    calibrate_noise,
    freespace_subpath,
    load_codebook_csv,
    random_codebook,
    save_codebook_csv,
    synthesize_measurements,
)
from ris_imager.geometry import PlanarArray, VoxelGrid, voxel_centers


def small_scenario(rng, n_max=27, m_max=16):
    counts = tuple(rng.integers(1, 4, size=3))
    grid = VoxelGrid(center=(12 + rng.random() * 5, 0, 0), counts=counts, voxel_size=1.5)
    rows = int(rng.integers(1, 5))
    cols = int(rng.integers(1, 5))
    ris = PlanarArray(center=(0, 0, 0), rows=rows, cols=cols, spacing=0.5)
    ap = np.array([4.0, 5.0, 6.0]) + rng.random(3)
    ue = np.array([[8.0, 8.0, 2.0]]) + rng.random((int(rng.integers(1, 4)), 3)) * 3.0
    return grid, ris, ap, ue


class TestFreespace:
    def test_one_wavelength(self):
        h = freespace_subpath(1.0)
        assert abs(h) == pytest.approx(1.0 / math.sqrt(4.0 * math.pi), rel=1e-12)
        assert h.imag == pytest.approx(0.0, abs=1e-12)
        assert h.real > 0

    def test_half_wavelength_phase_flip(self):
        h = freespace_subpath(0.5)
        assert h.real < 0
        assert h.imag == pytest.approx(0.0, abs=1e-12)

    def test_inverse_distance_spreading(self):
        assert abs(freespace_subpath(2.0)) == pytest.approx(abs(freespace_subpath(1.0)) / 2.0)

    def test_rejects_colocated(self):
        with pytest.raises(ValueError):
            freespace_subpath(0.0)


class TestBuildChannels:
    def test_single_voxel_single_element(self):
        grid = VoxelGrid(center=(10, 0, 0), counts=(1, 1, 1), voxel_size=1.0)
        ris = PlanarArray(center=(0, 0, 0), rows=1, cols=1, spacing=0.5)
        ch = build_channels(grid, ris, ap_position=(2, 3, 4), ue_positions=[(5, 5, 5)])
        assert ch.H_vs.shape == (1, 1)
        assert abs(ch.H_vs[0, 0]) == pytest.approx(1.0 / (math.sqrt(4 * math.pi) * 10.0))

    def test_static_parts_shared_across_views(self):
        grid = VoxelGrid(center=(10, 0, 0), counts=(2, 2, 1), voxel_size=1.0)
        ris = PlanarArray(center=(0, 0, 0), rows=2, cols=2, spacing=0.5)
        ue = [(5, 5, 5), (6, 5, 5), (7, 5, 5)]
        ch = build_channels(grid, ris, (2, 3, 4), ue)
        assert ch.h_uv.shape == (3, 4)
        # h_uv varies across views; H_vs and h_sa are position-independent
        assert not np.allclose(ch.h_uv[0], ch.h_uv[1])
        ch2 = build_channels(grid, ris, (2, 3, 4), [(9, 9, 9)])
        np.testing.assert_array_equal(ch.H_vs, ch2.H_vs)
        np.testing.assert_array_equal(ch.h_sa, ch2.h_sa)

    def test_spot_entries_match_scalar_oracle(self):
        grid = VoxelGrid(center=(10, 1, -1), counts=(3, 2, 2), voxel_size=1.0)
        ris = PlanarArray(center=(0, 0, 0), rows=3, cols=2, spacing=0.5)
        ch = build_channels(grid, ris, (2, 3, 4), [(5, 5, 5)])
        voxels = voxel_centers(grid)
        elements = ris.element_positions()
        rng = np.random.default_rng(0)
        for _ in range(10):
            n = int(rng.integers(0, len(voxels)))
            m = int(rng.integers(0, len(elements)))
            d = np.linalg.norm(voxels[n] - elements[m])
            expected = np.exp(-2j * np.pi * d) / (math.sqrt(4 * math.pi) * d)
            assert ch.H_vs[n, m] == pytest.approx(expected, rel=1e-12)


class TestCodebook:
    def test_unit_modulus_continuous(self):
        cb = random_codebook(8, 16, seed=1)
        np.testing.assert_allclose(np.abs(cb.omega), 1.0, atol=1e-12)

    def test_discrete_alphabet(self):
        cb = random_codebook(6, 10, mode="discrete", bits=1, seed=2)
        np.testing.assert_allclose(np.abs(cb.omega), 1.0, atol=1e-12)
        # 1-bit phases are {0, pi}: entries are +/- 1
        assert np.all(np.isin(np.round(cb.omega.real).astype(int), [-1, 1]))
        np.testing.assert_allclose(cb.omega.imag, 0.0, atol=1e-12)

    def test_seeded_reproducibility(self):
        a = random_codebook(4, 5, seed=9).omega
        b = random_codebook(4, 5, seed=9).omega
        np.testing.assert_array_equal(a, b)

    def test_csv_round_trip(self, tmp_path):
        cb = random_codebook(3, 7, seed=4)
        path = tmp_path / "codebook.csv"
        save_codebook_csv(cb, path)
        loaded = load_codebook_csv(path)
        np.testing.assert_allclose(loaded.omega, cb.omega, atol=1e-12)


class TestSensingMatrices:
    def test_factorization_matches_subpath_oracle(self):
        # Entrywise agreement with the direct per-subpath sum on random small scenarios.
        rng = np.random.default_rng(123)
        for _ in range(5):
            grid, ris, ap, ue = small_scenario(rng)
            ch = build_channels(grid, ris, ap, ue)
            cb = random_codebook(int(rng.integers(1, 6)), ris.n_elements, seed=rng)
            sm = build_sensing_matrices(ch, cb)
            voxels = voxel_centers(grid)
            elements = ris.element_positions()
            phases = cb.phases()
            t = int(rng.integers(0, len(ue)))
            k = int(rng.integers(0, cb.k))
            n = int(rng.integers(0, grid.n_voxels))
            expected = subpath_sum_entry(ue[t], voxels, elements, ap, phases[k], n)
            got = sm.a[t][k, n]
            assert abs(got - expected) <= 1e-10 * max(abs(expected), np.abs(sm.a[t]).max())

    def test_a_equals_omega_times_b(self):
        rng = np.random.default_rng(5)
        grid, ris, ap, ue = small_scenario(rng)
        ch = build_channels(grid, ris, ap, ue)
        cb = random_codebook(4, ris.n_elements, seed=6)
        sm = build_sensing_matrices(ch, cb)
        for t in range(sm.n_views):
            np.testing.assert_allclose(sm.a[t], cb.omega @ sm.b(t), rtol=1e-12)

    def test_zero_gain_zeroes_everything(self):
        grid = VoxelGrid(center=(10, 0, 0), counts=(2, 1, 1), voxel_size=1.0)
        ris = PlanarArray(center=(0, 0, 0), rows=2, cols=2, spacing=0.5)
        ch = build_channels(grid, ris, (2, 3, 4), [(5, 5, 5)], gain=0.0)
        sm = build_sensing_matrices(ch, random_codebook(3, 4, seed=0))
        np.testing.assert_array_equal(sm.a[0], 0.0)

    def test_column_norms_positive_and_reproducible(self):
        rng = np.random.default_rng(8)
        grid, ris, ap, ue = small_scenario(rng)
        ch = build_channels(grid, ris, ap, ue)
        cb = random_codebook(5, ris.n_elements, seed=13)
        sm1 = build_sensing_matrices(ch, cb)
        sm2 = build_sensing_matrices(build_channels(grid, ris, ap, ue), cb)
        assert all(np.all(np.linalg.norm(a, axis=0) > 0) for a in sm1.a)
        for t in range(sm1.n_views):
            np.testing.assert_array_equal(sm1.a[t], sm2.a[t])


class TestMeasurements:
    def _setup(self, seed=0, t_views=2, snr_db=20.0):
        rng = np.random.default_rng(seed)
        grid, ris, ap, ue = small_scenario(rng)
        ue = np.vstack([ue] * 1)[:1].repeat(t_views, axis=0) + rng.random((t_views, 3))
        ch = build_channels(grid, ris, ap, ue)
        cb = random_codebook(6, ris.n_elements, seed=rng)
        sm = build_sensing_matrices(ch, cb)
        x = np.abs(rng.normal(1.0, 1.0, size=(t_views, grid.n_voxels))) * (
            rng.random((t_views, grid.n_voxels)) < 0.5
        )
        x[0, 0] = 1.0  # never all-zero
        return sm, x

    def test_noiseless_flag(self):
        sm, x = self._setup()
        ms = synthesize_measurements(sm, x, math.inf, seed=1)
        np.testing.assert_allclose(ms.y[0], sm.a[0] @ x[0], rtol=1e-12)
        assert ms.chi2 == 0.0

    def test_zero_signal_pure_noise_variance(self):
        sm, x = self._setup()
        chi2 = calibrate_noise(sm, x, 20.0)
        ms = synthesize_measurements(sm, x, 20.0, seed=2)
        noise = ms.y - np.stack([sm.a[t] @ x[t] for t in range(sm.n_views)])
        # many draws to tighten the empirical variance
        draws = [synthesize_measurements(sm, x, 20.0, seed=s).y - (ms.y - noise) for s in range(40)]
        emp = np.mean([np.mean(np.abs(d) ** 2) for d in draws])
        assert emp == pytest.approx(chi2, rel=0.15)

    def test_snr_calibration_decibels(self):
        sm, x = self._setup()
        power = np.mean([np.mean(np.abs(sm.a[t] @ x[t]) ** 2) for t in range(sm.n_views)])
        assert calibrate_noise(sm, x, 0.0) == pytest.approx(power, rel=1e-12)
        assert calibrate_noise(sm, x, 20.0) == pytest.approx(power / 100.0, rel=1e-12)
        assert calibrate_noise(sm, 2.0 * x, 20.0) == pytest.approx(4.0 * power / 100.0, rel=1e-12)

    def test_empirical_snr_within_tolerance(self):
        sm, x = self._setup(seed=3, t_views=3)
        signal = np.stack([sm.a[t] @ x[t] for t in range(sm.n_views)])
        sig_power = np.mean(np.abs(signal) ** 2)
        noise_powers = []
        for s in range(30):
            ms = synthesize_measurements(sm, x, 20.0, seed=100 + s)
            noise_powers.append(np.mean(np.abs(ms.y - signal) ** 2))
        snr_emp = 10.0 * np.log10(sig_power / np.mean(noise_powers))
        assert snr_emp == pytest.approx(20.0, abs=0.2)

    def test_deterministic_noise(self):
        sm, x = self._setup()
        y1 = synthesize_measurements(sm, x, 10.0, seed=7).y
        y2 = synthesize_measurements(sm, x, 10.0, seed=7).y
        np.testing.assert_array_equal(y1, y2)

    def test_all_zero_signal_rejected(self):
        sm, x = self._setup()
        with pytest.raises(ValueError):
            calibrate_noise(sm, np.zeros_like(x), 20.0)
