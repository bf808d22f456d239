import numpy as np
import pytest

from ris_imager.channel import build_channels, random_codebook
from ris_imager.coherence import (
    beta,
    beta_prime,
    build_coherence_report,
    codebook_column_scale,
    gradient_beta_prime,
    max_sidelobes,
    optimize_phases,
    psf,
    subpath_correlation,
    theorem1_check,
)
from ris_imager.geometry import PlanarArray, VoxelGrid, voxel_centers

TABLE2_RIS = PlanarArray(center=(0, 0, 0), rows=48, cols=48, spacing=0.5)
TABLE2_GRID = VoxelGrid(center=(50, 0, 0), counts=(10, 10, 10), voxel_size=2.0)


def table2_channels():
    return build_channels(TABLE2_GRID, TABLE2_RIS, (20, 20, 30), [(30, 30, 10)])


class TestPsfAndCorrelation:
    def test_unit_diagonals(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((8, 5)) + 1j * rng.standard_normal((8, 5))
        p = psf(a)
        np.testing.assert_allclose(np.diag(p), 1.0, atol=1e-12)
        h = rng.standard_normal((5, 9)) + 1j * rng.standard_normal((5, 9))
        mu = subpath_correlation(h)
        np.testing.assert_allclose(np.diag(mu), 1.0, atol=1e-12)

    def test_orthogonal_columns_zero_offdiagonal(self):
        q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((10, 4)))
        p = psf(q.astype(complex))
        off = p - np.diag(np.diag(p))
        np.testing.assert_allclose(off, 0.0, atol=1e-10)

    def test_matches_bruteforce_gram(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
        p = psf(a)
        for n1 in range(4):
            for n2 in range(4):
                expected = abs(np.vdot(a[:, n1], a[:, n2])) / (
                    np.linalg.norm(a[:, n1]) * np.linalg.norm(a[:, n2])
                )
                assert p[n1, n2] == pytest.approx(expected, rel=1e-12)

    def test_scaling_invariance(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((7, 5)) + 1j * rng.standard_normal((7, 5))
        np.testing.assert_allclose(psf(a), psf(3.7 * a), atol=1e-12)
        scales = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        np.testing.assert_allclose(psf(a), psf(a * scales[None, :]), atol=1e-12)

    def test_range_neighbors_are_strongest_sidelobes(self):
        # strongest subpath-correlation sidelobes sit on range-direction neighbors
        ch = table2_channels()
        mu = subpath_correlation(ch.H_vs)
        for n1 in (499, 555, 444):
            row = mu[n1].copy()
            row[n1] = -1.0
            peak = int(np.argmax(row))
            assert peak in (n1 - 1, n1 + 1)

    def test_sidelobe_trends_with_geometry(self):
        # max sidelobe falls with RIS aperture and grows with distance
        def f_v(rows, dist):
            ris = PlanarArray(center=(0, 0, 0), rows=rows, cols=rows, spacing=0.5)
            grid = VoxelGrid(center=(dist, 0, 0), counts=(6, 6, 6), voxel_size=2.0)
            ch = build_channels(grid, ris, (20, 20, 30), [(30, 30, 10)])
            mu = subpath_correlation(ch.H_vs)
            return float(np.median(max_sidelobes(mu)))

        assert f_v(48, 50) < f_v(24, 50)
        assert f_v(24, 80) > f_v(24, 40)


class TestBetaObjectives:
    def test_orthonormal_columns_zero(self):
        q, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((12, 6)))
        assert beta_prime(q.astype(complex)) == pytest.approx(0.0, abs=1e-18)
        assert beta(q.astype(complex)) == pytest.approx(0.0, abs=1e-18)

    def test_scaled_orthonormal_reference(self):
        # A = 2 Q gives ||4 I - I||_F^2 = 9 N
        q, _ = np.linalg.qr(np.random.default_rng(5).standard_normal((12, 6)))
        assert beta_prime(2.0 * q.astype(complex)) == pytest.approx(9.0 * 6, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        # directional derivative of beta' along Delta equals 4 Re<G, Delta>
        rng = np.random.default_rng(6)
        k, m, n = 6, 5, 4
        omega = np.exp(1j * rng.uniform(0, 2 * np.pi, (k, m)))
        b = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        grad = gradient_beta_prime(omega, b)
        eps = 1e-6
        for _ in range(5):
            delta = rng.standard_normal((k, m)) + 1j * rng.standard_normal((k, m))
            fd = (beta_prime((omega + eps * delta) @ b) - beta_prime((omega - eps * delta) @ b)) / (
                2 * eps
            )
            analytic = 4.0 * float(np.real(np.sum(np.conj(grad) * delta)))
            assert fd == pytest.approx(analytic, rel=1e-4)

    def test_zero_base_matrix_zero_gradient(self):
        omega = np.exp(1j * np.random.default_rng(7).uniform(0, 2 * np.pi, (4, 3)))
        np.testing.assert_array_equal(gradient_beta_prime(omega, np.zeros((3, 5))), 0.0)


class TestOptimizePhases:
    def rand_b(self, seed=8, m=24, n=30):
        rng = np.random.default_rng(seed)
        return (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / np.sqrt(m)

    def test_zero_step_returns_random_init(self):
        b = self.rand_b()
        cb, trace = optimize_phases(b, k=10, tau=0.0, max_iters=5, seed=3)
        ref = random_codebook(10, 24, mode="continuous", seed=3)
        np.testing.assert_allclose(cb.omega, ref.omega, atol=1e-12)
        assert np.allclose(trace, trace[0])

    def test_unit_modulus_invariant(self):
        b = self.rand_b()
        cb, _ = optimize_phases(b, k=12, tau=10.0, max_iters=30, seed=1)
        np.testing.assert_allclose(np.abs(cb.omega), 1.0, atol=1e-12)

    def test_objective_decreases(self):
        b = self.rand_b()
        cb, trace = optimize_phases(b, k=16, tau=100.0, max_iters=100, seed=2)
        assert trace[-1] < trace[0]
        # non-increasing after burn-in (last half), small jitter allowed
        tail = trace[len(trace) // 2 :]
        assert np.all(np.diff(tail) <= 1e-6 * np.abs(tail[:-1]) + 1e-12)

    def test_gradient_tangent_projection_vanishes_at_stationary_point(self):
        # with a single RIS element the Gram of Omega b is phase-independent,
        # so every unit-modulus codebook is stationary on the phase manifold
        rng = np.random.default_rng(11)
        b = (rng.standard_normal((1, 8)) + 1j * rng.standard_normal((1, 8)))
        omega = np.exp(1j * rng.uniform(0, 2 * np.pi, (20, 1)))
        grad = gradient_beta_prime(omega, b)
        # tangent at w = e^{j phi} is j w; stationarity means Re(conj(j w) g) = 0
        tangent = np.real(np.conj(1j * omega) * grad)
        assert np.max(np.abs(tangent)) < 1e-10 * max(np.max(np.abs(grad)), 1e-30)


class TestTheorem1:
    def test_deviation_shrinks_with_codebook_size(self):
        # small-scale empirical convergence of PSF toward subpath correlation
        ris = PlanarArray(center=(0, 0, 0), rows=12, cols=12, spacing=0.5)
        grid = VoxelGrid(center=(30, 0, 0), counts=(4, 4, 4), voxel_size=2.0)
        ch = build_channels(grid, ris, (20, 20, 30), [(30, 30, 10)])
        stats = theorem1_check(ch.H_vs, ch.h_sa, k_values=(20, 80, 320), seed=5)
        for mode in ("continuous", "discrete"):
            medians = [stats[(mode, k)][1] for k in (20, 80, 320)]
            assert medians[0] > medians[1] > medians[2]

    def test_report_fields(self):
        rng = np.random.default_rng(12)
        ris = PlanarArray(center=(0, 0, 0), rows=8, cols=8, spacing=0.5)
        grid = VoxelGrid(center=(25, 0, 0), counts=(3, 3, 3), voxel_size=2.0)
        ch = build_channels(grid, ris, (20, 20, 30), [(30, 30, 10)])
        cb = random_codebook(40, 64, seed=13)
        a = cb.omega @ (ch.h_sa[:, None] * ch.H_vs.T) * ch.h_uv[0][None, :]
        report = build_coherence_report(a, ch.H_vs)
        assert report.psf.shape == (27, 27)
        assert report.mu.shape == (27, 27)
        assert 0.0 <= report.deviation_median <= report.deviation_max
        assert report.beta > 0 and report.beta_prime > 0
        assert report.psf_sidelobes.shape == (27,)

    def test_gram_concentration_with_growing_codebook(self):
        # the element-matching Gram approaches a scaled identity as K grows
        ris = PlanarArray(center=(0, 0, 0), rows=10, cols=10, spacing=0.5)
        h_sa = build_channels(
            VoxelGrid(center=(30, 0, 0), counts=(1, 1, 1), voxel_size=1.0),
            ris,
            (200, 0, 0),
            [(30, 30, 10)],
        ).h_sa
        devs = []
        for k in (50, 200, 800):
            omega = random_codebook(k, 100, seed=(17, k)).omega
            d = h_sa[None, :] * omega
            gram = d.conj().T @ d
            scale = float(k * np.mean(np.abs(h_sa) ** 2))
            devs.append(np.max(np.abs(gram / scale - np.eye(100))))
        assert devs[0] > devs[1] > devs[2]
