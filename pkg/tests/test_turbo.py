import numpy as np
import pytest
from oracles import exact_mmse_multiview, markov_chain_posteriors

from ris_imager.scene import PriorParams, generate_scene
from ris_imager.solvers import (
    GampConfig,
    em_turbo_gamp,
    em_update,
    gamp_single,
    steady_state_priors,
    structure_pass,
)
from ris_imager.solvers.turbo import StructureResult, _amplitude_smoother, _support_smoother

PRIOR = PriorParams(alpha=0.2, eta=1.0, sigma2=1.0, p01=0.3, rho=0.6, chi2=0.05)


def random_views(rng, n, k, t_views, prior, snr_db=25.0):
    scene = generate_scene(prior, n, t_views, seed=rng.integers(2**32))
    a_list, y_list = [], []
    powers = []
    mats = [
        (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))) / np.sqrt(2 * k)
        for _ in range(t_views)
    ]
    for t in range(t_views):
        clean = mats[t] @ scene.images[t]
        powers.append(np.mean(np.abs(clean) ** 2))
    chi2 = float(np.mean(powers)) / 10 ** (snr_db / 10.0)
    for t in range(t_views):
        clean = mats[t] @ scene.images[t]
        noise = np.sqrt(chi2 / 2) * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
        a_list.append(mats[t])
        y_list.append(clean + noise)
    return a_list, y_list, scene, chi2


class TestSupportSmoother:
    def test_matches_exhaustive_enumeration(self):
        # 3-frame chain vs brute-force enumeration of the 2^3 support paths
        prior = PriorParams(alpha=0.3, eta=1.0, sigma2=1.0, p01=0.25, rho=0.5)
        llr = np.array([[1.2], [-0.7], [0.4]])
        activity, post, trans, occ = _support_smoother(llr, prior)
        post_oracle, ext_oracle = markov_chain_posteriors(
            prior.alpha, prior.p01, prior.p10, np.exp(llr[:, 0])
        )
        np.testing.assert_allclose(post[:, 0], post_oracle, rtol=1e-9)
        np.testing.assert_allclose(activity[:, 0], ext_oracle, rtol=1e-9)

    def test_frozen_chain_propagates_confident_evidence(self):
        prior = PriorParams(alpha=0.1, eta=1.0, sigma2=1.0, p01=0.0, rho=0.5)
        llr = np.zeros((5, 1))
        llr[0, 0] = 50.0  # certain active at the first view
        activity, post, _, _ = _support_smoother(llr, prior)
        np.testing.assert_allclose(activity[1:, 0], 1.0, atol=1e-6)
        np.testing.assert_allclose(post[:, 0], 1.0, atol=1e-6)

    def test_uninformative_evidence_returns_steady_state(self):
        llr = np.zeros((6, 4))
        activity, post, _, _ = _support_smoother(llr, PRIOR)
        np.testing.assert_allclose(activity, PRIOR.alpha, atol=1e-9)
        np.testing.assert_allclose(post, PRIOR.alpha, atol=1e-9)


class TestAmplitudeSmoother:
    def test_uninformative_evidence_returns_marginal(self):
        t_views, n = 5, 3
        mean, var, pm, pm2, cross = _amplitude_smoother(
            np.zeros((t_views, n)), np.zeros((t_views, n)), PRIOR
        )
        np.testing.assert_allclose(mean, PRIOR.eta, atol=1e-9)
        np.testing.assert_allclose(var, PRIOR.sigma2, atol=1e-9)
        # lag-1 cross moment of the prior process: eta^2 + rho sigma2
        np.testing.assert_allclose(cross, PRIOR.eta**2 + PRIOR.rho * PRIOR.sigma2, atol=1e-9)

    def test_two_frame_posterior_matches_direct_gaussian(self):
        # exact bivariate-Gaussian conditioning oracle on one voxel, two views
        prior = PriorParams(alpha=0.2, eta=0.5, sigma2=2.0, p01=0.1, rho=0.7)
        r = np.array([[1.3], [-0.2]])
        w = np.array([[2.0], [0.5]])  # evidence precisions
        cov = prior.sigma2 * np.array([[1.0, prior.rho], [prior.rho, 1.0]])
        prior_mean = np.full(2, prior.eta)
        obs_prec = np.diag(w[:, 0])
        post_cov = np.linalg.inv(np.linalg.inv(cov) + obs_prec)
        post_mean = post_cov @ (np.linalg.inv(cov) @ prior_mean + obs_prec @ r[:, 0])
        mean, var, pm, pm2, cross = _amplitude_smoother(r, w, prior)
        np.testing.assert_allclose(pm[:, 0], post_mean, rtol=1e-9)
        np.testing.assert_allclose(pm2[:, 0] - pm[:, 0] ** 2, np.diag(post_cov), rtol=1e-9)
        np.testing.assert_allclose(
            cross[0, 0], post_cov[0, 1] + post_mean[0] * post_mean[1], rtol=1e-9
        )
        # extrinsic prior at view 0 conditions only on view 1's evidence
        v_ext = cov[0, 0] - cov[0, 1] ** 2 / (cov[1, 1] + 1.0 / w[1, 0])
        m_ext = prior.eta + cov[0, 1] / (cov[1, 1] + 1.0 / w[1, 0]) * (r[1, 0] - prior.eta)
        np.testing.assert_allclose(mean[0, 0], m_ext, rtol=1e-9)
        np.testing.assert_allclose(var[0, 0], v_ext, rtol=1e-9)


class TestStructurePass:
    def test_shapes_and_ranges(self):
        rng = np.random.default_rng(0)
        t_views, n = 4, 7
        sr = structure_pass(
            rng.normal(size=(t_views, n)),
            rng.normal(size=(t_views, n)),
            np.abs(rng.normal(size=(t_views, n))),
            PRIOR,
        )
        assert sr.activity.shape == (t_views, n)
        assert np.all(sr.activity > 0) and np.all(sr.activity < 1)
        assert np.all(sr.amp_var > 0)
        assert sr.trans_on_off.shape == (t_views - 1, n)


class TestEmUpdate:
    def test_alpha_recovers_known_support_fraction(self):
        t_views, n = 3, 10
        post = np.zeros((t_views, n))
        post[:, :3] = 1.0  # 30% active with certainty
        sr = StructureResult(
            activity=post,
            amp_mean=np.ones((t_views, n)),
            amp_var=np.ones((t_views, n)),
            support_post=post,
            trans_on_off=np.zeros((t_views - 1, n)),
            occupied_prev=post[:-1],
            amp_post_mean=np.ones((t_views, n)),
            amp_post_m2=np.full((t_views, n), 2.0),
            amp_cross=np.ones((t_views - 1, n)),
        )
        new = em_update(sr, chi2_hat=0.1, prior=PRIOR)
        assert new.alpha == pytest.approx(0.3, abs=1e-9)
        assert new.p01 == pytest.approx(0.0, abs=1e-9)

    def test_chi2_floors_under_noiseless_data(self):
        sr = StructureResult(
            activity=np.full((2, 4), 0.5),
            amp_mean=np.ones((2, 4)),
            amp_var=np.ones((2, 4)),
            support_post=np.full((2, 4), 0.5),
            trans_on_off=np.full((1, 4), 0.1),
            occupied_prev=np.full((1, 4), 0.5),
            amp_post_mean=np.ones((2, 4)),
            amp_post_m2=np.full((2, 4), 2.0),
            amp_cross=np.full((1, 4), 1.5),
        )
        new = em_update(sr, chi2_hat=0.0, prior=PRIOR)
        assert new.chi2 == pytest.approx(1e-12)

    def test_updates_stay_in_domain(self):
        rng = np.random.default_rng(3)
        t_views, n = 4, 20
        post = rng.random((t_views, n))
        sr = StructureResult(
            activity=post,
            amp_mean=rng.normal(size=(t_views, n)),
            amp_var=np.abs(rng.normal(size=(t_views, n))) + 0.1,
            support_post=post,
            trans_on_off=rng.random((t_views - 1, n)) * 0.2,
            occupied_prev=post[:-1],
            amp_post_mean=rng.normal(size=(t_views, n)),
            amp_post_m2=np.abs(rng.normal(size=(t_views, n))) + 1.0,
            amp_cross=rng.normal(size=(t_views - 1, n)),
        )
        new = em_update(sr, chi2_hat=0.5, prior=PRIOR)
        assert 0 < new.alpha < 1
        assert 0 <= new.p01 <= 1
        assert 0 <= new.rho < 1
        assert new.sigma2 > 0 and new.chi2 > 0
        assert new.p10 <= 1.0


class TestTurboDegradations:
    def test_single_view_equals_gamp(self):
        rng = np.random.default_rng(4)
        a_list, y_list, scene, chi2 = random_views(rng, 40, 25, 1, PRIOR)
        prior = PRIOR.with_(chi2=chi2)
        cfg = GampConfig()
        ref = gamp_single(a_list[0], y_list[0], prior, cfg)
        out = em_turbo_gamp(a_list, y_list, prior, cfg, outer_iters=3, learn=False)
        np.testing.assert_allclose(out.x_hat[0], ref.x_hat, atol=1e-8)

    def test_turbo_beats_single_view_on_correlated_views(self):
        rng = np.random.default_rng(5)
        prior = PriorParams(alpha=0.1, eta=1.0, sigma2=1.0, p01=0.05, rho=0.9, chi2=0.0)
        a_list, y_list, scene, chi2 = random_views(rng, 60, 18, 6, prior, snr_db=15.0)
        pr = prior.with_(chi2=chi2)
        singles = np.stack([gamp_single(a_list[t], y_list[t], pr).x_hat for t in range(6)])
        out = em_turbo_gamp(a_list, y_list, pr, outer_iters=5)
        err_single = np.linalg.norm(singles - scene.images) ** 2
        err_multi = np.linalg.norm(out.x_hat - scene.images) ** 2
        assert err_multi < err_single

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        a_list, y_list, scene, chi2 = random_views(rng, 30, 15, 3, PRIOR)
        pr = PRIOR.with_(chi2=chi2)
        o1 = em_turbo_gamp(a_list, y_list, pr, outer_iters=3)
        o2 = em_turbo_gamp(a_list, y_list, pr, outer_iters=3)
        np.testing.assert_array_equal(o1.x_hat, o2.x_hat)

    def test_history_and_diagnostics(self):
        rng = np.random.default_rng(7)
        a_list, y_list, scene, chi2 = random_views(rng, 20, 12, 2, PRIOR)
        out = em_turbo_gamp(a_list, y_list, PRIOR.with_(chi2=chi2), outer_iters=4, keep_history=True)
        assert out.history.shape == (4, 2, 20)
        assert out.view_converged.shape == (4, 2)
        assert len(out.params_trace) == 5


class TestMmseAgreement:
    def test_tiny_instance_close_to_exact_mmse(self):
        # exhaustive enumeration over all 2^(N T) support patterns
        rng = np.random.default_rng(11)
        prior = PriorParams(alpha=0.25, eta=1.0, sigma2=1.0, p01=0.2, rho=0.6)
        n, k, t_views = 6, 8, 2
        a_list, y_list, scene, chi2 = random_views(rng, n, k, t_views, prior, snr_db=15.0)
        pr = prior.with_(chi2=chi2)
        exact = exact_mmse_multiview(a_list, y_list, pr, chi2)
        out = em_turbo_gamp(a_list, y_list, pr, outer_iters=6, learn=False)
        rms_gap = np.linalg.norm(out.x_hat - exact) / max(np.linalg.norm(exact), 1e-12)
        assert rms_gap < 0.10


@pytest.mark.slow
class TestEmRecovery:
    def test_generate_and_recover_moves_toward_truth(self):
        # EM started from perturbed parameters moves p01 and rho toward truth
        rng = np.random.default_rng(21)
        truth = PriorParams(alpha=0.05, eta=1.0, sigma2=1.0, p01=0.1, rho=0.9)
        n, k, t_views = 400, 120, 10
        a_list, y_list, scene, chi2 = random_views(rng, n, k, t_views, truth, snr_db=25.0)
        start = PriorParams(alpha=0.1, eta=0.7, sigma2=2.0, p01=0.4, rho=0.5, chi2=chi2 * 4)
        out = em_turbo_gamp(a_list, y_list, start, outer_iters=8)
        learned = out.params
        assert abs(learned.p01 - truth.p01) < abs(start.p01 - truth.p01)
        assert abs(learned.rho - truth.rho) < abs(start.rho - truth.rho)
        assert abs(learned.alpha - truth.alpha) < abs(start.alpha - truth.alpha)
        assert abs(learned.chi2 - chi2) < abs(start.chi2 - chi2)
