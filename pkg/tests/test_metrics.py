import numpy as np
import pytest

from ris_imager.metrics import (
    NMSE_FLOOR_DB,
    ave_nmse,
    ave_nmse_ratio,
    nmse,
    nmse_ratio,
    success_detection_rate,
    two_point_success,
)


class TestNmse:
    def test_perfect_recovery_floors(self):
        x = np.array([1.0, 0.0, 2.0])
        assert nmse([x], x) == NMSE_FLOOR_DB

    def test_zero_estimate_gives_zero_db(self):
        x = np.array([1.0, -2.0, 0.5])
        assert nmse([np.zeros(3)], x) == pytest.approx(0.0, abs=1e-12)

    def test_one_percent_error_reference(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(50)
        e = rng.standard_normal(50)
        e *= 0.1 * np.linalg.norm(x) / np.linalg.norm(e)
        ests = [x + e, x + e, x + e]
        assert nmse(ests, x) == pytest.approx(-20.0, abs=1e-9)

    def test_zero_truth_rejected(self):
        with pytest.raises(ValueError):
            nmse([np.zeros(3)], np.zeros(3))

    def test_trial_mean_of_ratios(self):
        x = np.array([2.0, 0.0])
        e1 = x + np.array([0.2, 0.0])  # ratio 0.01
        e2 = x + np.array([0.4, 0.0])  # ratio 0.04
        expected = 10 * np.log10((0.01 + 0.04) / 2)
        assert nmse([e1, e2], x) == pytest.approx(expected, rel=1e-12)


class TestAveNmse:
    def test_single_view_collapse(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(20)
        est = x + 0.1 * rng.standard_normal(20)
        assert ave_nmse(est[None, None, :], x[None, :]) == pytest.approx(nmse([est], x), rel=1e-12)

    def test_two_view_reference_value(self):
        # per-view ratios 0.01 and 0.04 average to -16.02 dB
        x = np.stack([np.array([2.0, 0.0]), np.array([0.0, 2.0])])
        est = x.copy()
        est[0, 0] += 0.2
        est[1, 1] += 0.4
        assert ave_nmse(est, x) == pytest.approx(10 * np.log10(0.025), rel=1e-9)

    def test_perfect_recovery_floor(self):
        x = np.ones((3, 4))
        assert ave_nmse(x, x) == NMSE_FLOOR_DB

    def test_ratio_helpers_consistent(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((3, 10))
        est = x + 0.05 * rng.standard_normal((3, 10))
        r = ave_nmse_ratio(est, x)
        assert ave_nmse(est[None], x) == pytest.approx(10 * np.log10(r), rel=1e-12)
        assert r == pytest.approx(np.mean([nmse_ratio(est[t], x[t]) for t in range(3)]), rel=1e-12)


class TestSuccessDetection:
    def test_exact_recovery_succeeds(self):
        x = np.zeros(10)
        x[[2, 7]] = [1.0, 1.5]
        assert two_point_success(x, [2, 7])
        assert success_detection_rate([x, x], [2, 7]) == 1.0

    def test_tie_counts_as_failure(self):
        est = np.zeros(10)
        est[2] = 1.0
        est[7] = 0.5
        est[5] = 0.5  # tied with the weaker target
        assert not two_point_success(est, [2, 7])

    def test_third_voxel_larger_fails(self):
        est = np.zeros(10)
        est[[2, 7]] = [1.0, 0.4]
        est[3] = 0.6
        assert not two_point_success(est, [2, 7])

    def test_magnitude_ranking(self):
        est = np.zeros(10)
        est[2] = -1.2  # negative but dominant in magnitude
        est[7] = 0.8
        est[4] = 0.3
        assert two_point_success(est, [2, 7])

    def test_rate_counts_fraction(self):
        good = np.zeros(6)
        good[[1, 4]] = [2.0, 1.0]
        bad = np.zeros(6)
        bad[[0, 5]] = [2.0, 1.0]
        assert success_detection_rate([good, bad, good, good], [1, 4]) == pytest.approx(0.75)

    def test_requires_two_distinct_targets(self):
        with pytest.raises(ValueError):
            two_point_success(np.zeros(5), [2, 2])
