"""Reconstruction quality metrics over Monte Carlo trials."""

from __future__ import annotations

import numpy as np

NMSE_FLOOR_DB = -120.0


def nmse(estimates, truth) -> float:
    """10 log10 of the trial-mean of ||xhat - x||^2 / ||x||^2, floored at -120 dB."""
    x = np.asarray(truth, dtype=float)
    energy = float(np.sum(x**2))
    if energy <= 0.0:
        raise ValueError("truth must be nonzero")
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    ratio = float(np.mean(np.sum((est - x[None, :]) ** 2, axis=1))) / energy
    if ratio <= 10.0 ** (NMSE_FLOOR_DB / 10.0):
        return NMSE_FLOOR_DB
    return 10.0 * np.log10(ratio)


def nmse_ratio(estimate, truth) -> float:
    """Single-trial squared-error ratio ||xhat - x||^2 / ||x||^2."""
    x = np.asarray(truth, dtype=float)
    energy = float(np.sum(x**2))
    if energy <= 0.0:
        raise ValueError("truth must be nonzero")
    e = np.asarray(estimate, dtype=float) - x
    return float(np.sum(e**2)) / energy


def ave_nmse_ratio(estimates, truths) -> float:
    """Single-trial view-mean of per-view error ratios."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.shape != tru.shape:
        raise ValueError("estimates and truths must share shape (T, N)")
    return float(np.mean([nmse_ratio(est[t], tru[t]) for t in range(tru.shape[0])]))


def ave_nmse(estimates, truths) -> float:
    """10 log10 of the trial-mean of view-mean error ratios, floored at -120 dB.

    `estimates` has shape (I, T, N) (or (T, N) for one trial); `truths` is the
    shared (T, N) ground truth or per-trial (I, T, N).
    """
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 2:
        est = est[None]
    tru = np.asarray(truths, dtype=float)
    if tru.ndim == 2:
        tru = np.broadcast_to(tru, est.shape)
    if tru.shape != est.shape:
        raise ValueError("estimates and truths must align per trial")
    ratio = float(np.mean([ave_nmse_ratio(est[i], tru[i]) for i in range(est.shape[0])]))
    if ratio <= 10.0 ** (NMSE_FLOOR_DB / 10.0):
        return NMSE_FLOOR_DB
    return 10.0 * np.log10(ratio)


def two_point_success(estimate, target_indices) -> bool:
    """True iff the two target voxels hold the two strictly largest magnitudes.

    A third voxel tied with the weaker target counts as a failure.
    """
    targets = np.asarray(target_indices, dtype=int)
    if targets.size != 2 or targets[0] == targets[1]:
        raise ValueError("need exactly two distinct target voxels")
    mags = np.abs(np.asarray(estimate, dtype=float))
    rest = np.delete(mags, targets)
    if rest.size == 0:
        return True
    return bool(np.min(mags[targets]) > np.max(rest))


def success_detection_rate(estimates, target_indices) -> float:
    """Fraction of trials whose two target voxels carry the two largest coefficients."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    hits = [two_point_success(row, target_indices) for row in est]
    return float(np.mean(hits))
