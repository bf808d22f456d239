"""Sensing-matrix coherence analysis and RIS phase optimization.

The point spread function is the column-normalized absolute Gram of the
sensing matrix; the subpath correlation is the same quantity for the
voxel-to-RIS subpath rows of H_vs. The optimizer runs projected gradient
descent on the identity-target Gram objective beta'(A) = ||A^H A - I||_F^2
under the per-entry unit-modulus constraint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PhaseCodebook, random_codebook


def _normalized_abs_gram(columns: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(columns, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm column")
    g = np.abs(columns.conj().T @ columns)
    return g / np.outer(norms, norms)


def subpath_correlation(h_vs: np.ndarray) -> np.ndarray:
    """mu(n1, n2): normalized correlation of voxel-to-RIS subpath rows of H_vs (N x M)."""
    return _normalized_abs_gram(np.asarray(h_vs, dtype=complex).T)


def psf(a: np.ndarray) -> np.ndarray:
    """PSF(n1, n2): column-normalized absolute Gram of the sensing matrix."""
    return _normalized_abs_gram(np.asarray(a, dtype=complex))


def max_sidelobes(gram: np.ndarray) -> np.ndarray:
    """Per-voxel largest off-diagonal entry of a normalized Gram matrix."""
    g = gram.copy()
    np.fill_diagonal(g, -np.inf)
    return g.max(axis=1)


def beta(a: np.ndarray) -> float:
    """Coherence of the column-normalized matrix: ||Atilde^H Atilde - I||_F^2."""
    a = np.asarray(a, dtype=complex)
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm column")
    an = a / norms
    gram = an.conj().T @ an
    gram[np.diag_indices_from(gram)] -= 1.0
    return float(np.linalg.norm(gram) ** 2)


def beta_prime(a: np.ndarray) -> float:
    """Identity-target Gram objective ||A^H A - I||_F^2."""
    a = np.asarray(a, dtype=complex)
    gram = a.conj().T @ a
    gram[np.diag_indices_from(gram)] -= 1.0
    return float(np.linalg.norm(gram) ** 2)


def gradient_beta_prime(omega: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gradient matrix Omega B (B^H Omega^H Omega B - I) B^H of beta'(Omega B).

    The directional derivative along a perturbation Delta is
    4 Re<G, Delta> (Frobenius inner product), as pinned by the
    finite-difference test.
    """
    a = omega @ b
    gram = a.conj().T @ a
    gram[np.diag_indices_from(gram)] -= 1.0
    return a @ gram @ b.conj().T


def codebook_column_scale(b: np.ndarray, k: int) -> float:
    """Scale making E||(Omega B)(:, n)||^2 = 1 on average over random phases.

    beta' is scale-sensitive; the optimizer operates on B / scale so the
    identity target (and the published step size) is meaningful regardless of
    the physical path-loss magnitudes.
    """
    mean_col = float(np.mean(np.sum(np.abs(b) ** 2, axis=0)))
    if not mean_col > 0:
        raise ValueError("zero matrix")
    return float(np.sqrt(k * mean_col))


REFERENCE_TAU = 100.0
REFERENCE_MAX_STEP = 1.0


def optimize_phases(
    b: np.ndarray,
    k: int,
    tau: float = 100.0,
    max_iters: int = 200,
    seed=0,
    normalize: bool = True,
) -> tuple:
    """Projected gradient descent on beta' over unit-modulus K x M codebooks.

    Returns (codebook, trace) where trace[i] is beta' after i iterations
    (trace[0] is the random initialization). Entries that would project from
    zero keep their previous phase.

    The step size is expressed in calibrated units: the published tau = 100
    presumes a particular (unstated) matrix scaling, so the gradient is
    rescaled once at the start such that tau = 100 moves the largest entry by
    1.0 before projection. tau stays a linear knob.
    """
    if not tau >= 0:
        raise ValueError("tau must be nonnegative")
    b = np.asarray(b, dtype=complex)
    if normalize:
        b = b / codebook_column_scale(b, k)
    omega0 = random_codebook(k, b.shape[0], mode="continuous", seed=seed).omega
    grad0 = gradient_beta_prime(omega0, b)
    g0 = float(np.abs(grad0).max())
    step_size = 0.0 if g0 == 0.0 else (tau / REFERENCE_TAU) * REFERENCE_MAX_STEP / g0
    omega, trace = _pgd(omega0, b, step_size, max_iters)
    # scenario-dependent safety net: shrink the calibrated step if the fixed
    # step diverged outright, keeping the procedure deterministic
    shrink = 0
    while trace[-1] >= trace[0] and step_size > 0 and shrink < 3:
        step_size /= 4.0
        shrink += 1
        omega, trace = _pgd(omega0, b, step_size, max_iters)
    return PhaseCodebook(omega, mode="optimized", seed=seed if np.isscalar(seed) else None), trace


def _pgd(omega0, b, step_size, max_iters):
    omega = omega0.copy()
    trace = [beta_prime(omega @ b)]
    for _ in range(max_iters):
        step = omega - step_size * gradient_beta_prime(omega, b)
        mags = np.abs(step)
        dead = mags < 1e-15
        if np.any(dead):
            step[dead] = omega[dead]
            mags = np.abs(step)
        omega = step / mags
        trace.append(beta_prime(omega @ b))
    return omega, np.asarray(trace)


@dataclass(frozen=True)
class CoherenceReport:
    """PSF / subpath-correlation summary of one scenario."""

    psf: np.ndarray
    mu: np.ndarray
    beta: float
    beta_prime: float
    psf_sidelobes: np.ndarray       # F_p(n)
    subpath_sidelobes: np.ndarray   # F_v(n)
    deviation_max: float            # max off-diagonal |PSF - mu|
    deviation_median: float


def build_coherence_report(a: np.ndarray, h_vs: np.ndarray) -> CoherenceReport:
    """Summary of one sensing matrix. beta' is scale-sensitive, so it is
    reported for A rescaled to unit RMS column norm (the optimizer's frame);
    the PSF, mu and beta are normalization-free."""
    a = np.asarray(a, dtype=complex)
    p = psf(a)
    mu = subpath_correlation(h_vs)
    off = ~np.eye(p.shape[0], dtype=bool)
    dev = np.abs(p - mu)[off]
    rms = float(np.sqrt(np.mean(np.sum(np.abs(a) ** 2, axis=0))))
    return CoherenceReport(
        psf=p,
        mu=mu,
        beta=beta(a),
        beta_prime=beta_prime(a / rms),
        psf_sidelobes=max_sidelobes(p),
        subpath_sidelobes=max_sidelobes(mu),
        deviation_max=float(dev.max()),
        deviation_median=float(np.median(dev)),
    )


def theorem1_check(
    h_vs: np.ndarray,
    h_sa: np.ndarray,
    k_values,
    seed=0,
    modes=("continuous", "discrete"),
    bits: int = 1,
    gain: float = 1.0,
) -> dict:
    """Empirical PSF-to-subpath-correlation convergence for growing K.

    For each codebook mode and K, draws a random codebook, forms the
    single-view sensing matrix (the UE subpath scales columns and cancels in
    the PSF), and reports (max, median) off-diagonal |PSF - mu|.
    """
    h_vs = np.asarray(h_vs, dtype=complex)
    h_sa = np.asarray(h_sa, dtype=complex)
    base = gain * (h_sa[:, None] * h_vs.T)
    mu = subpath_correlation(h_vs)
    off = ~np.eye(mu.shape[0], dtype=bool)
    seq = np.random.SeedSequence(seed)
    out = {}
    for mode in modes:
        for k in k_values:
            sub = np.random.default_rng(seq.spawn(1)[0])
            codebook = random_codebook(int(k), base.shape[0], mode=mode, bits=bits, seed=sub)
            p = psf(codebook.omega @ base)
            dev = np.abs(p - mu)[off]
            out[(mode, int(k))] = (float(dev.max()), float(np.median(dev)))
    return out
