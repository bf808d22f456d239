"""Ground-truth multi-view scenes: Bernoulli-Gaussian images whose supports
follow a per-voxel binary Markov chain and whose amplitudes follow a
stationary AR(1) (Gauss-Markov) process across views.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class PriorParams:
    """Modeling parameter set {chi2, alpha, eta, sigma2, p01, rho}.

    Derived quantities: support birth probability p10 = alpha p01 / (1 - alpha)
    (steady-state occupancy alpha), innovation mean eta_e = eta and variance
    sigma2_e = sigma2 (1 + rho) / (1 - rho) (stationary marginal N(eta, sigma2)).
    """

    alpha: float
    eta: float
    sigma2: float
    p01: float
    rho: float
    chi2: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 <= self.p01 <= 1.0:
            raise ValueError("p01 must lie in [0, 1]")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if not self.sigma2 > 0.0:
            raise ValueError("sigma2 must be positive")
        if self.chi2 < 0.0:
            raise ValueError("chi2 must be nonnegative")
        if self.p10 > 1.0 + 1e-12:
            raise ValueError("derived p10 = alpha p01 / (1 - alpha) exceeds 1")

    @property
    def p10(self) -> float:
        return self.alpha * self.p01 / (1.0 - self.alpha)

    @property
    def eta_e(self) -> float:
        return self.eta

    @property
    def sigma2_e(self) -> float:
        return self.sigma2 * (1.0 + self.rho) / (1.0 - self.rho)

    def with_(self, **kwargs) -> "PriorParams":
        return replace(self, **kwargs)


def derive_chain_params(params: PriorParams) -> tuple:
    """(p10, eta_e, sigma2_e) implied by steady state and marginal matching."""
    return params.p10, params.eta_e, params.sigma2_e


def sample_support_chain(params: PriorParams, n_voxels: int, n_views: int, seed=0) -> np.ndarray:
    """Per-voxel binary Markov chains, steady-state initialized: (T, N) in {0, 1}."""
    rng = np.random.default_rng(seed)
    s = np.empty((n_views, n_voxels), dtype=np.int8)
    s[0] = rng.random(n_voxels) < params.alpha
    p01, p10 = params.p01, params.p10
    for t in range(1, n_views):
        u = rng.random(n_voxels)
        stay_on = (s[t - 1] == 1) & (u >= p01)
        turn_on = (s[t - 1] == 0) & (u < p10)
        s[t] = stay_on | turn_on
    return s


def sample_amplitude_process(params: PriorParams, n_voxels: int, n_views: int, seed=0) -> np.ndarray:
    """Stationary AR(1) amplitudes a_t = rho a_{t-1} + (1 - rho) e_t, shape (T, N).

    a_1 ~ N(eta, sigma2) i.i.d.; e_t ~ N(eta_e, sigma2_e) keeps every marginal
    at N(eta, sigma2). Amplitudes evolve for all voxels, visible or not.
    """
    rng = np.random.default_rng(seed)
    a = np.empty((n_views, n_voxels))
    a[0] = params.eta + np.sqrt(params.sigma2) * rng.standard_normal(n_voxels)
    rho = params.rho
    e_std = np.sqrt(params.sigma2_e)
    for t in range(1, n_views):
        e = params.eta_e + e_std * rng.standard_normal(n_voxels)
        a[t] = rho * a[t - 1] + (1.0 - rho) * e
    return a


def compose_images(supports: np.ndarray, amplitudes: np.ndarray) -> np.ndarray:
    """Elementwise product x_t = s_t * a_t."""
    s = np.asarray(supports)
    a = np.asarray(amplitudes)
    if s.shape != a.shape:
        raise ValueError("supports and amplitudes must have the same shape")
    return s * a


@dataclass(frozen=True)
class MultiViewScene:
    """Supports s, amplitudes a, and images x = s * a over T views of N voxels."""

    supports: np.ndarray
    amplitudes: np.ndarray
    images: np.ndarray

    @property
    def n_views(self) -> int:
        return self.images.shape[0]

    @property
    def n_voxels(self) -> int:
        return self.images.shape[1]

    @property
    def joint_support_size(self) -> int:
        """card of the union of per-view supports (the S of rough joint sparsity)."""
        return int(np.count_nonzero(np.any(self.images != 0.0, axis=0)))


def generate_scene(
    params: PriorParams,
    n_voxels: int,
    n_views: int,
    seed=0,
    truncate_negative: bool = False,
) -> MultiViewScene:
    """Draw a full scene. `truncate_negative` rectifies amplitudes at zero
    (off by default: the untruncated process is what the solver prior assumes).
    """
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_seed, a_seed = seq.spawn(2)
    s = sample_support_chain(params, n_voxels, n_views, s_seed)
    a = sample_amplitude_process(params, n_voxels, n_views, a_seed)
    if truncate_negative:
        a = np.maximum(a, 0.0)
    return MultiViewScene(supports=s, amplitudes=a, images=compose_images(s, a))


def gamma_scaling(gamma: float) -> tuple:
    """Correlation-degree scaling: (d0, p01, rho) = (2 gamma, 0.1 gamma, 1 - 0.1 gamma).

    gamma in [0, 10]; rho is clamped to [0, 1) so gamma = 0 yields the
    identical-views limit and gamma = 10 fully uncorrelated views.
    """
    if not 0.0 <= gamma <= 10.0:
        raise ValueError("gamma must lie in [0, 10]")
    d0 = 2.0 * gamma
    p01 = 0.1 * gamma
    rho = min(max(1.0 - 0.1 * gamma, 0.0), 1.0 - 1e-12)
    return d0, p01, rho


def export_scene_csv(scene: MultiViewScene, path) -> None:
    """Dump (t, n, s, a, x) rows, one per voxel per view."""
    n_views, n_voxels = scene.images.shape
    t_idx = np.repeat(np.arange(n_views), n_voxels)
    n_idx = np.tile(np.arange(n_voxels), n_views)
    rows = np.column_stack(
        [t_idx, n_idx, scene.supports.ravel(), scene.amplitudes.ravel(), scene.images.ravel()]
    )
    np.savetxt(path, rows, delimiter=",", header="t,n,s,a,x", comments="", fmt="%.17g")
