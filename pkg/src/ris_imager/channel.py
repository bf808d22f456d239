"""Subpath channels, RIS phase codebooks, factored sensing matrices, measurements.

The three-hop channel voxel model multiplies one free-space subpath per hop
(UE -> voxel, voxel -> RIS element, RIS element -> AP), so each subpath term
carries amplitude 1 / (sqrt(4 pi) d) and phase -2 pi d / lambda with lambda = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import PlanarArray, Trajectory, VoxelGrid, pairwise_distances, point3, voxel_centers

SPREAD = math.sqrt(4.0 * math.pi)
MIN_SEPARATION = 1e-9


def freespace_subpath(distance):
    """Free-space subpath coefficient exp(-j 2 pi d) / (sqrt(4 pi) d)."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= MIN_SEPARATION):
        raise ValueError("co-located elements: distances must be positive")
    return np.exp(-2j * np.pi * d) / (SPREAD * d)


@dataclass(frozen=True)
class ChannelSet:
    """Static subpaths h_sa (M,), H_vs (N, M) and per-position h_uv (T, N)."""

    h_sa: np.ndarray
    H_vs: np.ndarray
    h_uv: np.ndarray
    gain: float = 1.0

    @property
    def n_views(self) -> int:
        return self.h_uv.shape[0]


def build_channels(grid: VoxelGrid, ris: PlanarArray, ap_position, ue_positions, gain: float = 1.0) -> ChannelSet:
    """Populate all three subpath objects from the scenario geometry.

    `ue_positions` is a Trajectory or an array of shape (T, 3). H_vs and h_sa
    do not depend on the UE position; h_uv carries one row per position.
    """
    if isinstance(ue_positions, Trajectory):
        ue_positions = ue_positions.positions
    ue = np.atleast_2d(np.asarray(ue_positions, dtype=float))
    ap = point3(ap_position)
    voxels = voxel_centers(grid)
    elements = ris.element_positions()
    d_sa = pairwise_distances(elements, ap[None, :])[:, 0]
    d_vs = pairwise_distances(voxels, elements)
    d_uv = pairwise_distances(ue, voxels)
    return ChannelSet(
        h_sa=freespace_subpath(d_sa),
        H_vs=freespace_subpath(d_vs),
        h_uv=freespace_subpath(d_uv),
        gain=float(gain),
    )


@dataclass(frozen=True)
class PhaseCodebook:
    """K x M unit-modulus RIS configuration matrix; entries are exp(-j w_km)."""

    omega: np.ndarray
    mode: str = "continuous"
    bits: int = 0
    seed: int | None = None

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=complex)
        if om.ndim != 2:
            raise ValueError("omega must be a K x M matrix")
        if not np.allclose(np.abs(om), 1.0, atol=1e-9):
            raise ValueError("codebook entries must have unit modulus")
        object.__setattr__(self, "omega", om)

    @property
    def k(self) -> int:
        return self.omega.shape[0]

    @property
    def m(self) -> int:
        return self.omega.shape[1]

    def phases(self) -> np.ndarray:
        """Phase shifts w_km in [0, 2 pi) such that entry = exp(-j w_km)."""
        return np.mod(-np.angle(self.omega), 2.0 * np.pi)


def random_codebook(k: int, m: int, mode: str = "continuous", bits: int = 1, seed=0) -> PhaseCodebook:
    """Random codebook with phases uniform on [0, 2 pi) or on the 2^bits alphabet."""
    rng = np.random.default_rng(seed)
    if mode == "continuous":
        w = rng.uniform(0.0, 2.0 * np.pi, size=(k, m))
        bits = 0
    elif mode == "discrete":
        if bits < 1:
            raise ValueError("discrete codebook needs bits >= 1")
        levels = 2**bits
        w = rng.integers(0, levels, size=(k, m)) * (2.0 * np.pi / levels)
    else:
        raise ValueError(f"unknown codebook mode: {mode!r}")
    return PhaseCodebook(np.exp(-1j * w), mode=mode, bits=bits, seed=seed if np.isscalar(seed) else None)


def save_codebook_csv(codebook: PhaseCodebook, path) -> None:
    """Write phases in radians, K rows x M comma-separated columns."""
    np.savetxt(path, codebook.phases(), delimiter=",", fmt="%.17g")


def load_codebook_csv(path) -> PhaseCodebook:
    w = np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))
    return PhaseCodebook(np.exp(-1j * w), mode="file")


@dataclass(frozen=True)
class SensingMatrixSet:
    """Per-position sensing matrices A_t = Omega B_t with B_t = g diag(h_sa) H_vs^T diag(h_uv_t).

    B_t is stored implicitly: B_t = base * h_uv[t][None, :] with the static
    base = g diag(h_sa) H_vs^T, so A_t = (Omega @ base) * h_uv[t][None, :].
    """

    a: tuple
    base: np.ndarray
    h_uv: np.ndarray
    omega: np.ndarray

    @property
    def n_views(self) -> int:
        return len(self.a)

    @property
    def k(self) -> int:
        return self.a[0].shape[0]

    @property
    def n(self) -> int:
        return self.a[0].shape[1]

    def b(self, t: int) -> np.ndarray:
        """Materialize B_t (M x N)."""
        return self.base * self.h_uv[t][None, :]


def build_sensing_matrices(channels: ChannelSet, codebook: PhaseCodebook) -> SensingMatrixSet:
    if codebook.m != channels.h_sa.shape[0]:
        raise ValueError("codebook columns must match the RIS element count")
    base = channels.gain * (channels.h_sa[:, None] * channels.H_vs.T)
    core = codebook.omega @ base
    mats = []
    for t in range(channels.n_views):
        a_t = core * channels.h_uv[t][None, :]
        a_t.setflags(write=False)
        mats.append(a_t)
    return SensingMatrixSet(a=tuple(mats), base=base, h_uv=channels.h_uv, omega=codebook.omega)


@dataclass(frozen=True)
class MeasurementSet:
    """Noisy measurements y (T, K), total complex noise variance chi2, nominal SNR."""

    y: np.ndarray
    chi2: float
    snr_db: float


def calibrate_noise(sensing: SensingMatrixSet, images, snr_db: float) -> float:
    """Noise variance from the global mean measurement power: chi2 = mean |A x|^2 / 10^(snr/10)."""
    x = np.atleast_2d(np.asarray(images, dtype=float))
    power = float(np.mean([np.mean(np.abs(sensing.a[t] @ x[t]) ** 2) for t in range(sensing.n_views)]))
    if power <= 0.0:
        raise ValueError("cannot calibrate noise for an all-zero signal")
    return power / 10.0 ** (snr_db / 10.0)


def synthesize_measurements(sensing: SensingMatrixSet, images, snr_db: float, seed=0) -> MeasurementSet:
    """y_t = A_t x_t + z_t with circular complex Gaussian noise of total variance chi2.

    snr_db = inf yields noiseless measurements (chi2 = 0).
    """
    x = np.atleast_2d(np.asarray(images, dtype=float))
    if x.shape[0] != sensing.n_views or x.shape[1] != sensing.n:
        raise ValueError("images must have shape (T, N) matching the sensing set")
    clean = np.stack([sensing.a[t] @ x[t] for t in range(sensing.n_views)])
    if np.isinf(snr_db):
        return MeasurementSet(y=clean, chi2=0.0, snr_db=snr_db)
    chi2 = calibrate_noise(sensing, x, snr_db)
    rng = np.random.default_rng(seed)
    scale = math.sqrt(chi2 / 2.0)
    noise = scale * (rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape))
    return MeasurementSet(y=clean + noise, chi2=chi2, snr_db=snr_db)
