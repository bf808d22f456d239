"""Spatial objects for the imaging scenario.

All coordinates and lengths are in wavelength units (lambda = 1). The voxel
grid sits in front of the RIS, which is a uniform planar array in the yOz
plane; range direction is +x, cross-range directions are y and z.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


def point3(p) -> np.ndarray:
    """Coerce to a finite float vector of shape (3,)."""
    a = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError("point must have finite components")
    return a


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, lo <= hi per axis."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", point3(self.lo))
        object.__setattr__(self, "hi", point3(self.hi))
        if not np.all(self.hi > self.lo):
            raise ValueError("box must have positive extent on every axis")

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, p, atol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lo - atol) and np.all(p <= self.hi + atol))


@dataclass(frozen=True)
class VoxelGrid:
    """Uniform cuboid voxel grid: counts (n_x, n_y, n_z), cubic voxels of side voxel_size.

    Linear index runs x-fastest (row-major in (k, j, i) order):
    n = i + n_x * (j + n_y * k). Voxels in the range direction of a voxel are
    therefore its immediate index neighbours.
    """

    center: np.ndarray
    counts: tuple
    voxel_size: float

    def __post_init__(self):
        object.__setattr__(self, "center", point3(self.center))
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != 3 or any(c < 1 for c in counts):
            raise ValueError("counts must be three positive integers")
        object.__setattr__(self, "counts", counts)
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.counts
        return nx * ny * nz

    @property
    def side_lengths(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) * self.voxel_size

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.counts[axis]
        return self.center[axis] + (np.arange(n) - (n - 1) / 2.0) * self.voxel_size

    def ijk_to_index(self, i: int, j: int, k: int) -> int:
        nx, ny, nz = self.counts
        if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
            raise IndexError("voxel index out of range")
        return i + nx * (j + ny * k)

    def index_to_ijk(self, n: int) -> tuple:
        nx, ny, nz = self.counts
        if not 0 <= n < self.n_voxels:
            raise IndexError("voxel index out of range")
        i = n % nx
        j = (n // nx) % ny
        k = n // (nx * ny)
        return i, j, k


def voxel_centers(grid: VoxelGrid) -> np.ndarray:
    """Voxel centers as an (N, 3) array in the documented x-fastest order."""
    xs = grid.axis_coords(0)
    ys = grid.axis_coords(1)
    zs = grid.axis_coords(2)
    zz, yy, xx = np.meshgrid(zs, ys, xs, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])


@dataclass(frozen=True)
class PlanarArray:
    """Uniform planar array in the yOz plane (normal along +x).

    Element m = c + cols * r sits at row r (z axis) and column c (y axis),
    so the linear order runs y-fastest.
    """

    center: np.ndarray
    rows: int
    cols: int
    spacing: float

    def __post_init__(self):
        object.__setattr__(self, "center", point3(self.center))
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be positive")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @property
    def n_elements(self) -> int:
        return self.rows * self.cols

    @property
    def aperture(self) -> float:
        """Aperture size R: span of the larger array dimension."""
        return max(self.rows, self.cols) * self.spacing

    def element_positions(self) -> np.ndarray:
        ys = self.center[1] + (np.arange(self.cols) - (self.cols - 1) / 2.0) * self.spacing
        zs = self.center[2] + (np.arange(self.rows) - (self.rows - 1) / 2.0) * self.spacing
        zz, yy = np.meshgrid(zs, ys, indexing="ij")
        xx = np.full(zz.size, self.center[0])
        return np.column_stack([xx, yy.ravel(), zz.ravel()])


@dataclass(frozen=True)
class Trajectory:
    """UE positions visited in order; consecutive points are exactly `step` apart."""

    positions: np.ndarray
    step: float = 0.0
    region: Box | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError("positions must have shape (T, 3) with T >= 1")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)
        if pos.shape[0] > 1 and self.step > 0:
            gaps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
            if not np.allclose(gaps, self.step, rtol=1e-9, atol=0.0):
                raise ValueError("consecutive positions must be exactly `step` apart")
        if self.region is not None and not all(self.region.contains(p) for p in pos):
            raise ValueError("trajectory leaves the region")

    @property
    def n_positions(self) -> int:
        return self.positions.shape[0]


def random_trajectory(region: Box, n_positions: int, step: float, seed=0) -> Trajectory:
    """Persistent random-direction walk with exact step length inside `region`.

    The start is uniform in the region and the walk keeps its direction until
    a step would exit, in which case direction components are sign-flipped
    (specular bounce) before moving, preserving the exact step length.
    """
    if n_positions < 1:
        raise ValueError("need at least one position")
    if not step > 0:
        raise ValueError("step must be positive")
    if step >= float(np.min(region.extent)):
        raise ValueError("step is larger than the region extent")
    rng = np.random.default_rng(seed)
    pos = region.lo + rng.random(3) * region.extent
    direction = _random_unit(rng)
    path = [pos]
    for _ in range(n_positions - 1):
        pos, direction = _bounce_step(pos, direction, region, step)
        path.append(pos)
    return Trajectory(np.asarray(path), step=step, region=region)


def _random_unit(rng) -> np.ndarray:
    while True:
        v = rng.standard_normal(3)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return v / norm


def _bounce_step(pos, direction, region: Box, step: float):
    # Try the persistent direction first, then sign-flip combinations
    # (fewest flips first) until the step lands inside the region.
    candidates = sorted(itertools.product((1.0, -1.0), repeat=3), key=lambda s: s.count(-1.0))
    for signs in candidates:
        d = direction * signs
        nxt = pos + step * d
        if region.contains(nxt):
            return nxt, d
    raise ValueError("step does not fit inside the region from the current position")


def pairwise_distances(a, b, block: int = 1024) -> np.ndarray:
    """Euclidean distances between two point sets, shape (len(a), len(b)).

    Computed blockwise to bound transient memory for large grids.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != 3 or b.shape[1] != 3 or a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("inputs must be nonempty (P, 3) arrays")
    out = np.empty((a.shape[0], b.shape[0]))
    for start in range(0, a.shape[0], block):
        stop = min(start + block, a.shape[0])
        diff = a[start:stop, None, :] - b[None, :, :]
        out[start:stop] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def subtended_angle_sine(aperture: float, distance: float) -> float:
    """sin(psi/2) for an aperture of size R seen from distance D: R / sqrt(R^2 + 4 D^2)."""
    if not aperture > 0:
        raise ValueError("aperture must be positive")
    if distance < 0:
        raise ValueError("distance must be nonnegative")
    return aperture / math.hypot(aperture, 2.0 * distance)


def diffraction_limits(
    sin_half_psi: float,
    bandwidth: float | None = None,
    carrier: float | None = None,
    wavelength: float = 1.0,
) -> tuple:
    """Range and cross-range diffraction resolution limits.

    delta_range = c / (2 B) expressed in wavelengths (carrier and bandwidth in
    the same frequency unit); unbounded (inf) for a single-frequency system.
    delta_cross = lambda / (2 sin(psi/2)).
    """
    if not 0.0 < sin_half_psi <= 1.0:
        raise ValueError("sin_half_psi must lie in (0, 1]")
    if bandwidth is None:
        delta_range = math.inf
    else:
        if not bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if carrier is None or not carrier > 0:
            raise ValueError("carrier frequency required alongside bandwidth")
        delta_range = wavelength * carrier / (2.0 * bandwidth)
    delta_cross = wavelength / (2.0 * sin_half_psi)
    return delta_range, delta_cross
