"""Physical-optics RCS of a pixelated flat PEC plate.

The plate lies in the xOy plane; the incident wave arrives along -z and the
observation direction rotates in the xOz plane. Elevation angles are measured
from the plate normal (+z), signed by their x component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Plate:
    """Rectangular plate of size size_x by size_y split into pixel_x by pixel_y pixels."""

    size_x: float
    size_y: float
    pixel_x: float
    pixel_y: float

    def __post_init__(self):
        for v in (self.size_x, self.size_y, self.pixel_x, self.pixel_y):
            if not v > 0:
                raise ValueError("plate and pixel sides must be positive")
        for size, pix in ((self.size_x, self.pixel_x), (self.size_y, self.pixel_y)):
            ratio = size / pix
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError("pixel side must divide the plate side")

    @property
    def counts(self) -> tuple:
        return int(round(self.size_x / self.pixel_x)), int(round(self.size_y / self.pixel_y))

    @property
    def n_pixels(self) -> int:
        cx, cy = self.counts
        return cx * cy

    @property
    def pixel_area(self) -> float:
        return self.pixel_x * self.pixel_y

    def pixel_centers(self) -> np.ndarray:
        cx, cy = self.counts
        xs = (np.arange(cx) + 0.5) * self.pixel_x - self.size_x / 2.0
        ys = (np.arange(cy) + 0.5) * self.pixel_y - self.size_y / 2.0
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])


@dataclass(frozen=True)
class FarFieldObservation:
    """Shared observation angles for every pixel, tx/rx placed at `standoff` along them."""

    theta_tx: float
    theta_rx: float
    standoff: float = 1e6

    def positions(self) -> tuple:
        tx = self.standoff * np.array([math.sin(self.theta_tx), 0.0, math.cos(self.theta_tx)])
        rx = self.standoff * np.array([math.sin(self.theta_rx), 0.0, math.cos(self.theta_rx)])
        return tx, rx


@dataclass(frozen=True)
class NearFieldObservation:
    """Explicit tx/rx positions; per-pixel angles and distances are derived."""

    tx_position: np.ndarray
    rx_position: np.ndarray

    def positions(self) -> tuple:
        return (
            np.asarray(self.tx_position, dtype=float).reshape(3),
            np.asarray(self.rx_position, dtype=float).reshape(3),
        )


def _sa(x):
    """Sampling function sin(x)/x with Sa(0) = 1."""
    return np.sinc(np.asarray(x) / np.pi)


def pixel_rcs(pixel_area, wavelength, theta_tx, theta_rx, pixel_x):
    """Physical-optics RCS of one flat pixel.

    sigma = (4 pi A_p^2 / lambda^2) cos^2(theta_tx)
            * Sa^2((kappa xi_px / 2)(sin theta_rx + sin theta_tx)).
    """
    if np.any(np.asarray(pixel_area) <= 0):
        raise ValueError("pixel_area must be positive")
    kappa = 2.0 * np.pi / wavelength
    arg = 0.5 * kappa * pixel_x * (np.sin(theta_rx) + np.sin(theta_tx))
    return (4.0 * np.pi * pixel_area**2 / wavelength**2) * np.cos(theta_tx) ** 2 * _sa(arg) ** 2


def _signed_elevation(points, target):
    """Signed elevation (from +z, sign of the x direction cosine) and distance per point."""
    v = target[None, :] - points
    d = np.linalg.norm(v, axis=1)
    theta = np.arctan2(v[:, 0], v[:, 2])
    return theta, d


def aggregate_rcs(plate: Plate, observation, wavelength: float = 1.0, anisotropic: bool = True) -> float:
    """Coherent pixel-sum RCS: | sum_n sqrt(sigma_n) exp(-j 2 pi (d_tx + d_rx) / lambda) |^2.

    With anisotropic=False every pixel uses its broadside RCS (theta = 0), the
    isotropic-scatterer assumption; phases always use exact path lengths.
    """
    centers = plate.pixel_centers()
    tx, rx = observation.positions()
    theta_tx_pp, d_tx = _signed_elevation(centers, tx)
    theta_rx_pp, d_rx = _signed_elevation(centers, rx)
    if isinstance(observation, FarFieldObservation):
        # Far-field pixels share the global angles; only path lengths differ.
        theta_tx_pp = np.full(centers.shape[0], observation.theta_tx)
        theta_rx_pp = np.full(centers.shape[0], observation.theta_rx)
    if not anisotropic:
        theta_tx_pp = np.zeros(centers.shape[0])
        theta_rx_pp = np.zeros(centers.shape[0])
    sigma = pixel_rcs(plate.pixel_area, wavelength, theta_tx_pp, theta_rx_pp, plate.pixel_x)
    phases = np.exp(-2j * np.pi * (d_tx + d_rx) / wavelength)
    return float(np.abs(np.sum(np.sqrt(sigma) * phases)) ** 2)


def rcs_sweep(plate: Plate, angles_rad, wavelength: float = 1.0, anisotropic: bool = True) -> np.ndarray:
    """Aggregate RCS versus scattering angle at broadside incidence (theta_tx = 0)."""
    return np.array(
        [
            aggregate_rcs(plate, FarFieldObservation(0.0, float(th)), wavelength, anisotropic)
            for th in np.asarray(angles_rad, dtype=float)
        ]
    )


def fluctuation_sweep(pixel_size: float, angle_range=(-np.pi / 2, np.pi / 2), num: int = 361, wavelength: float = 1.0) -> float:
    """Max-to-min single-pixel RCS fluctuation (dB) over scattering angles at theta_tx = 0.

    Returns inf when the pixel pattern has a null inside the range.
    """
    if not pixel_size > 0:
        raise ValueError("pixel_size must be positive")
    thetas = np.linspace(angle_range[0], angle_range[1], num)
    area = pixel_size * pixel_size
    vals = pixel_rcs(area, wavelength, 0.0, thetas, pixel_size)
    lo = float(np.min(vals))
    hi = float(np.max(vals))
    if lo <= 0.0:
        return math.inf
    return 10.0 * math.log10(hi / lo)


def broadside_plate_rcs(size_x: float, size_y: float, wavelength: float = 1.0) -> float:
    """Closed-form PO RCS of a flat plate at monostatic broadside: 4 pi (xi_x xi_y)^2 / lambda^2."""
    return 4.0 * math.pi * (size_x * size_y) ** 2 / wavelength**2
