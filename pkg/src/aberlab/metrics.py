"""Image quality metrics: contrast, speckle SNR, gCNR and lateral FWHM.

All metrics operate on the linear-domain envelope, before any log
compression. Regions are rasterized on the imaging grid by testing pixel
centers against the geometry.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .probe import ImagingGrid

CONTRAST_CAP_DB = 100.0
GCNR_BINS = 256


@dataclass(frozen=True)
class RegionSpec:
    """Disk target with an annulus (or rectangle) background.

    The annulus spans annulus_factors times the target radius. When
    background_rect (x0, x1, z0, z1) is given it replaces the annulus.
    """

    center: tuple[float, float]  # (x, z) mm
    radius: float  # mm
    annulus_factors: tuple[float, float] = (1.1, 1.5)
    background_rect: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ValidationError("radius must be positive")
        f0, f1 = self.annulus_factors
        if not 1.0 < f0 < f1:
            raise ValidationError("annulus factors must satisfy 1 < inner < outer")

    def _dist2(self, grid: ImagingGrid) -> np.ndarray:
        xx, zz = np.meshgrid(grid.lateral_positions, grid.axial_positions)
        return (xx - self.center[0]) ** 2 + (zz - self.center[1]) ** 2

    def target_mask(self, grid: ImagingGrid) -> np.ndarray:
        return self._dist2(grid) <= self.radius**2

    def background_mask(self, grid: ImagingGrid) -> np.ndarray:
        if self.background_rect is not None:
            x0, x1, z0, z1 = self.background_rect
            xx, zz = np.meshgrid(grid.lateral_positions, grid.axial_positions)
            mask = (xx >= x0) & (xx <= x1) & (zz >= z0) & (zz <= z1)
            if np.any(mask & self.target_mask(grid)):
                raise ValidationError("background rectangle overlaps the target disk")
            return mask
        d2 = self._dist2(grid)
        f0, f1 = self.annulus_factors
        return (d2 >= (f0 * self.radius) ** 2) & (d2 <= (f1 * self.radius) ** 2)


def rect_mask(grid: ImagingGrid, rect: tuple[float, float, float, float]) -> np.ndarray:
    x0, x1, z0, z1 = rect
    xx, zz = np.meshgrid(grid.lateral_positions, grid.axial_positions)
    return (xx >= x0) & (xx <= x1) & (zz >= z0) & (zz <= z1)


def _region_values(env: np.ndarray, mask: np.ndarray, name: str) -> np.ndarray:
    vals = np.asarray(env, dtype=float)[mask]
    if vals.size == 0:
        raise ValidationError(f"{name} region contains no pixels")
    return vals


def contrast(env: np.ndarray, grid: ImagingGrid, region: RegionSpec,
             cap_db: float = CONTRAST_CAP_DB) -> float:
    """-20 log10(mean_target / mean_background) in dB, positive for dark targets.

    An exactly zero target mean is reported as cap_db with a warning rather
    than +inf.
    """
    mu_t = _region_values(env, region.target_mask(grid), "target").mean()
    mu_b = _region_values(env, region.background_mask(grid), "background").mean()
    if mu_b <= 0:
        raise NumericalError("background mean must be positive")
    if mu_t == 0:
        warnings.warn("target mean is zero; contrast capped")
        return cap_db
    return float(-20 * np.log10(mu_t / mu_b))


def speckle_snr(env: np.ndarray, grid: ImagingGrid,
                background_rect: tuple[float, float, float, float]) -> float:
    """Mean over standard deviation of the envelope inside a rectangle."""
    vals = _region_values(env, rect_mask(grid, background_rect), "background")
    std = vals.std()
    if std == 0:
        raise NumericalError("speckle SNR undefined for a constant region")
    return float(vals.mean() / std)


def gcnr_samples(target: np.ndarray, background: np.ndarray,
                 bins: int = GCNR_BINS) -> float:
    """Histogram overlap estimate of gCNR for two pixel populations."""
    t = np.asarray(target, dtype=float).ravel()
    b = np.asarray(background, dtype=float).ravel()
    if t.size == 0 or b.size == 0:
        raise ValidationError("gCNR regions must be nonempty")
    if min(t.size, b.size) < 100:
        warnings.warn("gCNR region smaller than 100 pixels; estimate is noisy")
    lo = min(t.min(), b.min())
    hi = max(t.max(), b.max())
    if hi <= lo:
        return 0.0  # all values identical: total overlap
    ht, _ = np.histogram(t, bins=bins, range=(lo, hi))
    hb, _ = np.histogram(b, bins=bins, range=(lo, hi))
    overlap = np.minimum(ht / t.size, hb / b.size).sum()
    return float(1 - overlap)


def gcnr(env: np.ndarray, grid: ImagingGrid, region: RegionSpec,
         bins: int = GCNR_BINS) -> float:
    """Generalized contrast-to-noise ratio between target and background."""
    t = _region_values(env, region.target_mask(grid), "target")
    b = _region_values(env, region.background_mask(grid), "background")
    return gcnr_samples(t, b, bins)


def fwhm_lateral(env: np.ndarray, grid: ImagingGrid, point: tuple[float, float],
                 span: float = 4.0) -> float:
    """Lateral full width at half maximum of a point target, in mm.

    The profile is taken on the row holding the local envelope maximum
    within +/- 1 mm axially of the point, restricted to +/- span around the
    target. Raises if either half-max crossing is not reached inside the
    span, which marks targets too degraded to measure.
    """
    env = np.asarray(env, dtype=float)
    x, z = point
    lat = grid.lateral_positions
    ax = grid.axial_positions
    if not (lat[0] <= x <= lat[-1] and ax[0] <= z <= ax[-1]):
        raise ValidationError("point outside the imaging grid")

    col = int(np.argmin(np.abs(lat - x)))
    row_sel = np.nonzero(np.abs(ax - z) <= 1.0)[0]
    row = row_sel[np.argmax(env[row_sel, col])]

    win = np.nonzero(np.abs(lat - x) <= span)[0]
    profile = env[row, win]
    xs = lat[win]
    peak = int(np.argmax(profile))
    half = profile[peak] / 2

    def cross(direction: int) -> float:
        i = peak
        while 0 <= i + direction < profile.size:
            j = i + direction
            if profile[j] < half:
                frac = (profile[i] - half) / (profile[i] - profile[j])
                return xs[i] + frac * (xs[j] - xs[i])
            i = j
        raise NumericalError("half maximum not reached inside the span")

    return float(cross(+1) - cross(-1))
