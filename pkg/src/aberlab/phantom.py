"""Scatterer phantom construction.

A phantom is a cloud of point scatterers (positions in mm, nonnegative
amplitudes). Echogenicity is shaped by weighting amplitudes inside masks,
sampling grayscale templates, or appending bright point targets.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .probe import MHZ, MM, Pulse, TransducerConfig

DEFAULT_EXTENT = (45.0, 40.0, 10.0)  # lateral, axial, start depth (mm)

HYPO_RANGE_DB = (-12.0, -3.0)
HYPER_RANGE_DB = (3.0, 12.0)
POINT_COUNT_RANGE = (10, 20)
POINT_LEVEL_RANGE_DB = (12.0, 16.0)


@dataclass(frozen=True)
class Phantom:
    """Scatterer cloud: positions (k, 2) as (x, z) mm, amplitudes (k,)."""

    positions: np.ndarray
    amplitudes: np.ndarray
    extent: tuple[float, float, float] = DEFAULT_EXTENT
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        amp = np.asarray(self.amplitudes, dtype=float)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "extent", tuple(float(v) for v in self.extent))
        if pos.shape[0] != amp.shape[0]:
            raise ValidationError("positions and amplitudes must have equal length")
        if pos.size and pos.shape[1] != 2:
            raise ValidationError("positions must be (k, 2)")
        if amp.size and (not np.all(np.isfinite(amp)) or np.any(amp < 0)):
            raise ValidationError("amplitudes must be finite and >= 0")

    @property
    def count(self) -> int:
        return self.amplitudes.size

    def header_dict(self) -> dict:
        return {
            "count": int(self.count),
            "extent_mm": list(self.extent),
            "meta": self.meta,
        }


def resolution_cell_mm2(cfg: TransducerConfig, pulse: Pulse, extent=DEFAULT_EXTENT) -> float:
    """Resolution cell area: axial c/(2B) times lateral lambda*F at mid depth.

    At depths where the f-number aperture would exceed the physical array
    the effective f-number (and the lateral cell) grows accordingly.
    """
    axial_mm = cfg.sound_speed / (2 * pulse.bandwidth * MHZ) / MM
    z_mid = extent[2] + extent[1] / 2
    f_eff = max(cfg.f_number, z_mid / (cfg.num_elements * cfg.pitch))
    lateral_mm = cfg.wavelength * f_eff
    return axial_mm * lateral_mm


def uniform_speckle(
    extent: tuple[float, float, float],
    density_per_cell: float,
    cfg: TransducerConfig,
    pulse: Pulse,
    seed: int,
) -> Phantom:
    """Uniformly distributed scatterers at the requested density per resolution cell.

    Amplitudes are magnitudes of unit normal draws, which yields fully
    developed speckle once the density is sufficient.
    """
    if density_per_cell <= 0:
        raise ValidationError("density_per_cell must be > 0")
    lateral, axial, z0 = extent
    area = lateral * axial
    count = int(round(density_per_cell * area / resolution_cell_mm2(cfg, pulse, extent)))
    rng = np.random.default_rng(seed)
    x = rng.uniform(-lateral / 2, lateral / 2, count)
    z = rng.uniform(z0, z0 + axial, count)
    amp = np.abs(rng.standard_normal(count))
    return Phantom(np.column_stack([x, z]), amp, extent)


def _bilinear_sample(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample img at fractional pixel coordinates (u: row, v: col), edge-clamped."""
    rows, cols = img.shape
    u = np.clip(u, 0, rows - 1)
    v = np.clip(v, 0, cols - 1)
    u0 = np.clip(np.floor(u).astype(int), 0, rows - 2) if rows > 1 else np.zeros_like(u, int)
    v0 = np.clip(np.floor(v).astype(int), 0, cols - 2) if cols > 1 else np.zeros_like(v, int)
    du = u - u0
    dv = v - v0
    top = img[u0, v0] * (1 - dv) + img[u0, np.minimum(v0 + 1, cols - 1)] * dv
    bot = img[np.minimum(u0 + 1, rows - 1), v0] * (1 - dv)
    bot = bot + img[np.minimum(u0 + 1, rows - 1), np.minimum(v0 + 1, cols - 1)] * dv
    return top * (1 - du) + bot * du


def _sample_field(phantom: Phantom, img: np.ndarray) -> np.ndarray:
    """Sample a [0, 1] field stretched over the phantom extent at each scatterer."""
    lateral, axial, z0 = phantom.extent
    x = phantom.positions[:, 0]
    z = phantom.positions[:, 1]
    u = (z - z0) / axial * (img.shape[0] - 1)
    v = (x + lateral / 2) / lateral * (img.shape[1] - 1)
    return _bilinear_sample(np.asarray(img, dtype=float), u, v)


def equalize_template(img: np.ndarray, bins: int = 256) -> np.ndarray:
    """Histogram-equalize a grayscale image to [0, 1] and harden the extremes.

    Values below 0.1 are forced to 0 and above 0.9 to 1, which deepens
    anechoic-like and bright structures when the template weights scatterers.
    """
    flat = np.asarray(img, dtype=float).ravel()
    lo, hi = flat.min(), flat.max()
    if hi <= lo:
        out = np.zeros_like(np.asarray(img, dtype=float))
    else:
        hist, edges = np.histogram(flat, bins=bins, range=(lo, hi))
        cdf = np.cumsum(hist).astype(float)
        cdf /= cdf[-1]
        idx = np.clip(np.digitize(flat, edges[1:-1]), 0, bins - 1)
        out = cdf[idx].reshape(np.asarray(img).shape)
    out = np.where(out < 0.1, 0.0, out)
    out = np.where(out > 0.9, 1.0, out)
    return out


@dataclass(frozen=True)
class EchoRegionSpec:
    """Echogenicity modifier applied to a phantom.

    kind is one of anechoic, hypoechoic, hyperechoic, template_image,
    point_targets. Mask kinds weigh scatterer amplitudes inside
    mask_or_image (a [0, 1] field stretched over the phantom extent);
    point_targets appends bright isolated scatterers.
    """

    kind: str
    mask_or_image: np.ndarray | None = None
    level_range_db: tuple[float, float] | None = None
    count_range: tuple[int, int] = POINT_COUNT_RANGE
    point_level_range_db: tuple[float, float] = POINT_LEVEL_RANGE_DB

    _KINDS = ("anechoic", "hypoechoic", "hyperechoic", "template_image", "point_targets")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValidationError(f"unknown region kind {self.kind!r}")
        if self.kind in ("anechoic", "hypoechoic", "hyperechoic", "template_image"):
            if self.mask_or_image is None:
                raise ValidationError(f"{self.kind} region needs mask_or_image")

    def weight_range(self) -> tuple[float, float]:
        db = self.level_range_db
        if db is None:
            db = HYPO_RANGE_DB if self.kind == "hypoechoic" else HYPER_RANGE_DB
        return 10 ** (db[0] / 10), 10 ** (db[1] / 10)


def apply_region(phantom: Phantom, spec: EchoRegionSpec, seed: int) -> Phantom:
    """Return a new phantom with the region applied.

    Mask kinds only modify amplitudes; point_targets appends scatterers.
    An empty mask intersection leaves the phantom unchanged with a warning.
    """
    rng = np.random.default_rng(seed)
    pos = phantom.positions
    amp = phantom.amplitudes.copy()

    if spec.kind == "point_targets":
        count = int(rng.integers(spec.count_range[0], spec.count_range[1] + 1))
        lateral, axial, z0 = phantom.extent
        x = rng.uniform(-lateral / 2, lateral / 2, count)
        z = rng.uniform(z0, z0 + axial, count)
        level_db = rng.uniform(*spec.point_level_range_db, count)
        base = amp.mean() if amp.size else 1.0
        new_amp = base * 10 ** (level_db / 10)
        return Phantom(
            np.vstack([pos, np.column_stack([x, z])]),
            np.concatenate([amp, new_amp]),
            phantom.extent,
            dict(phantom.meta, point_targets=np.column_stack([x, z]).tolist()),
        )

    if spec.kind == "template_image":
        weights = _sample_field(phantom, equalize_template(spec.mask_or_image))
        return Phantom(pos, amp * weights, phantom.extent, phantom.meta)

    inside = _sample_field(phantom, spec.mask_or_image) > 0.5
    if not np.any(inside):
        warnings.warn("region mask does not intersect any scatterer; phantom unchanged")
        return phantom
    if spec.kind == "anechoic":
        weight = 0.0
    else:
        weight = rng.uniform(*spec.weight_range())
    amp[inside] *= weight
    return Phantom(pos, amp, phantom.extent, phantom.meta)


def _zero_disk(phantom: Phantom, center: tuple[float, float], radius: float) -> Phantom:
    d2 = np.sum((phantom.positions - np.asarray(center)) ** 2, axis=1)
    amp = phantom.amplitudes.copy()
    amp[d2 <= radius**2] = 0.0
    return Phantom(phantom.positions, amp, phantom.extent, phantom.meta)


def contrast_test_phantom(
    cfg: TransducerConfig,
    seed: int,
    pulse: Pulse | None = None,
    density_per_cell: float = 60.0,
    extent: tuple[float, float, float] = DEFAULT_EXTENT,
) -> Phantom:
    """Speckle phantom with two anechoic cysts on the array axis.

    Cyst diameters are 10 mm and 15 mm with centers at 10 mm and 28 mm
    depth from the transducer face. Cysts outside the requested extent are
    simply clipped.
    """
    if pulse is None:
        pulse = Pulse(center_frequency=cfg.center_frequency,
                      sample_rate=cfg.sampling_frequency)
    ph = uniform_speckle(extent, density_per_cell, cfg, pulse, seed)
    cysts = [((0.0, 10.0), 5.0), ((0.0, 28.0), 7.5)]
    for center, radius in cysts:
        ph = _zero_disk(ph, center, radius)
    meta = dict(ph.meta)
    meta["cysts"] = [{"center_mm": list(c), "radius_mm": r} for c, r in cysts]
    return Phantom(ph.positions, ph.amplitudes, ph.extent, meta)


def resolution_test_phantom(cfg: TransducerConfig, seed: int = 0) -> Phantom:
    """19 unit point targets: a central vertical line plus two horizontal lines.

    The vertical line runs from 12 mm to 38 mm depth at x = 0; horizontal
    lines sit at 10 mm and 30 mm depth. Lateral neighbor spacing is at
    least 4 mm so the lateral width of each target can be measured in
    isolation. The layout is stored in meta for reproducibility.
    """
    vertical = [(0.0, z) for z in np.linspace(12.0, 38.0, 7)]
    xs = [-13.5, -9.0, -4.5, 4.5, 9.0, 13.5]
    horizontal = [(x, 10.0) for x in xs] + [(x, 30.0) for x in xs]
    points = vertical + horizontal
    pos = np.asarray(points, dtype=float)
    amp = np.ones(len(points))
    meta = {"point_targets": pos.tolist()}
    return Phantom(pos, amp, DEFAULT_EXTENT, meta)


def phantom_header_json(phantom: Phantom) -> str:
    return json.dumps(phantom.header_dict(), indent=2)
