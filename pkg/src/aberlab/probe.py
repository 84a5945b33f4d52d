"""Transducer geometry, acquisition constants, pulse model and imaging grid.

Public API units: lengths in mm, times in us, frequencies in MHz, sound
speed in m/s, per-element delay errors in ns. Geometry helpers convert to
SI internally so that mm and m/s never mix by accident.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ValidationError

MM = 1e-3  # mm -> m
US = 1e-6  # us -> s
MHZ = 1e6  # MHz -> Hz
NS = 1e-9  # ns -> s


def round_half(x):
    """Round to nearest integer, halves away from zero for positive input."""
    return np.floor(np.asarray(x) + 0.5).astype(int)


@dataclass(frozen=True)
class TransducerConfig:
    """Linear array description plus the acquisition constants tied to it.

    Parameters
    ----------
    num_elements : int
        Number of array elements.
    pitch : float
        Element center-to-center spacing in mm (element_width + kerf).
    element_width, kerf : float
        Element width and gap in mm.
    center_frequency, sampling_frequency : float
        Pulse center frequency and RF sampling rate in MHz.
    sound_speed : float
        Assumed medium sound speed in m/s.
    f_number : float
        Receive f-number, depth / aperture ratio.
    elevation_focus, element_height : float
        Recorded for completeness; the simulator is 2-D and ignores them.
    """

    num_elements: int = 128
    pitch: float = 0.30
    element_width: float = 0.27
    kerf: float = 0.03
    center_frequency: float = 5.208
    sampling_frequency: float = 20.832
    sound_speed: float = 1540.0
    f_number: float = 1.75
    elevation_focus: float = 20.0
    element_height: float = 5.0

    def __post_init__(self):
        if self.num_elements < 2:
            raise ValidationError("num_elements must be >= 2")
        if abs(self.pitch - (self.element_width + self.kerf)) > 1e-9:
            raise ValidationError("pitch must equal element_width + kerf")
        if self.sampling_frequency < 2 * self.center_frequency:
            raise ValidationError("sampling_frequency below Nyquist for center_frequency")
        if self.f_number <= 0 or self.sound_speed <= 0:
            raise ValidationError("f_number and sound_speed must be positive")

    @property
    def wavelength(self) -> float:
        """Wavelength at the center frequency, in mm."""
        return self.sound_speed / (self.center_frequency * MHZ) / MM

    def element_positions(self) -> np.ndarray:
        """Lateral element center coordinates in mm, centered on x = 0."""
        n = np.arange(self.num_elements)
        return (n - (self.num_elements - 1) / 2) * self.pitch

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TransducerConfig":
        return cls(**json.loads(text))


def default_l11_5v() -> TransducerConfig:
    """Configuration of the 128-element L11-5v linear array used throughout."""
    return TransducerConfig()


def two_way_delay(cfg: TransducerConfig, element_x: float, x, z) -> np.ndarray:
    """Round-trip travel time in us for a flat transmit and one receive element.

    The wavefront reaches depth z after z/c; the echo from (x, z) travels
    back to the element at lateral position element_x.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    path_mm = z + np.sqrt(z**2 + (x - element_x) ** 2)
    return path_mm * MM / cfg.sound_speed / US


def aperture_elements(cfg: TransducerConfig, x: float, z: float) -> tuple[int, int]:
    """Inclusive element index range contributing to pixel (x, z).

    The aperture width is z / f_number, converted to element counts via the
    pitch and centered on the element nearest to x; the result is clipped
    to the physical array.
    """
    if z <= 0:
        raise ValidationError("aperture is undefined for z <= 0")
    n_star = x / cfg.pitch + (cfg.num_elements - 1) / 2
    k = int(np.clip(round_half(n_star), 0, cfg.num_elements - 1))
    width_elements = z / cfg.f_number / cfg.pitch
    half = int(round_half(width_elements / 2))
    lo = max(0, k - half)
    hi = min(cfg.num_elements - 1, k + half)
    return lo, hi


@dataclass(frozen=True)
class Pulse:
    """Gaussian-modulated sinusoid standing in for the full excitation chain.

    fractional_bandwidth is the -6 dB two-way fractional bandwidth of the
    round-trip waveform; the envelope is truncated at +/- 3 sigma and the
    waveform peaks at its temporal center sample.
    """

    center_frequency: float = 5.208
    fractional_bandwidth: float = 0.6
    sample_rate: float = 104.16
    kind: str = "gaussian_modulated_sine"

    def __post_init__(self):
        if not 0 < self.fractional_bandwidth < 2:
            raise ValidationError("fractional_bandwidth must be in (0, 2)")
        if self.kind != "gaussian_modulated_sine":
            raise ValidationError(f"unknown pulse kind {self.kind!r}")

    @property
    def bandwidth(self) -> float:
        """-6 dB two-way bandwidth in MHz."""
        return self.fractional_bandwidth * self.center_frequency

    @property
    def sigma_us(self) -> float:
        """Gaussian envelope standard deviation in us."""
        sigma_f = self.bandwidth / (2 * np.sqrt(2 * np.log(2)))  # MHz
        return 1 / (2 * np.pi * sigma_f)

    def band_edges(self, attenuation_db: float = 20.0) -> tuple[float, float]:
        """Frequency band (MHz) where the spectrum stays above -attenuation_db."""
        sigma_f = self.bandwidth / (2 * np.sqrt(2 * np.log(2)))
        half = sigma_f * np.sqrt(2 * np.log(10 ** (attenuation_db / 20)))
        return max(0.0, self.center_frequency - half), self.center_frequency + half

    def waveform(self) -> np.ndarray:
        """Sampled round-trip waveform, odd length, peak at the center sample."""
        half_n = int(np.ceil(3 * self.sigma_us * self.sample_rate))
        t = np.arange(-half_n, half_n + 1) / self.sample_rate
        envelope = np.exp(-(t**2) / (2 * self.sigma_us**2))
        return np.cos(2 * np.pi * self.center_frequency * t) * envelope


def default_pulse(cfg: TransducerConfig, oversample: int = 5) -> Pulse:
    """Pulse matched to the config, sampled at oversample x sampling_frequency."""
    return Pulse(
        center_frequency=cfg.center_frequency,
        sample_rate=cfg.sampling_frequency * oversample,
    )


@dataclass(frozen=True)
class ImagingGrid:
    """Rectangular imaging grid: rows are axial positions, columns lateral.

    Positions are in mm, strictly increasing with uniform spacing.
    """

    lateral_positions: np.ndarray
    axial_positions: np.ndarray
    column_count: int = field(init=False)
    row_count: int = field(init=False)

    def __post_init__(self):
        lat = np.asarray(self.lateral_positions, dtype=float)
        ax = np.asarray(self.axial_positions, dtype=float)
        object.__setattr__(self, "lateral_positions", lat)
        object.__setattr__(self, "axial_positions", ax)
        object.__setattr__(self, "column_count", lat.size)
        object.__setattr__(self, "row_count", ax.size)
        if lat.size * ax.size == 0:
            raise ValidationError("grid must contain at least one pixel")
        for name, pos in (("lateral", lat), ("axial", ax)):
            if pos.size > 1:
                steps = np.diff(pos)
                if np.any(steps <= 0):
                    raise ValidationError(f"{name} positions must be strictly increasing")
                if np.ptp(steps) > 1e-9:
                    raise ValidationError(f"{name} positions must be uniformly spaced")

    @property
    def lateral_step(self) -> float:
        lat = self.lateral_positions
        return float(lat[1] - lat[0]) if lat.size > 1 else 0.0

    @property
    def axial_step(self) -> float:
        ax = self.axial_positions
        return float(ax[1] - ax[0]) if ax.size > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "x0": float(self.lateral_positions[0]),
            "dx": self.lateral_step,
            "nx": int(self.column_count),
            "z0": float(self.axial_positions[0]),
            "dz": self.axial_step,
            "nz": int(self.row_count),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImagingGrid":
        lat = d["x0"] + d["dx"] * np.arange(d["nx"])
        ax = d["z0"] + d["dz"] * np.arange(d["nz"])
        return cls(lat, ax)


def make_grid(
    cfg: TransducerConfig,
    n_columns: int = 384,
    lateral_span: float = 45.0,
    z_start: float = 10.0,
    z_stop: float = 50.0,
    dz: float | None = None,
) -> ImagingGrid:
    """Build a grid centered on the array.

    The default axial step matches the RF sample spacing c / (2 fs) so that
    one image row corresponds to one RF sample of round-trip time.
    """
    if dz is None:
        dz = cfg.sound_speed / (2 * cfg.sampling_frequency * MHZ) / MM
    dx = lateral_span / n_columns
    lat = (np.arange(n_columns) - (n_columns - 1) / 2) * dx
    n_rows = int(np.floor((z_stop - z_start) / dz)) + 1
    ax = z_start + dz * np.arange(n_rows)
    return ImagingGrid(lat, ax)
