"""Delay-and-sum reconstruction of single plane-wave channel data.

Receive delay errors can be injected or compensated through the rx_profile
argument: the per-pixel sample lookup time is the geometric round trip plus
the element's delay error. Lookups outside the recorded window contribute
zero and are flagged in the image provenance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aberration import AberrationProfile
from .errors import ValidationError
from .probe import MM, NS, US, ImagingGrid, TransducerConfig, round_half
from .wavesim import ChannelData

APODIZATIONS = ("rect", "hann")


@dataclass(frozen=True)
class RfImage:
    """Beamformed RF grid [axial row, lateral column] plus its grid."""

    samples: np.ndarray
    grid: ImagingGrid
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", s)
        if s.shape != (self.grid.row_count, self.grid.column_count):
            raise ValidationError("image shape must match the grid")
        if not np.all(np.isfinite(s)):
            raise ValidationError("image samples must be finite")


def _rx_delays_us(cfg: TransducerConfig, rx_profile: AberrationProfile | None) -> np.ndarray:
    if rx_profile is None:
        return np.zeros(cfg.num_elements)
    if rx_profile.delays.size != cfg.num_elements:
        raise ValidationError("profile length must match element count")
    return rx_profile.delays * NS / US


def _column_geometry(cfg: TransducerConfig, grid: ImagingGrid, column: int):
    """Per-column aperture bookkeeping: nearest element and half-width per row."""
    x = grid.lateral_positions[column]
    z = grid.axial_positions
    n_el = cfg.num_elements
    k = int(np.clip(round_half(x / cfg.pitch + (n_el - 1) / 2), 0, n_el - 1))
    half = round_half(z / cfg.f_number / cfg.pitch / 2)
    return x, z, k, half


def _aligned_column(
    channel: ChannelData,
    cfg: TransducerConfig,
    grid: ImagingGrid,
    column: int,
    rx_delays_us: np.ndarray,
    apodization: str = "rect",
):
    """Aligned (rows, elements) stack for one image column.

    Returns the stack, the in-aperture weight matrix already applied to it,
    and whether any in-aperture lookup fell outside the recorded window.
    """
    x, z, k, half = _column_geometry(cfg, grid, column)
    n_el = cfg.num_elements
    xe = cfg.element_positions()
    n = np.arange(n_el)[None, :]
    offset = n - k
    mask = np.abs(offset) <= half[:, None]

    tau = (z[:, None] + np.sqrt(z[:, None] ** 2 + (x - xe[None, :]) ** 2)) * MM / cfg.sound_speed / US
    tau = tau + rx_delays_us[None, :]
    u = (tau - channel.t0) * channel.sample_rate
    i0 = np.floor(u).astype(np.int64)
    valid = (i0 >= 0) & (i0 <= channel.num_samples - 2)
    i0c = np.clip(i0, 0, channel.num_samples - 2)
    w = u - i0
    rows = np.broadcast_to(n, u.shape)
    vals = channel.samples[rows, i0c] * (1 - w) + channel.samples[rows, i0c + 1] * w

    if apodization == "rect":
        weights = mask.astype(float)
    elif apodization == "hann":
        weights = np.where(
            mask, 0.5 * (1 + np.cos(np.pi * offset / (half[:, None] + 1))), 0.0
        )
    else:
        raise ValidationError(f"unknown apodization {apodization!r}")
    truncated = bool(np.any(mask & ~valid))
    stack = np.where(valid, vals, 0.0) * weights
    return stack, weights, truncated


def das(
    channel: ChannelData,
    cfg: TransducerConfig,
    grid: ImagingGrid,
    rx_profile: AberrationProfile | None = None,
    apodization: str = "rect",
) -> RfImage:
    """Delay-and-sum image of single plane-wave channel data.

    The aperture at each pixel is set by the f-number; sample lookups use
    linear interpolation in time.
    """
    delays = _rx_delays_us(cfg, rx_profile)
    img = np.empty((grid.row_count, grid.column_count))
    truncated = False
    for col in range(grid.column_count):
        stack, _, trunc = _aligned_column(channel, cfg, grid, col, delays, apodization)
        img[:, col] = stack.sum(axis=1)
        truncated |= trunc
    prov = {
        "method": "das",
        "apodization": apodization,
        "rx_profile_rms_ns": float(np.sqrt(np.mean((delays * US / NS) ** 2))),
        "edge_truncated": truncated,
    }
    if channel.tx_aberration is not None:
        prov["tx_profile_rms_ns"] = float(
            np.sqrt(np.mean(channel.tx_aberration.delays**2))
        )
    return RfImage(img, grid, prov)


def das_channelwise(
    channel: ChannelData,
    cfg: TransducerConfig,
    grid: ImagingGrid,
    column: int,
    rx_profile: AberrationProfile | None = None,
) -> np.ndarray:
    """Pre-sum aligned channel stack (rows, elements) for one image column.

    Summing over the element axis reproduces the matching das column.
    """
    delays = _rx_delays_us(cfg, rx_profile)
    stack, _, _ = _aligned_column(channel, cfg, grid, column, delays, "rect")
    return stack
