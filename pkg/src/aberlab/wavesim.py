"""Full-synthetic-aperture RF simulation and plane-wave synthesis.

The simulator uses a point-scatterer impulse model: every (transmit,
receive) element pair records the pulse delayed by the round-trip travel
time and scaled by spherical spreading 1/(d_tx * d_rx). Fractional delays
are laid down on an oversampled time axis and decimated to the acquisition
rate through a windowed-sinc low-pass.

Elements are points by default. For image-quality work enable directivity
(far-field element factor) and sub-element sampling: at this array's
pitch-to-wavelength ratio near one, a single point per element
undersamples the aperture integral and leaves a clutter trail below every
scatterer that finite-width elements do not produce.

Plane-wave channel data is synthesized by summing all transmit rows,
optionally advancing each row by a per-element delay error to emulate an
aberrated (asynchronous) transmission.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.signal import fftconvolve, resample_poly

from .aberration import AberrationProfile
from .errors import ValidationError
from .phantom import Phantom
from .probe import MHZ, MM, NS, US, Pulse, TransducerConfig, default_pulse


@dataclass(frozen=True)
class SimOptions:
    """Knobs for simulate_fsa.

    oversample is the ratio between the simulation and acquisition sample
    rates. time_margin_us pads the recorded window on both sides so that
    later per-element time shifts stay inside it. time_window_us, when
    given, fixes the recorded window explicitly (start, stop).
    subelements > 1 samples each element aperture at that many sub-points
    (both ways, preserving reciprocity to floating-point precision).
    """

    oversample: int = 5
    time_margin_us: float = 0.6
    directivity: bool = False
    subelements: int = 1
    time_window_us: tuple[float, float] | None = None


@dataclass(frozen=True)
class FsaData:
    """Full synthetic aperture tensor [tx, rx, time] at the acquisition rate."""

    samples: np.ndarray
    t0: float  # us of the first sample
    sample_rate: float  # MHz
    margin_us: float = 0.0  # zero-content guard band on each side

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 3 or s.shape[0] != s.shape[1]:
            raise ValidationError("FSA samples must be (n, n, t)")
        object.__setattr__(self, "samples", s)

    @property
    def num_elements(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[2]


@dataclass(frozen=True)
class ChannelData:
    """Single plane-wave receive data [rx, time]."""

    samples: np.ndarray
    t0: float
    sample_rate: float
    margin_us: float = 0.0
    tx_aberration: AberrationProfile | None = None

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2:
            raise ValidationError("channel samples must be (n, t)")
        object.__setattr__(self, "samples", s)

    @property
    def num_elements(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]


@njit(cache=True)
def _deposit(buf, samp_tx, fac_tx, samp_rx, fac_rx, amps, t0_idx):
    """Scatter one transmit sub-element's arrivals into the receive buffer.

    Linear-interpolation two-tap deposits; fixed (row, scatterer) order
    keeps accumulation deterministic.
    """
    n_rx, n_k = samp_rx.shape
    for r in range(n_rx):
        for k in range(n_k):
            u = samp_tx[k] + samp_rx[r, k] - t0_idx
            i = int(u)
            w = u - i
            a = amps[k] * (fac_tx[k] * fac_rx[r, k])
            buf[r, i] += a * (1.0 - w)
            buf[r, i + 1] += a * w


def simulate_fsa(
    phantom: Phantom,
    cfg: TransducerConfig,
    pulse: Pulse | None = None,
    options: SimOptions = SimOptions(),
) -> FsaData:
    """Simulate the full synthetic aperture scan of a phantom.

    For each transmit element m and receive element n the trace is the sum
    over scatterers of the pulse delayed by (d_mk + d_nk)/c and scaled by
    amplitude / (d_mk * d_nk), with optional element factors. Deterministic;
    symmetric under swapping m and n (bit for bit with subelements == 1,
    floating-point exact otherwise).
    """
    if phantom.count == 0:
        raise ValidationError("phantom has no scatterers")
    if options.subelements < 1:
        raise ValidationError("subelements must be >= 1")
    if pulse is None:
        pulse = default_pulse(cfg, options.oversample)
    over = options.oversample
    fs_os = cfg.sampling_frequency * over * MHZ  # Hz
    if abs(pulse.sample_rate - cfg.sampling_frequency * over) > 1e-9:
        raise ValidationError("pulse sample_rate must be oversample * sampling_frequency")

    n_el = cfg.num_elements
    sub = options.subelements
    xe = cfg.element_positions() * MM  # m
    if sub > 1:
        width_m = cfg.element_width * MM
        offsets = (np.arange(sub) - (sub - 1) / 2) * (width_m / sub)
        xe = (xe[:, None] + offsets[None, :]).ravel()
    pos = phantom.positions * MM
    amps = phantom.amplitudes
    c = cfg.sound_speed

    dx = pos[:, 0][None, :] - xe[:, None]  # (n_sub, k)
    dist = np.sqrt(dx**2 + pos[:, 1][None, :] ** 2)  # m
    travel_s = dist / c

    wave = pulse.waveform()
    half = (wave.size - 1) // 2
    pulse_half_s = half / fs_os
    margin_s = options.time_margin_us * US

    t_lo = 2 * travel_s.min() - pulse_half_s - margin_s
    t_hi = 2 * travel_s.max() + pulse_half_s + margin_s
    if options.time_window_us is not None:
        w0, w1 = options.time_window_us
        if w0 * US > t_lo or w1 * US < t_hi:
            raise ValidationError("requested time window does not contain all echoes")
        t_lo, t_hi = w0 * US, w1 * US
    t0_idx = int(np.floor(t_lo * fs_os))
    n_os = int(np.ceil(t_hi * fs_os)) - t0_idx + 1
    n_os += (-n_os) % over  # decimate cleanly
    t0 = t0_idx / fs_os

    factor = 1.0 / dist
    if options.directivity:
        # far-field element factor: obliquity cosine times the width sinc of
        # the (sub-)element aperture
        cos_t = pos[:, 1][None, :] * factor
        sin_t = dx * factor
        width_wavelengths = cfg.element_width * MM * cfg.center_frequency * MHZ / (c * sub)
        factor = factor * cos_t * np.sinc(width_wavelengths * sin_t)
    factor = factor / sub
    samp_idx = travel_s * fs_os  # fractional sample index of one-way travel

    out = np.empty((n_el, n_el, n_os // over))
    for m in range(n_el):
        buf = np.zeros((n_el * sub, n_os))
        for s in range(sub):
            ms = m * sub + s
            _deposit(buf, samp_idx[ms], factor[ms], samp_idx, factor, amps,
                     float(t0_idx))
        if sub > 1:
            buf = buf.reshape(n_el, sub, n_os).sum(axis=1)
        rf_os = fftconvolve(buf, wave[None, :], mode="full")[:, half : half + n_os]
        out[m] = resample_poly(rf_os, up=1, down=over, axis=1)

    return FsaData(out, t0 / US, cfg.sampling_frequency, options.time_margin_us)


def _shift_block(data: np.ndarray, shift_samples: float) -> np.ndarray:
    """Advance every row of (rows, t) data by a fractional sample count.

    Output column t reads data column t + shift with linear interpolation;
    reads past either end contribute zero. A zero shift is an exact copy.
    """
    n_t = data.shape[-1]
    if shift_samples == 0.0:
        return data.copy()
    out = np.zeros_like(data)
    i0 = int(np.floor(shift_samples))
    w = shift_samples - i0
    for offset, weight in ((i0, 1 - w), (i0 + 1, w)):
        if weight == 0.0:
            continue
        dst_lo = max(0, -offset)
        dst_hi = min(n_t, n_t - offset)
        if dst_lo < dst_hi:
            out[..., dst_lo:dst_hi] += weight * data[..., dst_lo + offset : dst_hi + offset]
    return out


def _shift_rows(data: np.ndarray, shifts_samples: np.ndarray) -> np.ndarray:
    """Advance each row by its own fractional sample count."""
    out = np.empty_like(data)
    for r in range(data.shape[0]):
        out[r] = _shift_block(data[r : r + 1], float(shifts_samples[r]))[0]
    return out


def tukey_taper(n: int, fraction: float) -> np.ndarray:
    """Flat window with cosine-tapered ends covering fraction of each side."""
    w = np.ones(n)
    edge = int(np.floor(fraction * (n - 1) / 2))
    if edge > 0:
        ramp = 0.5 * (1 - np.cos(np.pi * np.arange(edge + 1) / edge))
        w[: edge + 1] = ramp
        w[n - edge - 1 :] = ramp[::-1]
    return w


def synthesize_planewave(
    fsa: FsaData,
    tx_profile: AberrationProfile | None = None,
    tx_taper: float = 0.0,
) -> ChannelData:
    """Sum transmit rows into single plane-wave channel data.

    With a transmit profile, row m is advanced by its delay error before
    the sum, emulating asynchronous element firing. Delay errors must fit
    inside the recorded guard band. tx_taper > 0 applies a Tukey taper over
    that fraction of each aperture end, suppressing the edge waves of the
    hard aperture (the physical transmit apodization is a free parameter of
    the acquisition; the value used is recorded downstream in provenance).
    """
    n_el = fsa.num_elements
    if tx_profile is None:
        shifts = np.zeros(n_el)
    else:
        if tx_profile.delays.size != n_el:
            raise ValidationError("profile length must match element count")
        shifts = tx_profile.delays * NS / US  # us
        if np.max(np.abs(shifts)) > fsa.margin_us:
            raise ValidationError("delay errors exceed the recorded window margin")
    shifts_samples = shifts * fsa.sample_rate
    if not 0 <= tx_taper <= 1:
        raise ValidationError("tx_taper must be in [0, 1]")
    weights = tukey_taper(n_el, tx_taper) if tx_taper > 0 else None

    out = np.zeros((n_el, fsa.num_samples))
    for m in range(n_el):  # ascending order, reproducible accumulation
        shifted = _shift_block(fsa.samples[m], float(shifts_samples[m]))
        if weights is not None:
            shifted *= weights[m]
        out += shifted
    margin = fsa.margin_us - float(np.max(np.abs(shifts)))
    return ChannelData(out, fsa.t0, fsa.sample_rate, margin, tx_profile)


def apply_rx_aberration(channel: ChannelData, profile: AberrationProfile) -> ChannelData:
    """Embed receive-side delay errors into the channel traces.

    Each receive trace n is advanced by its delay error, so beamforming the
    result with nominal delays reproduces beamforming the original data
    with the profile injected in the delay term.
    """
    if profile.delays.size != channel.num_elements:
        raise ValidationError("profile length must match element count")
    shifts = profile.delays * NS / US
    if np.max(np.abs(shifts)) > channel.margin_us:
        raise ValidationError("delay errors exceed the recorded window margin")
    shifted = _shift_rows(channel.samples, shifts * channel.sample_rate)
    margin = channel.margin_us - float(np.max(np.abs(shifts)))
    return ChannelData(shifted, channel.t0, channel.sample_rate, margin,
                       channel.tx_aberration)
