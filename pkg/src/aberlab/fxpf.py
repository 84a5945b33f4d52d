"""Frequency-space prediction filtering of aligned channel stacks.

Within short axial kernels, each temporal-frequency bin of the aligned
channel data is modeled as an autoregressive process across the element
axis. Coefficients are estimated by least squares over forward and
backward prediction equations with relative diagonal loading, and every
element's spectrum is replaced by the average of its forward and backward
predictions, suppressing components that violate spatial predictability.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .beamform import RfImage, _aligned_column, _rx_delays_us
from .errors import ValidationError
from .probe import MM, US, ImagingGrid, Pulse, TransducerConfig
from .wavesim import ChannelData


@dataclass(frozen=True)
class FxpfConfig:
    """Filter parameters.

    band limits AR fitting to pulse-band frequency bins (MHz); bins outside
    the band are zeroed. Set band = (0, inf) to process every bin, or
    passthrough = True to disable filtering entirely.
    """

    ar_order: int = 2
    iterations: int = 3
    stability_factor: float = 0.01
    kernel_wavelengths: float = 1.0
    kernel_overlap: float = 0.5
    apodization: str = "hann"
    band: tuple[float, float] | None = None
    passthrough: bool = False

    def __post_init__(self):
        if self.ar_order < 1:
            raise ValidationError("ar_order must be >= 1")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.stability_factor <= 0:
            raise ValidationError("stability_factor must be positive")
        if not 0 <= self.kernel_overlap < 1:
            raise ValidationError("kernel_overlap must be in [0, 1)")


def _kernel_geometry(cfg: TransducerConfig, fx: FxpfConfig, row_rate: float):
    """Kernel length (rows) and hop honoring the requested overlap."""
    kernel = int(round(fx.kernel_wavelengths * row_rate / cfg.center_frequency))
    kernel = max(2, kernel)
    hop = max(1, int(round(kernel * (1 - fx.kernel_overlap))))
    if hop >= kernel:
        return kernel, kernel  # disjoint kernels
    kernel = hop * int(np.ceil(kernel / hop))  # hop must divide kernel
    return kernel, hop


def _synthesis_window(kernel: int, hop: int) -> np.ndarray:
    """Synthesis window with exact constant overlap-add, verified numerically.

    Periodic Hann for overlapping kernels, boxcar for disjoint ones.
    """
    if hop == kernel:
        return np.ones(kernel)
    w = 0.5 * (1 - np.cos(2 * np.pi * np.arange(kernel) / kernel))
    cover = np.zeros(3 * kernel)
    for start in range(0, 2 * kernel + 1, hop):
        cover[start : start + kernel] += w
    interior = cover[kernel : 2 * kernel]
    if not np.allclose(interior, interior[0], rtol=1e-12, atol=1e-12):
        raise ValidationError("kernel_overlap does not give constant overlap-add")
    return w / interior[0]


def _predict_bin(x: np.ndarray, order: int, loading: float):
    """Forward-backward AR prediction of (frames, elements) spectra.

    Returns the per-element prediction averaged over the available
    directions, leaving frames with a singular normal system untouched.
    """
    n_frames, n_el = x.shape
    d = order
    fwd_cols = [x[:, d - 1 - j : n_el - 1 - j] for j in range(d)]
    bwd_cols = [np.conj(x[:, 1 + j : n_el - d + 1 + j]) for j in range(d)]
    design = np.concatenate(
        [np.stack(fwd_cols, axis=2), np.stack(bwd_cols, axis=2)], axis=1
    )  # (frames, 2 (n_el - d), d)
    targets = np.concatenate([x[:, d:], np.conj(x[:, : n_el - d])], axis=1)

    normal = np.einsum("frj,frk->fjk", np.conj(design), design)
    rhs = np.einsum("frj,fr->fj", np.conj(design), targets)
    mean_diag = np.einsum("fjj->f", normal).real / d
    dead = mean_diag <= 0
    ridge = loading * np.where(dead, 1.0, mean_diag)
    normal = normal + ridge[:, None, None] * np.eye(d)
    try:
        coef = np.linalg.solve(normal, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        warnings.warn("singular prediction system; kernels passed through unfiltered")
        return x
    coef[dead] = 0.0

    pred = np.zeros_like(x)
    count = np.zeros(n_el)
    fwd = np.einsum("frj,fj->fr", np.stack(fwd_cols, axis=2), coef)
    pred[:, d:] += fwd
    count[d:] += 1
    bwd = np.conj(np.einsum("frj,fj->fr", np.stack(bwd_cols, axis=2), coef))
    pred[:, : n_el - d] += bwd
    count[: n_el - d] += 1
    out = pred / count[None, :]
    out[dead] = x[dead]
    return out


def fxpf_filter_stack(
    stack: np.ndarray,
    cfg: TransducerConfig,
    fx: FxpfConfig = FxpfConfig(),
    row_rate: float | None = None,
) -> np.ndarray:
    """Filter an aligned (rows, elements) stack.

    row_rate is the fast-time sample rate of the rows in MHz; it defaults
    to the acquisition rate, which matches grids whose axial step is one
    RF sample of round trip.
    """
    stack = np.asarray(stack, dtype=float)
    if stack.ndim != 2:
        raise ValidationError("stack must be (rows, elements)")
    if fx.passthrough:
        return stack.copy()
    rows, n_el = stack.shape
    if n_el < 2 * fx.ar_order + 1:
        raise ValidationError("need at least 2 * ar_order + 1 elements")
    if row_rate is None:
        row_rate = cfg.sampling_frequency

    kernel, hop = _kernel_geometry(cfg, fx, row_rate)
    if rows < kernel:
        raise ValidationError("stack shorter than one kernel")
    window = _synthesis_window(kernel, hop)

    if fx.band is None:
        band = Pulse(center_frequency=cfg.center_frequency,
                     sample_rate=row_rate).band_edges(20.0)
    else:
        band = fx.band
    freqs = np.fft.rfftfreq(kernel, d=1.0 / row_rate)
    in_band = (freqs >= band[0]) & (freqs <= band[1])

    pad = kernel
    n_frames = int(np.ceil((rows + 2 * pad - kernel) / hop)) + 1
    padded_len = (n_frames - 1) * hop + kernel
    padded = np.zeros((padded_len, n_el))
    padded[pad : pad + rows] = stack

    starts = np.arange(n_frames) * hop
    frames = np.stack([padded[s : s + kernel] for s in starts])  # (F, kernel, n_el)
    spectra = np.fft.rfft(frames, axis=1)
    spectra[:, ~in_band, :] = 0.0

    loading = fx.stability_factor
    for _ in range(fx.iterations):
        for k in np.nonzero(in_band)[0]:
            spectra[:, k, :] = _predict_bin(spectra[:, k, :], fx.ar_order, loading)

    filtered = np.fft.irfft(spectra, n=kernel, axis=1) * window[None, :, None]
    out = np.zeros_like(padded)
    for f, s in enumerate(starts):
        out[s : s + kernel] += filtered[f]
    return out[pad : pad + rows]


def correct_fxpf(
    channel: ChannelData,
    cfg: TransducerConfig,
    grid: ImagingGrid,
    fx: FxpfConfig = FxpfConfig(),
) -> RfImage:
    """Prediction-filtered image: apodize, filter and sum each aligned column."""
    delays = _rx_delays_us(cfg, None)
    row_rate = cfg.sound_speed / (2 * grid.axial_step * MM) * US  # MHz
    img = np.empty((grid.row_count, grid.column_count))
    truncated = False
    for col in range(grid.column_count):
        stack, _, trunc = _aligned_column(channel, cfg, grid, col, delays,
                                          fx.apodization)
        truncated |= trunc
        img[:, col] = fxpf_filter_stack(stack, cfg, fx, row_rate).sum(axis=1)
    prov = {
        "method": "fxpf",
        "apodization": fx.apodization,
        "ar_order": fx.ar_order,
        "iterations": fx.iterations,
        "stability_factor": fx.stability_factor,
        "edge_truncated": truncated,
        "passthrough": fx.passthrough,
    }
    return RfImage(img, grid, prov)
