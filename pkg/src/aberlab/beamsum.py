"""Receive-side delay error estimation against the beamsum reference.

Channel traces are aligned toward the central image column, summed into a
reference, and each (adjacent-averaged) channel is matched to the
reference by maximizing normalized cross-correlation over a bounded lag
range with parabolic sub-sample refinement. The estimated profile is
zero-mean: a common delay on all elements is unobservable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .aberration import AberrationProfile
from .beamform import RfImage, das, das_channelwise
from .errors import ValidationError
from .probe import ImagingGrid, TransducerConfig, US, NS
from .wavesim import ChannelData


@dataclass(frozen=True)
class BeamsumConfig:
    """Estimation knobs.

    adjacent_average_n channels on each side are averaged into every
    channel before correlation. max_lag bounds the delay search (ns);
    corr_window restricts correlation to a time span (us), defaulting to
    the middle 60 percent of the aligned depth samples.
    """

    adjacent_average_n: int = 4
    max_lag: float = 200.0  # ns
    corr_window: tuple[float, float] | None = None
    subsample: str = "parabolic"
    peak_threshold: float = 0.2

    def __post_init__(self):
        if self.adjacent_average_n < 0:
            raise ValidationError("adjacent_average_n must be >= 0")
        if self.max_lag <= 0:
            raise ValidationError("max_lag must be positive")
        if self.subsample not in ("parabolic", "none"):
            raise ValidationError("subsample must be 'parabolic' or 'none'")


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0:
        return 0.0
    return float((a * b).sum() / denom)


def estimate_profile_beamsum(
    channel: ChannelData,
    cfg: TransducerConfig,
    grid: ImagingGrid,
    bs: BeamsumConfig = BeamsumConfig(),
) -> AberrationProfile:
    """Estimate per-element receive delay errors from speckle channel data."""
    n_el = cfg.num_elements
    if n_el < 2 * bs.adjacent_average_n + 1:
        raise ValidationError("too few elements for the requested adjacent averaging")

    stack = das_channelwise(channel, cfg, grid, grid.column_count // 2)
    rows = stack.shape[0]

    if bs.corr_window is None:
        r0, r1 = int(0.2 * rows), int(0.8 * rows)
    else:
        # aligned rows correspond to round-trip time 2 z / c
        t = 2 * grid.axial_positions * 1e-3 / cfg.sound_speed * 1e6
        sel = np.nonzero((t >= bs.corr_window[0]) & (t <= bs.corr_window[1]))[0]
        if sel.size < 8:
            raise ValidationError("correlation window selects too few samples")
        r0, r1 = int(sel[0]), int(sel[-1]) + 1
    if r1 - r0 < 8:
        raise ValidationError("correlation window selects too few samples")

    reference = stack.sum(axis=1)

    navg = bs.adjacent_average_n
    if navg > 0:
        smoothed = np.empty_like(stack)
        for i in range(n_el):
            lo, hi = max(0, i - navg), min(n_el, i + navg + 1)
            smoothed[:, i] = stack[:, lo:hi].mean(axis=1)
    else:
        smoothed = stack

    # row spacing of the aligned stack in time
    row_dt_us = 2 * grid.axial_step * 1e-3 / cfg.sound_speed * 1e6
    max_lag_rows = max(1, int(np.ceil(bs.max_lag * NS / US / row_dt_us)))
    lags = np.arange(-max_lag_rows, max_lag_rows + 1)

    delays = np.zeros(n_el)
    flagged = 0
    ref_win = reference[r0:r1]
    for i in range(n_el):
        corrs = np.empty(lags.size)
        for j, lag in enumerate(lags):
            a0, a1 = r0 + lag, r1 + lag
            if a0 < 0 or a1 > rows:
                corrs[j] = -np.inf
                continue
            corrs[j] = _pearson(smoothed[a0:a1, i], ref_win)
        jbest = int(np.argmax(corrs))
        if not np.isfinite(corrs[jbest]) or corrs[jbest] < bs.peak_threshold:
            flagged += 1
            continue
        lag = float(lags[jbest])
        if bs.subsample == "parabolic" and 0 < jbest < lags.size - 1:
            c0, c1, c2 = corrs[jbest - 1], corrs[jbest], corrs[jbest + 1]
            if np.isfinite(c0) and np.isfinite(c2):
                denom = c0 - 2 * c1 + c2
                if denom < 0:
                    lag += 0.5 * (c0 - c2) / denom
        # a trace advanced by tau matches the reference at lag -tau
        delays[i] = -lag * row_dt_us * US / NS  # ns

    if flagged:
        warnings.warn(f"{flagged} channels below correlation threshold; set to zero")
    delays -= delays.mean()
    return AberrationProfile(delays, cfg.pitch)


def correct_beamsum(
    channel: ChannelData,
    cfg: TransducerConfig,
    grid: ImagingGrid,
    bs: BeamsumConfig = BeamsumConfig(),
) -> tuple[RfImage, AberrationProfile]:
    """Receive-only compensation: beamform with the negated estimated profile."""
    estimate = estimate_profile_beamsum(channel, cfg, grid, bs)
    corrected = das(
        channel, cfg, grid,
        rx_profile=AberrationProfile(-estimate.delays, estimate.pitch),
    )
    prov = dict(corrected.provenance, method="beamsum",
                estimated_rms_ns=float(np.sqrt(np.mean(estimate.delays**2))))
    return RfImage(corrected.samples, corrected.grid, prov), estimate
