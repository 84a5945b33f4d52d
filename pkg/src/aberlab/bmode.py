"""Envelope detection, log compression and training-time normalization.

The standardized B-mode operator used by the loss module lives here:
log-compressed envelope with a small relative floor, standardized to zero
mean and unit standard deviation over the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

from .beamform import RfImage
from .errors import NumericalError, ValidationError
from .probe import ImagingGrid

LOG_FLOOR_REL = 1e-8  # relative envelope floor inside the log


@dataclass(frozen=True)
class BModeImage:
    """Log-compressed, max-normalized image: values in [-dynamic_range, 0] dB."""

    db_values: np.ndarray
    dynamic_range_db: float

    def __post_init__(self):
        v = np.asarray(self.db_values, dtype=float)
        object.__setattr__(self, "db_values", v)
        if not np.all(np.isfinite(v)):
            raise ValidationError("db values must be finite")


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def analytic_signal(rf: np.ndarray) -> np.ndarray:
    """Per-column analytic signal, FFT-based with power-of-two zero padding."""
    rf = np.asarray(rf, dtype=float)
    p = rf.shape[0]
    if p < 8:
        raise ValidationError("columns must have at least 8 samples")
    return hilbert(rf, N=_next_pow2(p), axis=0)[:p]


def envelope(rf) -> np.ndarray:
    """Envelope (magnitude of the analytic signal) of an RF grid."""
    samples = rf.samples if isinstance(rf, RfImage) else rf
    return np.abs(analytic_signal(samples))


def log_compress(env: np.ndarray, dynamic_range_db: float = 50.0) -> BModeImage:
    """Max-normalized log compression clamped at the display dynamic range."""
    env = np.asarray(env, dtype=float)
    peak = env.max()
    if peak <= 0:
        raise NumericalError("cannot log-compress an all-zero envelope")
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(env / peak)
    return BModeImage(np.maximum(db, -dynamic_range_db), dynamic_range_db)


def standardized_bmode(rf) -> np.ndarray:
    """Log-compressed envelope standardized to zero mean, unit deviation.

    A small floor relative to the envelope peak keeps the log finite in
    anechoic pixels and makes the operator invariant to positive scaling
    of the RF input.
    """
    samples = rf.samples if isinstance(rf, RfImage) else np.asarray(rf, dtype=float)
    env = envelope(samples)
    peak = env.max()
    if peak <= 0:
        raise NumericalError("standardized B-mode undefined for all-zero input")
    b = 20 * np.log10(env + LOG_FLOOR_REL * peak)
    std = b.std()
    if std == 0:
        raise NumericalError("standardized B-mode undefined for a constant image")
    return (b - b.mean()) / std


def normalize_rf(rf: np.ndarray) -> np.ndarray:
    """Per-image normalization: divide by the RF standard deviation."""
    rf = np.asarray(rf, dtype=float)
    std = rf.std()
    if std == 0:
        raise NumericalError("cannot normalize a constant image")
    return rf / std


def yeo_johnson(x: np.ndarray, lam: float) -> np.ndarray:
    """Yeo-Johnson power transform with exponent lam."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    if lam != 0:
        out[pos] = ((x[pos] + 1) ** lam - 1) / lam
    else:
        out[pos] = np.log1p(x[pos])
    neg = ~pos
    if lam != 2:
        out[neg] = -(((-x[neg] + 1) ** (2 - lam)) - 1) / (2 - lam)
    else:
        out[neg] = -np.log1p(-x[neg])
    return out


def yeo_johnson_fit(x: np.ndarray, step: float = 0.01) -> float:
    """Exponent maximizing the Gaussian log-likelihood, grid-searched on [-2, 2]."""
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValidationError("input must be finite")
    lams = np.arange(-2.0, 2.0 + step / 2, step)
    jac = np.sum(np.sign(x) * np.log1p(np.abs(x)))
    best_lam, best_ll = 1.0, -np.inf
    n = x.size
    for lam in lams:
        var = yeo_johnson(x, lam).var()
        if var <= 0:
            continue
        ll = -n / 2 * np.log(var) + (lam - 1) * jac
        if ll > best_ll:
            best_ll, best_lam = ll, float(lam)
    return best_lam


def downsample_lateral(rf: RfImage, factor: int) -> RfImage:
    """Keep every factor-th column (plain decimation; beams are independent)."""
    if factor < 1:
        raise ValidationError("factor must be >= 1")
    q = rf.grid.column_count
    if q % factor != 0:
        raise ValidationError(f"{q} columns not divisible by factor {factor}")
    if factor == 1:
        return rf
    grid = ImagingGrid(rf.grid.lateral_positions[::factor], rf.grid.axial_positions)
    return RfImage(rf.samples[:, ::factor], grid, dict(rf.provenance))


def split_axial_sections(
    image: np.ndarray, count: int = 3, overlap_fraction: float = 0.03
) -> tuple[list[np.ndarray], int]:
    """Cut an image into axial sections overlapping by a fraction of its height."""
    image = np.asarray(image)
    rows = image.shape[0]
    overlap = max(1, int(round(overlap_fraction * rows)))
    base = int(np.ceil((rows + (count - 1) * overlap) / count))
    sections = []
    start = 0
    for i in range(count):
        stop = min(rows, start + base) if i < count - 1 else rows
        sections.append(image[start:stop])
        start = stop - overlap
    return sections, overlap


def blend_axial_sections(sections: list[np.ndarray], overlap: int) -> np.ndarray:
    """Reassemble axial sections, cross-fading linearly across each overlap."""
    sections = [np.asarray(s, dtype=float) for s in sections]
    widths = {s.shape[1] for s in sections}
    if len(widths) != 1:
        raise ValidationError("sections must share the same width")
    if any(s.shape[0] <= overlap for s in sections):
        raise ValidationError("sections must be taller than the overlap")
    out = sections[0].copy()
    ramp = ((np.arange(overlap) + 1) / (overlap + 1))[:, None]
    for s in sections[1:]:
        out[-overlap:] = out[-overlap:] * (1 - ramp) + s[:overlap] * ramp
        out = np.vstack([out, s[overlap:]])
    return out
