"""Training losses with analytic gradients.

The mixed loss blends mean squared error on standardized B-mode images
with mean squared error on raw RF grids; the blend weight ramps linearly
with training progress. Gradients chain exactly through envelope
detection (the Hilbert operator is skew-adjoint, so its adjoint is its
negative), the floored log, and the per-image standardization. The
envelope peak inside the log floor is treated as a constant: it is locally
constant almost everywhere and its contribution is at floor scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bmode import LOG_FLOOR_REL, analytic_signal
from .errors import NumericalError, ValidationError

LN10_OVER_20 = np.log(10) / 20


@dataclass(frozen=True)
class LossEval:
    """Loss value plus its gradient with respect to the network output."""

    value: float
    gradient: np.ndarray
    alpha: float | None = None


def _check_shapes(target: np.ndarray, output: np.ndarray):
    if target.shape != output.shape:
        raise ValidationError(
            f"target shape {target.shape} != output shape {output.shape}"
        )


def mse_loss(target: np.ndarray, output: np.ndarray) -> LossEval:
    """Mean squared error over all pixels; gradient 2 (output - target) / n."""
    target = np.asarray(target, dtype=float)
    output = np.asarray(output, dtype=float)
    _check_shapes(target, output)
    diff = output - target
    n = diff.size
    return LossEval(float(np.mean(diff**2)), 2 * diff / n)


def _hilbert_imag(x: np.ndarray) -> np.ndarray:
    return analytic_signal(x).imag


def _standardized_bmode_vjp(rf: np.ndarray):
    """Standardized B-mode of an RF grid plus a vector-Jacobian product.

    Returns (b, vjp) where vjp maps a cotangent on b to a cotangent on rf.
    """
    analytic = analytic_signal(rf)
    env = np.abs(analytic)
    peak = env.max()
    if peak <= 0:
        raise NumericalError("standardized B-mode undefined for all-zero input")
    floored = env + LOG_FLOOR_REL * peak
    log_img = 20 * np.log10(floored)
    std = log_img.std()
    if std == 0:
        raise NumericalError("standardized B-mode undefined for a constant image")
    b = (log_img - log_img.mean()) / std

    env_safe = np.where(env > 0, env, 1.0)

    def vjp(g_b: np.ndarray) -> np.ndarray:
        g_log = (g_b - g_b.mean() - b * np.mean(g_b * b)) / std
        g_env = g_log / (floored * LN10_OVER_20)
        g_re = g_env * analytic.real / env_safe
        g_im = g_env * analytic.imag / env_safe
        # adjoint of the Hilbert (imaginary) branch is its negative
        return g_re - _hilbert_imag(g_im)

    return b, vjp


def bmode_mse_loss(target: np.ndarray, output: np.ndarray) -> LossEval:
    """MSE between standardized B-mode transforms, gradient on the output branch."""
    target = np.asarray(target, dtype=float)
    output = np.asarray(output, dtype=float)
    _check_shapes(target, output)
    b_target, _ = _standardized_bmode_vjp(target)
    b_output, vjp = _standardized_bmode_vjp(output)
    diff = b_output - b_target
    n = diff.size
    return LossEval(float(np.mean(diff**2)), vjp(2 * diff / n))


def adaptive_mixed_loss(target: np.ndarray, output: np.ndarray, alpha: float) -> LossEval:
    """(1 - alpha) * B-mode MSE + alpha * RF MSE, exactly linear in alpha."""
    if not 0 <= alpha <= 1:
        raise ValidationError("alpha must be in [0, 1]")
    bm = bmode_mse_loss(target, output)
    rf = mse_loss(target, output)
    value = (1 - alpha) * bm.value + alpha * rf.value
    gradient = (1 - alpha) * bm.gradient + alpha * rf.gradient
    return LossEval(float(value), gradient, alpha)


def alpha_schedule(epoch: int, total_epochs: int) -> float:
    """Linear ramp: current epoch over total epochs."""
    if total_epochs <= 0:
        raise ValidationError("total_epochs must be positive")
    if not 0 <= epoch <= total_epochs:
        raise ValidationError("epoch must lie in [0, total_epochs]")
    return epoch / total_epochs
