"""Toy models, Adam, and the aberration-to-aberration training loop.

Models are small enough for finite-difference checking and implement
forward plus manual backpropagation in plain numpy. The trainer maps
random pairs of corrupted realizations of one scene to each other; with a
squared error loss and enough pairs the optimum tends to the per-pixel
mean of the targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .losses import LossEval, adaptive_mixed_loss, alpha_schedule, bmode_mse_loss, mse_loss

LOSSES = ("mse_rf", "mse_bmode", "adaptive_mixed")


class BiasImageModel:
    """Output is a per-pixel parameter grid; the input is ignored.

    The quadratic training objective then has a closed-form optimum (the
    target mean under RF MSE), which makes this model the reference for
    trainer correctness.
    """

    def __init__(self, shape: tuple[int, int], init: np.ndarray | None = None):
        self.bias = np.zeros(shape) if init is None else np.array(init, dtype=float)
        if self.bias.shape != tuple(shape):
            raise ValidationError("init shape mismatch")

    def parameters(self) -> list[np.ndarray]:
        return [self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape != self.bias.shape:
            raise ValidationError("input shape mismatch")
        return self.bias.copy()

    def backward(self, grad_out: np.ndarray) -> list[np.ndarray]:
        return [grad_out.copy()]


def _conv_same(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> tuple:
    """Channel-to-channel 2-D correlation with same zero padding.

    x: (c_in, h, w), weights: (c_out, c_in, k, k), bias: (c_out,).
    Returns the output and the cached input windows for backprop.
    """
    k = weights.shape[-1]
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    out = np.einsum("cijab,ocab->oij", win, weights) + bias[:, None, None]
    return out, win


def _conv_same_backward(grad_out, win, weights, input_shape):
    """Gradients of _conv_same wrt weights, bias and input."""
    k = weights.shape[-1]
    pad = k // 2
    g_w = np.einsum("oij,cijab->ocab", grad_out, win)
    g_b = grad_out.sum(axis=(1, 2))
    c_in, h, w = input_shape
    g_xp = np.zeros((c_in, h + 2 * pad, w + 2 * pad))
    for a in range(k):
        for b in range(k):
            g_xp[:, a : a + h, b : b + w] += np.einsum(
                "oij,oc->cij", grad_out, weights[:, :, a, b]
            )
    return g_w, g_b, g_xp[:, pad : pad + h, pad : pad + w]


class SmallConvNet:
    """Stack of same-padded conv layers, rectified except the linear last layer."""

    def __init__(self, channels=(1, 8, 8, 1), kernel_size: int = 5, seed: int = 0):
        if channels[0] != 1 or channels[-1] != 1:
            raise ValidationError("first and last channel counts must be 1")
        rng = np.random.default_rng(seed)
        self.kernel_size = kernel_size
        self.weights = []
        self.biases = []
        for c_in, c_out in zip(channels[:-1], channels[1:]):
            scale = np.sqrt(2.0 / (c_in * kernel_size**2))
            self.weights.append(rng.standard_normal((c_out, c_in, kernel_size, kernel_size)) * scale)
            self.biases.append(np.zeros(c_out))
        self._cache = None

    def parameters(self) -> list[np.ndarray]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def forward(self, x: np.ndarray) -> np.ndarray:
        act = np.asarray(x, dtype=float)[None]
        cache = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out, win = _conv_same(act, w, b)
            relu_mask = None
            if i < last:
                relu_mask = out > 0
                out = np.where(relu_mask, out, 0.0)
            cache.append((act.shape, win, relu_mask))
            act = out
        self._cache = cache
        return act[0]

    def backward(self, grad_out: np.ndarray) -> list[np.ndarray]:
        if self._cache is None:
            raise NumericalError("backward called before forward")
        grad = np.asarray(grad_out, dtype=float)[None]
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            in_shape, win, relu_mask = self._cache[i]
            if relu_mask is not None:
                grad = np.where(relu_mask, grad, 0.0)
            g_w, g_b, grad = _conv_same_backward(grad, win, self.weights[i], in_shape)
            grads[2 * i] = g_w
            grads[2 * i + 1] = g_b
        return grads


class Adam:
    """Adam optimizer with optional decoupled weight decay (zero by default)."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            if self.weight_decay:
                g = g + self.weight_decay * p
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g**2
            m_hat = self.m[i] / (1 - self.beta1**self.t)
            v_hat = self.v[i] / (1 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class TrainSpec:
    """Training hyperparameters.

    lr_schedule lists (epoch, factor) pairs; the learning rate is
    multiplied by factor when that epoch starts.
    """

    epochs: int
    batch: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    lr_schedule: tuple[tuple[int, float], ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch < 1:
            raise ValidationError("batch must be >= 1")


def _evaluate_loss(kind: str, target, output, alpha: float) -> LossEval:
    if kind == "mse_rf":
        return mse_loss(target, output)
    if kind == "mse_bmode":
        return bmode_mse_loss(target, output)
    if kind == "adaptive_mixed":
        return adaptive_mixed_loss(target, output, alpha)
    raise ValidationError(f"unknown loss {kind!r}; choose from {LOSSES}")


def train_noise2noise(model, versions: list[np.ndarray], spec: TrainSpec,
                      loss: str = "adaptive_mixed"):
    """Train a model by mapping random pairs of corrupted versions to each other.

    Each epoch visits every version once as an input (in random order) and
    pairs it with a different, uniformly drawn version as the target.
    Returns (model, history) with one (epoch, alpha, mean loss) row per
    epoch. Deterministic for a fixed spec.
    """
    versions = [np.asarray(v, dtype=float) for v in versions]
    if len(versions) < 2:
        raise ValidationError("need at least two versions to pair")
    shape = versions[0].shape
    if any(v.shape != shape for v in versions):
        raise ValidationError("all versions must share one shape")

    rng = np.random.default_rng(spec.seed)
    adam = Adam(spec.lr, spec.beta1, spec.beta2, spec.eps, spec.weight_decay)
    schedule = dict(spec.lr_schedule)
    params = model.parameters()
    history = []

    for epoch in range(spec.epochs):
        if epoch in schedule:
            adam.lr *= schedule[epoch]
        alpha = alpha_schedule(epoch + 1, spec.epochs)
        order = rng.permutation(len(versions))
        targets = np.array(
            [rng.choice([j for j in range(len(versions)) if j != i]) for i in order]
        )
        epoch_loss = 0.0
        for start in range(0, len(order), spec.batch):
            batch_in = order[start : start + spec.batch]
            batch_tg = targets[start : start + spec.batch]
            acc = [np.zeros_like(p) for p in params]
            for i, j in zip(batch_in, batch_tg):
                output = model.forward(versions[i])
                ev = _evaluate_loss(loss, versions[j], output, alpha)
                if not np.isfinite(ev.value):
                    err = NumericalError(f"loss diverged at epoch {epoch}")
                    err.history = history
                    raise err
                epoch_loss += ev.value
                for a, g in zip(acc, model.backward(ev.gradient)):
                    a += g
            count = len(batch_in)
            adam.step(params, [a / count for a in acc])
        history.append((epoch, alpha, epoch_loss / len(order)))
    return model, history
