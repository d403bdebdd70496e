"""Gradient machinery: parameter-shift rule for rotation angles and
hand-written reverse-mode gradients for the classical layers.

Quantum parameters all enter through Rx/Ry/Rz gates, so the exact
two-point shift rule applies and the simulator stays forward-only.
Each classical layer comes as a forward/backward pair; the forward
returns a cache that the backward consumes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

SHIFT = np.pi / 2


def param_shift_grad(circuit_eval: Callable[[float], float], theta: float) -> float:
    """Exact d/dtheta of a Pauli expectation behind rotation gates:
    (f(theta + pi/2) - f(theta - pi/2)) / 2."""
    return 0.5 * (circuit_eval(theta + SHIFT) - circuit_eval(theta - SHIFT))


def finite_diff_grad(f: Callable[[float], float], theta: float, h: float = 1e-5) -> float:
    """Central difference (f(theta+h) - f(theta-h)) / 2h. Test oracle only."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    return (f(theta + h) - f(theta - h)) / (2.0 * h)


def relative_error(value: float, reference: float) -> float:
    return abs(value - reference) / max(1.0, abs(reference))


@dataclass
class GradCheckReport:
    """Outcome of comparing a gradient against finite differences."""
    max_rel_err: float
    num_params: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


# ---------------------------------------------------------------------------
# Linear
# ---------------------------------------------------------------------------

def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """y = x @ W + b with x (B, in), W (in, out), b (out)."""
    if x.shape[1] != weight.shape[0]:
        raise ValueError(f"linear shape mismatch: x {x.shape} vs W {weight.shape}")
    return x @ weight + bias, (x, weight)


def linear_backward(upstream: np.ndarray, cache):
    x, weight = cache
    dx = upstream @ weight.T
    dw = x.T @ upstream
    db = upstream.sum(axis=0)
    return dx, dw, db


# ---------------------------------------------------------------------------
# ReLU
# ---------------------------------------------------------------------------

def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), (x > 0.0)


def relu_backward(upstream: np.ndarray, cache):
    return upstream * cache


# ---------------------------------------------------------------------------
# 1-D convolution (kernel width 3, zero padding 1, length preserved)
# ---------------------------------------------------------------------------

def conv1d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """x (B, C_in, L), weight (C_out, C_in, 3), bias (C_out) -> (B, C_out, L)."""
    if x.ndim != 3 or weight.shape[2] != 3 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"conv1d shape mismatch: x {x.shape} vs w {weight.shape}")
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, 3, axis=2)  # (B, C_in, L, 3)
    out = np.einsum("oik,bilk->bol", weight, windows) + bias[None, :, None]
    return out, (windows, weight, x.shape)


def conv1d_backward(upstream: np.ndarray, cache):
    windows, weight, x_shape = cache
    dw = np.einsum("bol,bilk->oik", upstream, windows)
    db = upstream.sum(axis=(0, 2))
    # scatter the kernel taps back onto the padded input
    dwin = np.einsum("oik,bol->bilk", weight, upstream)
    dpad = np.zeros((x_shape[0], x_shape[1], x_shape[2] + 2))
    for k in range(3):
        dpad[:, :, k:k + x_shape[2]] += dwin[:, :, :, k]
    return dpad[:, :, 1:-1], dw, db


# ---------------------------------------------------------------------------
# 2-D convolution (3x3, zero padding 1) via im2col
# ---------------------------------------------------------------------------

def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """x (B, C_in, H, W), weight (C_out, C_in, 3, 3) -> (B, C_out, H, W)."""
    if x.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"conv2d shape mismatch: x {x.shape} vs w {weight.shape}")
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(2, 3))
    out = np.einsum("oiuv,bihwuv->bohw", weight, windows) + bias[None, :, None, None]
    return out, (windows, weight, x.shape)


def conv2d_backward(upstream: np.ndarray, cache):
    windows, weight, x_shape = cache
    dw = np.einsum("bohw,bihwuv->oiuv", upstream, windows)
    db = upstream.sum(axis=(0, 2, 3))
    dwin = np.einsum("oiuv,bohw->bihwuv", weight, upstream)
    b, c, h, w = x_shape
    dpad = np.zeros((b, c, h + 2, w + 2))
    for u in range(3):
        for v in range(3):
            dpad[:, :, u:u + h, v:v + w] += dwin[:, :, :, :, u, v]
    return dpad[:, :, 1:-1, 1:-1], dw, db


# ---------------------------------------------------------------------------
# 2x2 max pooling, stride 2
# ---------------------------------------------------------------------------

def maxpool2x2_forward(x: np.ndarray):
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
    patches = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
    argmax = patches.argmax(axis=-1)
    out = np.take_along_axis(patches, argmax[..., None], axis=-1)[..., 0]
    return out, (argmax, x.shape)


def maxpool2x2_backward(upstream: np.ndarray, cache):
    argmax, x_shape = cache
    b, c, h, w = x_shape
    dpatches = np.zeros((b, c, h // 2, w // 2, 4))
    np.put_along_axis(dpatches, argmax[..., None], upstream[..., None], axis=-1)
    return dpatches.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)


# ---------------------------------------------------------------------------
# Softmax cross-entropy (mean over the batch)
# ---------------------------------------------------------------------------

def softmax_ce_forward(logits: np.ndarray, labels: np.ndarray):
    """Mean of -log softmax(logits)[label], stabilized by max-subtraction."""
    b, c = logits.shape
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must be in [0, {c}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    loss = float(-log_probs[np.arange(b), labels].mean())
    return loss, (np.exp(log_probs), labels)


def softmax_ce_backward(cache):
    """d loss / d logits for the mean cross-entropy."""
    probs, labels = cache
    b = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(b), labels] -= 1.0
    return grad / b
