"""Image-space losses and quality metrics."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..autodiff import Var, no_grad, ops
from ..errors import DataError

PERCEPTUAL_SEED = 20240607
_proxy_cache: dict = {}


def _proxy_weights(channels: int, dtype):
    """Fixed random 3x3 conv weights, 8 features per layer, seeded by channel count."""
    key = (channels, np.dtype(dtype).str)
    if key not in _proxy_cache:
        rng = np.random.default_rng(PERCEPTUAL_SEED + channels)
        w1 = rng.normal(0, np.sqrt(2.0 / (channels * 9)), (8, channels, 3, 3)).astype(dtype)
        w2 = rng.normal(0, np.sqrt(2.0 / (8 * 9)), (8, 8, 3, 3)).astype(dtype)
        _proxy_cache[key] = (w1, w2)
    return _proxy_cache[key]


def perceptual_features(x: Var) -> Var:
    """Two fixed random conv+ReLU layers. A structure-sensitive stand-in, not VGG."""
    w1, w2 = _proxy_weights(x.shape[1], x.dtype)
    h = ops.relu(ops.conv2d(x, Var(w1), pad=1))
    return ops.relu(ops.conv2d(h, Var(w2), pad=1))


def total_loss(output, target, lambda_pix: float = 1.0, lambda_perc: float = 0.2):
    """lambda_pix * L1 + lambda_perc * perceptual-proxy MSE.

    Images are (C, H, W) or batches (N, C, H, W). A Var input yields a Var
    (differentiable); numpy inputs yield a float.
    """
    differentiable = isinstance(output, Var) or isinstance(target, Var)
    a = output if isinstance(output, Var) else Var(np.asarray(output, dtype=np.float64))
    b = target if isinstance(target, Var) else Var(np.asarray(target, dtype=a.dtype))
    if a.shape != b.shape:
        raise DataError(f"total_loss dim mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        a, b = ops.reshape(a, (1,) + a.shape), ops.reshape(b, (1,) + b.shape)

    def compute():
        l1 = ops.mean(ops.abs_(ops.sub(a, b)))
        perc = ops.mean(ops.square(ops.sub(perceptual_features(a), perceptual_features(b))))
        return ops.add(ops.mul(l1, lambda_pix), ops.mul(perc, lambda_perc))

    if differentiable:
        return compute()
    with no_grad():
        return float(compute().value)


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"metric dim mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return 100.0
    return min(100.0, 10.0 * np.log10(1.0 / mse))


def ssim(a, b, window: int = 8, c1: float = 0.01 ** 2, c2: float = 0.03 ** 2) -> float:
    """Mean SSIM over all stride-1 ``window`` x ``window`` positions and channels."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.shape[-2] < window or a.shape[-1] < window:
        raise DataError(f"image {a.shape[-2:]} smaller than SSIM window {window}")
    wa = sliding_window_view(a, (window, window), axis=(-2, -1))
    wb = sliding_window_view(b, (window, window), axis=(-2, -1))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = (wa * wa).mean(axis=(-2, -1)) - mu_a ** 2
    var_b = (wb * wb).mean(axis=(-2, -1)) - mu_b ** 2
    cov = (wa * wb).mean(axis=(-2, -1)) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(s.mean())
