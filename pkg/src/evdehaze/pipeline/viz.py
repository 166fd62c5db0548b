"""Heatmaps of event features."""

from __future__ import annotations

import numpy as np


def colormap(v: np.ndarray) -> np.ndarray:
    """Black-red-yellow-white ramp: r = 3v, g = 3v - 1, b = 3v - 2, each clipped to [0, 1]."""
    v = np.asarray(v, dtype=np.float64)
    rgb = np.stack([3 * v, 3 * v - 1, 3 * v - 2])
    return np.clip(rgb, 0.0, 1.0).astype(np.float32)


def visualize_feature(x_e: np.ndarray) -> np.ndarray:
    """(3, H', W') heatmap of the channel-mean absolute activation, min-max scaled.

    A feature with zero range maps to colormap(0) everywhere.
    """
    # sorting first makes the channel sum independent of channel order, bit for bit
    mag = np.sort(np.abs(np.asarray(x_e, dtype=np.float64)), axis=0)
    act = mag.sum(axis=0) / mag.shape[0]
    lo, hi = act.min(), act.max()
    v = np.zeros_like(act) if hi - lo <= 0 else (act - lo) / (hi - lo)
    return colormap(v)
