"""Atmospheric scattering: synthesis, inversion, dynamic-range analysis.

Observed intensity is ``I = J * t + A * (1 - t)`` with transmission ``t`` in
[0, 1] and air-light ``A``. ``A`` may be a scalar or one value per channel;
``t`` may be a scalar or an (H, W) map shared by all channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class HazeParams:
    airlight: float | np.ndarray
    transmission: float | np.ndarray
    beta: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.airlight, dtype=np.float64)
        t = np.asarray(self.transmission, dtype=np.float64)
        if np.any(a < 0) or np.any(a > 1) or not np.all(np.isfinite(a)):
            raise DataError("air-light values must lie in [0, 1]")
        if np.any(t < 0) or np.any(t > 1) or not np.all(np.isfinite(t)):
            raise DataError("transmission values must lie in [0, 1]")
        if self.beta < 0:
            raise DataError("beta must be >= 0")


def _broadcast(img: np.ndarray, p: HazeParams):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise DataError(f"image must be (C, H, W), got shape {img.shape}")
    c, h, w = img.shape
    t = np.asarray(p.transmission, dtype=np.float64)
    if t.ndim == 0:
        t = np.full((1, h, w), float(t))
    elif t.shape == (h, w):
        t = t[None]
    elif t.shape == (1, h, w):
        pass
    else:
        raise DataError(f"transmission map {t.shape} does not match image extents {(h, w)}")
    a = np.asarray(p.airlight, dtype=np.float64).reshape(-1)
    if a.size == 1:
        a = np.full(c, a[0])
    elif a.size != c:
        raise DataError(f"{a.size} air-light values for a {c}-channel image")
    return img, t, a[:, None, None]


def synthesize_haze(clean: np.ndarray, params: HazeParams) -> np.ndarray:
    j, t, a = _broadcast(clean, params)
    return np.clip(j * t + a * (1.0 - t), 0.0, 1.0).astype(np.float32)


def invert_haze(hazy: np.ndarray, params: HazeParams, t_floor: float = 0.01,
                strict: bool = False) -> np.ndarray:
    """Recover scene radiance, dividing by ``max(t, t_floor)``.

    In strict mode any pixel with ``t < t_floor`` raises instead.
    """
    if not t_floor > 0:
        raise DataError("t_floor must be positive")
    i, t, a = _broadcast(hazy, params)
    if strict:
        low = np.argwhere(t[0] < t_floor)
        if low.size:
            y, x = low[0]
            raise DataError(f"transmission {t[0, y, x]:.4g} below floor {t_floor} at pixel (y={y}, x={x})")
    j = (i - a * (1.0 - t)) / np.maximum(t, t_floor)
    return np.clip(j, 0.0, 1.0).astype(np.float32)


def transmission_from_depth(depth: np.ndarray, beta: float) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if beta < 0:
        raise DataError(f"beta must be >= 0, got {beta}")
    if np.any(depth < 0):
        raise DataError("depth must be >= 0")
    return np.exp(-beta * depth).astype(np.float32)


def linear_depth(h: int, w: int, near: float, far: float, angle: float = 0.0) -> np.ndarray:
    """Planar ramp from ``near`` to ``far`` along direction ``angle``."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    proj = np.cos(angle) * xx / max(w - 1, 1) + np.sin(angle) * yy / max(h - 1, 1)
    proj = (proj - proj.min()) / max(proj.max() - proj.min(), 1e-12)
    return (near + (far - near) * proj).astype(np.float32)


def radial_depth(h: int, w: int, near: float, far: float, cy=None, cx=None) -> np.ndarray:
    cy = (h - 1) / 2 if cy is None else cy
    cx = (w - 1) / 2 if cx is None else cx
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    r = np.hypot(yy - cy, xx - cx)
    r = r / max(r.max(), 1e-12)
    return (near + (far - near) * r).astype(np.float32)


@dataclass(frozen=True)
class DrReport:
    k: float
    a: float
    b: float
    dr_obs: float

    @property
    def compressed(self) -> bool:
        return self.dr_obs < self.k


def dynamic_range_report(k: float, j_min: float, t: float, airlight: float) -> DrReport:
    """Observed vs true dynamic range under constant transmission.

    ``t == 1`` (no haze) is accepted and gives ``dr_obs == k``.
    """
    if not k > 1:
        raise DataError(f"true dynamic range k must exceed 1, got {k}")
    if not j_min > 0:
        raise DataError(f"j_min must be positive, got {j_min}")
    if not 0 < t <= 1:
        raise DataError(f"transmission must be in (0, 1], got {t}")
    if not airlight > 0:
        raise DataError(f"air-light must be positive, got {airlight}")
    a = j_min * t
    b = airlight * (1.0 - t)
    return DrReport(k=k, a=a, b=b, dr_obs=(k * a + b) / (a + b))


def dr_obs_vectorized(k, j_min, t, airlight) -> np.ndarray:
    a = np.asarray(j_min, dtype=np.float64) * t
    b = np.asarray(airlight, dtype=np.float64) * (1.0 - np.asarray(t, dtype=np.float64))
    return (k * a + b) / (a + b)


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray
    edges: np.ndarray
    min: float
    max: float

    @property
    def spread(self) -> float:
        return self.max - self.min

    @property
    def dr_ratio(self) -> float:
        return self.max / max(self.min, 1.0 / 255.0)


def intensity_histogram(img: np.ndarray, bins: int = 32) -> Histogram:
    """Equal-width bins on [0, 1]; each bin is half-open except the last."""
    if bins < 2:
        raise DataError(f"bins must be >= 2, got {bins}")
    v = np.asarray(img, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise DataError("empty image")
    idx = np.clip(np.floor(v * bins).astype(np.int64), 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    return Histogram(counts=counts, edges=np.linspace(0.0, 1.0, bins + 1),
                     min=float(v.min()), max=float(v.max()))
