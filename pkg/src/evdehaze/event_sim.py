"""Still image + camera motion -> frames -> events.

Motion is a 2-D similarity per sample (translation for vertical/horizontal
moves, scale for forward/backward, rotation about the image centre); a still
image carries no depth, so nothing richer is identifiable from it.

The event model is the first-order one: log intensity is linearly
interpolated between frames and each pixel fires whenever the signal moves a
full contrast threshold away from its reference level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError
from .events import EventStream
from .tensor_core import luminance


@dataclass(frozen=True)
class MotionSample:
    t: int
    dx: float = 0.0
    dy: float = 0.0
    rot: float = 0.0
    scale: float = 1.0


@dataclass(frozen=True)
class MotionTrajectory:
    samples: tuple[MotionSample, ...]

    def __post_init__(self):
        if not self.samples:
            raise DataError("trajectory is empty")
        for i, s in enumerate(self.samples):
            if s.scale <= 0:
                raise DataError(f"degenerate scale {s.scale} at sample {i + 1}")
            if i and s.t <= self.samples[i - 1].t:
                raise DataError(f"trajectory timestamps not strictly increasing at sample {i + 1}")

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class SimConfig:
    c_pos: float = 0.2
    c_neg: float = 0.2
    refractory: int = 0
    log_eps: float = 1e-3

    def __post_init__(self):
        if not (self.c_pos > 0 and self.c_neg > 0):
            raise DataError("contrast thresholds must be positive")
        if self.refractory < 0:
            raise DataError("refractory period must be >= 0")
        if not self.log_eps > 0:
            raise DataError("log_eps must be positive")


def read_trajectory(path) -> MotionTrajectory:
    """Lines ``t_us,dx,dy,rot,scale``."""
    samples = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", line=lineno, path=path)
        try:
            t = int(parts[0])
            dx, dy, rot, scale = (float(v) for v in parts[1:])
        except ValueError:
            raise ParseError(f"bad number in {line!r}", line=lineno, path=path) from None
        samples.append(MotionSample(t, dx, dy, rot, scale))
    return MotionTrajectory(tuple(samples))


def warp_similarity(img: np.ndarray, dx=0.0, dy=0.0, rot=0.0, scale=1.0) -> np.ndarray:
    """Warp (C, H, W) content by a similarity about the centre.

    A content point p moves to c + scale * R(rot) (p - c) + (dx, dy); output
    pixels are pulled back through the inverse and sampled bilinearly, with
    coordinates clamped to the border (edge replication).
    """
    if scale <= 0:
        raise DataError(f"degenerate scale {scale}")
    img = np.asarray(img, dtype=np.float32)
    _, h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    u, v = xx - cx - dx, yy - cy - dy
    cos, sin = math.cos(rot), math.sin(rot)
    sx = cx + (cos * u + sin * v) / scale
    sy = cy + (-sin * u + cos * v) / scale
    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(sx).astype(np.intp), w - 1)
    y0 = np.minimum(np.floor(sy).astype(np.intp), h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx, fy = sx - x0, sy - y0
    src = img.astype(np.float64)
    top = src[:, y0, x0] * (1 - fx) + src[:, y0, x1] * fx
    bot = src[:, y1, x0] * (1 - fx) + src[:, y1, x1] * fx
    return (top * (1 - fy) + bot * fy).astype(np.float32)


def render_trajectory(img: np.ndarray, traj: MotionTrajectory) -> list[tuple[int, np.ndarray]]:
    if img.size == 0:
        raise DataError("empty image")
    return [(s.t, warp_similarity(img, s.dx, s.dy, s.rot, s.scale)) for s in traj.samples]


def simulate_events(frames, cfg: SimConfig = SimConfig()) -> EventStream:
    """Threshold-crossing simulation over consecutive frame pairs.

    Crossing instants are solved exactly on each linear segment and rounded
    to the nearest microsecond. A crossing that falls inside a pixel's
    refractory window (measured from its last emitted event) still moves the
    reference level but emits nothing. Output order is (t, y, x), ties kept
    in emission order.
    """
    frames = list(frames)
    if len(frames) < 2:
        raise DataError("need at least two frames")
    times = [int(t) for t, _ in frames]
    for i in range(1, len(times)):
        if times[i] <= times[i - 1]:
            raise DataError(f"frame timestamps not strictly increasing at frame {i + 1}")
    imgs = []
    for _, f in frames:
        f = np.asarray(f, dtype=np.float32)
        if f.ndim == 2:
            f = f[None]
        if f.shape[0] != 1:
            raise DataError(f"simulate_events needs single-channel frames, got {f.shape[0]} channels")
        imgs.append(f[0])
    h, w = imgs[0].shape

    def log_i(f):
        return np.log(np.maximum(f.astype(np.float64), cfg.log_eps)).reshape(-1)

    ref = log_i(imgs[0])
    last_emit = np.full(h * w, -np.inf)
    out_t, out_pix, out_p, out_seq = [], [], [], []
    seq = 0
    tol = 1e-9
    prev = ref.copy()
    for k in range(1, len(imgs)):
        cur = log_i(imgs[k])
        t_a, t_b = float(times[k - 1]), float(times[k])
        delta = cur - prev
        up = delta > 0
        n_pos = np.where(up, np.floor((cur - ref) / cfg.c_pos + tol), 0).clip(min=0).astype(np.int64)
        n_neg = np.where(~up, np.floor((ref - cur) / cfg.c_neg + tol), 0).clip(min=0).astype(np.int64)
        for n, c, sign in ((n_pos, cfg.c_pos, 1), (n_neg, cfg.c_neg, -1)):
            pix = np.flatnonzero(n)
            if pix.size == 0:
                continue
            counts = n[pix]
            rep = np.repeat(pix, counts)
            # j-th crossing of each pixel: j = 1..count
            starts = np.cumsum(counts) - counts
            j = np.arange(rep.size) - np.repeat(starts, counts) + 1
            level = ref[rep] + sign * c * j
            frac = (level - prev[rep]) / delta[rep]
            ts = np.floor(t_a + np.clip(frac, 0.0, 1.0) * (t_b - t_a) + 0.5)
            if cfg.refractory > 0:
                keep = np.ones(rep.size, dtype=bool)
                for i in range(rep.size):
                    px = rep[i]
                    if ts[i] - last_emit[px] < cfg.refractory:
                        keep[i] = False
                    else:
                        last_emit[px] = ts[i]
            else:
                keep = slice(None)
            ref[pix] += sign * c * counts
            out_t.append(ts[keep])
            out_pix.append(rep[keep])
            out_p.append(np.full(rep[keep].size, sign, dtype=np.int8))
            out_seq.append(seq + np.arange(rep[keep].size))
            seq += rep.size
        prev = cur
    if not out_t:
        return EventStream.empty(w, h)
    t = np.concatenate(out_t).astype(np.int64)
    pix = np.concatenate(out_pix)
    p = np.concatenate(out_p)
    order_key = np.concatenate(out_seq)
    y, x = np.divmod(pix, w)
    order = np.lexsort((order_key, x, y, t))
    return EventStream.from_arrays(w, h, t[order], x[order], y[order], p[order]).validated()


def simulate_from_image(img, traj: MotionTrajectory, cfg: SimConfig = SimConfig()) -> EventStream:
    """Render ``img`` along ``traj`` and simulate events on its luminance."""
    frames = [(t, luminance(f)) for t, f in render_trajectory(img, traj)]
    return simulate_events(frames, cfg)


def random_trajectory(rng: np.random.Generator, duration_us=33000, n=31, max_shift=1.5,
                      max_rot=0.05, max_zoom=0.05) -> MotionTrajectory:
    """Smooth random motion starting at the identity pose.

    One motion category is drawn per call (vertical, horizontal, forward-
    backward, rotation) plus a smaller mix of the others, ramped linearly.
    """
    kind = rng.integers(4)
    amp = np.array([
        rng.uniform(-0.3, 0.3) * max_shift,
        rng.uniform(-0.3, 0.3) * max_shift,
        rng.uniform(-0.3, 0.3) * max_rot,
        rng.uniform(-0.3, 0.3) * max_zoom,
    ])
    amp[kind] = rng.choice([-1.0, 1.0]) * rng.uniform(0.6, 1.0) * (max_shift, max_shift, max_rot, max_zoom)[kind]
    ts = np.linspace(0, duration_us, n).round().astype(np.int64)
    samples = []
    for i, t in enumerate(ts):
        a = i / (n - 1)
        samples.append(MotionSample(int(t), a * amp[1], a * amp[0], a * amp[2], 1.0 + a * amp[3]))
    return MotionTrajectory(tuple(samples))
