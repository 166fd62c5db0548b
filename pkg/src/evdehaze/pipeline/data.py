"""Procedural (clean, hazy, events) triplets.

Clean scenes are random gradients, rectangles and disks. Haze follows the
scattering model with a procedural depth map, random scattering coefficient
and a slightly tinted air-light. Events come from rendering the scene along
a short random camera motion and running the threshold simulator; by
default the simulator sees the clean radiance, standing in for a
high-dynamic-range event sensor whose log response keeps edge contrast that
the 8-bit hazy frame loses. Clean and hazy frames are stored 8-bit
quantized, as a frame camera would deliver them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..event_sim import MotionSample, MotionTrajectory, SimConfig, random_trajectory, simulate_from_image
from ..events import EventStream, read_events, write_events
from ..haze import HazeParams, linear_depth, radial_depth, synthesize_haze, transmission_from_depth
from ..tensor_core import dequantize, load_image, load_tensor, quantize, save_image, save_tensor
from ..tpr import build_tpr


@dataclass(frozen=True)
class DataConfig:
    channels: int = 3
    beta_range: tuple = (0.6, 1.6)
    depth_near: tuple = (0.3, 0.8)
    depth_far: tuple = (1.0, 2.0)
    airlight_range: tuple = (0.75, 0.95)
    airlight_tint: float = 0.03
    duration_us: int = 33000
    motion_samples: int = 31
    motion: str = "random"  # or "static"
    event_source: str = "clean"  # or "hazy"
    c_pos: float = 0.2
    c_neg: float = 0.2
    levels: int = 3
    bins: int = 2
    quantize: bool = True


@dataclass
class ToyPair:
    clean: np.ndarray
    hazy: np.ndarray
    events: EventStream
    tpr: np.ndarray
    transmission: np.ndarray = field(repr=False, default=None)
    airlight: np.ndarray = field(repr=False, default=None)


def random_scene(rng: np.random.Generator, size: int, channels: int = 3) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    c0, c1 = rng.uniform(0.1, 0.9, (2, channels))
    ang = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(ang) * xx + np.sin(ang) * yy)
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-9)
    img = c0[:, None, None] * (1 - ramp) + c1[:, None, None] * ramp
    for _ in range(rng.integers(2, 5)):
        col = rng.uniform(0.05, 0.95, channels)
        if rng.random() < 0.7:
            y0, x0 = rng.integers(0, size - 2, 2)
            hh, ww = rng.integers(2, max(3, size // 2 + 1), 2)
            img[:, y0:y0 + hh, x0:x0 + ww] = col[:, None, None]
        else:
            cy, cx = rng.uniform(0, size, 2)
            r = rng.uniform(size / 8, size / 3)
            mask = (yy * (size - 1) - cy) ** 2 + (xx * (size - 1) - cx) ** 2 <= r * r
            img[:, mask] = col[:, None]
    return np.clip(img, 0.02, 0.98).astype(np.float32)


def _haze_for(rng, size, cfg: DataConfig, channels):
    near = rng.uniform(*cfg.depth_near)
    far = rng.uniform(*cfg.depth_far)
    if rng.random() < 0.5:
        depth = linear_depth(size, size, near, far, angle=rng.uniform(0, 2 * np.pi))
    else:
        depth = radial_depth(size, size, near, far, cy=rng.uniform(0, size - 1), cx=rng.uniform(0, size - 1))
    beta = rng.uniform(*cfg.beta_range)
    t = transmission_from_depth(depth, beta)
    a = rng.uniform(*cfg.airlight_range) + rng.uniform(-cfg.airlight_tint, cfg.airlight_tint, channels)
    return HazeParams(airlight=np.clip(a, 0, 1), transmission=t, beta=beta)


def make_pair(rng: np.random.Generator, size: int, cfg: DataConfig = DataConfig()) -> ToyPair:
    clean = random_scene(rng, size, cfg.channels)
    if cfg.quantize:
        clean = dequantize(quantize(clean))
    params = _haze_for(rng, size, cfg, cfg.channels)
    hazy = synthesize_haze(clean, params)
    if cfg.quantize:
        hazy = dequantize(quantize(hazy))
    if cfg.motion == "static":
        traj = MotionTrajectory((MotionSample(0), MotionSample(cfg.duration_us)))
    elif cfg.motion == "random":
        traj = random_trajectory(rng, cfg.duration_us, cfg.motion_samples)
    else:
        raise DataError(f"unknown motion mode {cfg.motion!r}")
    source = clean if cfg.event_source == "clean" else hazy
    events = simulate_from_image(source, traj, SimConfig(cfg.c_pos, cfg.c_neg))
    tpr = build_tpr(events, 0, cfg.duration_us, cfg.levels, cfg.bins).grid
    return ToyPair(clean, hazy, events, tpr, np.asarray(params.transmission), np.asarray(params.airlight))


def build_toy_dataset(n: int, size: int, rng: np.random.Generator, cfg: DataConfig = DataConfig()) -> list[ToyPair]:
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    if size % 4:
        raise DataError(f"size must be a multiple of 4, got {size}")
    return [make_pair(rng, size, cfg) for _ in range(n)]


def stack(pairs, attr) -> np.ndarray:
    return np.stack([getattr(p, attr) for p in pairs]).astype(np.float32)


def save_dataset(pairs, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, p in enumerate(pairs):
        ext = "ppm" if p.clean.shape[0] == 3 else "pgm"
        save_image(p.clean, directory / f"clean_{i:04d}.{ext}")
        save_image(p.hazy, directory / f"hazy_{i:04d}.{ext}")
        write_events(p.events, directory / f"events_{i:04d}.bin")
        save_tensor(p.tpr, directory / f"tpr_{i:04d}.ten")


def load_dataset(directory) -> list[ToyPair]:
    directory = Path(directory)
    pairs = []
    for clean_path in sorted(directory.glob("clean_*.p[gp]m")):
        idx = clean_path.stem.split("_")[1]
        ext = clean_path.suffix
        pairs.append(ToyPair(
            clean=load_image(clean_path),
            hazy=load_image(directory / f"hazy_{idx}{ext}"),
            events=read_events(directory / f"events_{idx}.bin"),
            tpr=load_tensor(directory / f"tpr_{idx}.ten"),
        ))
    if not pairs:
        raise DataError(f"{directory}: no clean_*.ppm/.pgm files")
    return pairs
