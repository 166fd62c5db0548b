"""Temporal pyramid voxel grids and the three-stage convolutional encoder.

Level ``l`` (1-based) of the pyramid covers a window of length
``(t1 - t0) / 2**(l - 1)`` anchored at ``t1`` (default) or ``t0``; its span
is cut into ``M`` equal half-open bins and every event inside adds its
polarity to the bin's (y, x) cell. Channel ``(l - 1) * M + b`` holds bin
``b`` of level ``l``. Bin assignment is done in integer arithmetic so that
fractional span boundaries never round the wrong way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Param, Var, no_grad, ops
from .errors import DataError
from .events import EventStream


@dataclass(frozen=True)
class TemporalPyramid:
    grid: np.ndarray  # (L*M, H, W), or (L*M*2, H, W) in split-polarity mode
    levels: int
    bins: int
    split_polarity: bool = False

    @property
    def channels(self) -> int:
        return self.grid.shape[0]


def build_tpr(stream: EventStream, t0: int, t1: int, levels: int = 3, bins: int = 2,
              anchor: str = "end", split_polarity: bool = False,
              normalize: bool = False) -> TemporalPyramid:
    if not t0 < t1:
        raise DataError(f"invalid window [{t0}, {t1})")
    if levels < 1 or bins < 1:
        raise DataError(f"levels and bins must be >= 1, got L={levels}, M={bins}")
    if anchor not in ("end", "start"):
        raise DataError(f"anchor must be 'end' or 'start', got {anchor!r}")
    h, w = stream.height, stream.width
    planes = 2 if split_polarity else 1
    grid = np.zeros((levels * bins * planes, h, w), dtype=np.float64)
    t = stream.t.astype(np.int64)
    inside = (t >= t0) & (t < t1)
    t, x, y, p = t[inside], stream.x[inside], stream.y[inside], stream.p[inside].astype(np.int64)
    span_total = t1 - t0
    for lvl in range(levels):
        scale = 1 << lvl
        # position of the event inside the level span, times 2**lvl, in [0, span_total)
        if anchor == "end":
            pos = scale * (t - t1) + span_total
        else:
            pos = scale * (t - t0)
        keep = (pos >= 0) & (pos < span_total)
        b = (bins * pos[keep]) // span_total
        ch = lvl * bins + b
        if split_polarity:
            ch = ch * 2 + (p[keep] < 0)
            np.add.at(grid, (ch, y[keep], x[keep]), 1.0)
        else:
            np.add.at(grid, (ch, y[keep], x[keep]), p[keep])
    if normalize and t.size:
        grid /= t.size
    return TemporalPyramid(grid.astype(np.float32), levels, bins, split_polarity)


class EventEncoder:
    """conv3x3 -> ReLU -> avgpool2, conv3x3 -> ReLU -> avgpool2, conv3x3 -> ReLU."""

    def __init__(self, in_channels: int, rng: np.random.Generator, widths=(16, 32, 32),
                 prefix="enc", dtype=np.float32):
        self.in_channels = in_channels
        self.widths = tuple(widths)
        self.params = []
        cin = in_channels
        for i, cout in enumerate(self.widths):
            std = np.sqrt(2.0 / (cin * 9))
            self.params.append(Param(f"{prefix}.conv{i}.w", rng.normal(0, std, (cout, cin, 3, 3)), dtype))
            self.params.append(Param(f"{prefix}.conv{i}.b", np.zeros(cout), dtype))
            cin = cout

    @property
    def out_channels(self) -> int:
        return self.widths[-1]

    def __call__(self, x: Var) -> Var:
        if x.shape[1] != self.in_channels:
            raise DataError(f"encoder expects {self.in_channels} input channels, got {x.shape[1]}")
        for i in range(3):
            x = ops.relu(ops.conv2d(x, self.params[2 * i], self.params[2 * i + 1], pad=1))
            if i < 2:
                x = ops.avg_pool2(x)
        return x


def encode_events(tpr: TemporalPyramid | np.ndarray, encoder: EventEncoder) -> np.ndarray:
    """x_e of shape (C, H/4, W/4) for one pyramid."""
    grid = tpr.grid if isinstance(tpr, TemporalPyramid) else np.asarray(tpr)
    with no_grad():
        out = encoder(Var(grid[None].astype(encoder.params[0].dtype)))
    return out.value[0]
