"""Stand-in for a frozen latent autoencoder.

``identity`` passes images through; ``avgpool2`` averages 2x2 blocks on the
way in and upsamples bilinearly on the way out. Both accept numpy batches
(N, C, H, W) or autodiff Vars.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Var, no_grad, ops
from ..errors import DataError


@dataclass(frozen=True)
class LatentCodec:
    mode: str = "identity"

    def __post_init__(self):
        if self.mode not in ("identity", "avgpool2"):
            raise DataError(f"unknown codec mode {self.mode!r}")

    @property
    def factor(self) -> int:
        return 1 if self.mode == "identity" else 2

    def encode(self, x):
        if self.mode == "identity":
            return x
        return _apply(x, ops.avg_pool2)

    def decode(self, z):
        if self.mode == "identity":
            return z
        return _apply(z, lambda v: ops.resize_bilinear(v, v.shape[2] * 2, v.shape[3] * 2))


def _apply(x, fn):
    if isinstance(x, Var):
        return fn(x)
    with no_grad():
        return fn(Var(np.asarray(x))).value
