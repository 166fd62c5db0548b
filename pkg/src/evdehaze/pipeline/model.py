"""Event-conditioned epsilon predictor over small latents.

Layout (16x16 latents, widths c1/c2/c3)::

    [x_t ; x_hz] -> down1 (16x16, c1) -> pool -> down2 (8x8, c2) -> pool
    -> down3 (4x4, c3) -> mid (4x4, c3) [+ proj(cross_attn(x_e, mid))]
    -> up3 [mid ; down3] -> x2 -> up2 [. ; down2] -> x2 -> up1 [. ; down1] -> out

The hazy latent is concatenated to the noisy latent at the input. Each down
and up stage adds a per-channel timestep embedding before its nonlinearity.
Event features enter only through cross-attention, queries from x_e and
keys/values from the bottleneck; the attended result is projected 1x1 and
added residually. The projection starts at zero, so an events-on model is
initially the same function as its events-off twin.

Parameters shared by both variants are drawn from one seeded stream and the
event-specific ones (encoder, attention) from a second, so matched ablation
runs start from identical shared weights.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import Param, Var, ops
from ..errors import DataError
from ..tpr import EventEncoder


@dataclass(frozen=True)
class ModelConfig:
    latent_channels: int = 3
    widths: tuple = (16, 32, 32)
    emb_dim: int = 32
    events: bool = True
    tpr_channels: int = 6
    encoder_widths: tuple = (16, 32, 32)
    attn_dim: int = 32
    heads: int = 1
    attn_decoder: bool = False

    def to_dict(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        d["encoder_widths"] = list(self.encoder_widths)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        d["encoder_widths"] = tuple(d["encoder_widths"])
        return cls(**d)


def timestep_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding, (N, dim): sin half then cos half."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = t[:, None] * freqs[None]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


class ToyDenoiser:
    def __init__(self, cfg: ModelConfig = ModelConfig(), seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        shared_ss, event_ss = np.random.SeedSequence(seed).spawn(2)
        rng = np.random.default_rng(shared_ss)
        c = cfg.latent_channels
        c1, c2, c3 = cfg.widths
        self.params: dict[str, Param] = {}

        def conv(name, cin, cout, k=3, scale=1.0, zero=False):
            std = scale * np.sqrt(2.0 / (cin * k * k))
            w = np.zeros((cout, cin, k, k)) if zero else rng.normal(0, std, (cout, cin, k, k))
            self.params[name + ".w"] = Param(name + ".w", w, dtype)
            self.params[name + ".b"] = Param(name + ".b", np.zeros(cout), dtype)

        def dense(name, din, dout):
            self.params[name + ".w"] = Param(name + ".w", rng.normal(0, np.sqrt(1.0 / din), (din, dout)), dtype)
            self.params[name + ".b"] = Param(name + ".b", np.zeros(dout), dtype)

        dense("temb", cfg.emb_dim, cfg.emb_dim)
        conv("down1", 2 * c, c1)
        dense("down1.t", cfg.emb_dim, c1)
        conv("down2", c1, c2)
        dense("down2.t", cfg.emb_dim, c2)
        conv("down3", c2, c3)
        dense("down3.t", cfg.emb_dim, c3)
        conv("mid", c3, c3)
        conv("up3", 2 * c3, c3)
        dense("up3.t", cfg.emb_dim, c3)
        conv("up2", c3 + c2, c2)
        dense("up2.t", cfg.emb_dim, c2)
        conv("up1", c2 + c1, c1)
        dense("up1.t", cfg.emb_dim, c1)
        conv("out", c1, c, scale=0.1)

        self.encoder = None
        if cfg.events:
            erng = np.random.default_rng(event_ss)
            self.encoder = EventEncoder(cfg.tpr_channels, erng, cfg.encoder_widths, prefix="enc", dtype=dtype)
            for p in self.encoder.params:
                self.params[p.name] = p
            ce = self.encoder.out_channels
            sites = [("mid", c3)]
            if cfg.attn_decoder:
                sites += [("up3", c3), ("up2", c2)]
            for site, width in sites:
                d = cfg.attn_dim
                for nm, shape in ((f"attn.{site}.q", (ce, d)), (f"attn.{site}.k", (width, d)),
                                  (f"attn.{site}.v", (width, width))):
                    self.params[nm] = Param(nm, erng.normal(0, np.sqrt(1.0 / shape[0]), shape), dtype)
                nm = f"attn.{site}.proj"
                self.params[nm + ".w"] = Param(nm + ".w", np.zeros((width, width, 1, 1)), dtype)
                self.params[nm + ".b"] = Param(nm + ".b", np.zeros(width), dtype)

    # ------------------------------------------------------------------
    def parameters(self) -> list[Param]:
        return [self.params[k] for k in sorted(self.params)]

    def load_values(self, values: dict) -> None:
        missing = set(self.params) - set(values)
        if missing:
            raise DataError(f"checkpoint lacks params: {sorted(missing)[:5]}")
        for k, p in self.params.items():
            v = np.asarray(values[k])
            if v.shape != p.shape:
                raise DataError(f"param {k}: shape {v.shape} != {p.shape}")
            p.value = v.astype(p.dtype)

    def _p(self, name):
        return self.params[name]

    def _conv(self, name, x, k_pad=1):
        return ops.conv2d(x, self._p(name + ".w"), self._p(name + ".b"), pad=k_pad)

    def _tadd(self, name, h, emb):
        tv = ops.linear(emb, self._p(name + ".t.w"), self._p(name + ".t.b"))
        return ops.add(h, ops.reshape(tv, tv.shape + (1, 1)))

    def _attend(self, site, h, x_e):
        if x_e.shape[2:] != h.shape[2:]:
            hh, ww = h.shape[2:]
            if x_e.shape[2] > hh:
                x_e = ops.pool_to(x_e, hh, ww)
            else:
                x_e = ops.resize_bilinear(x_e, hh, ww)
        a = ops.cross_attention(x_e, h, self._p(f"attn.{site}.q"), self._p(f"attn.{site}.k"),
                                self._p(f"attn.{site}.v"), heads=self.cfg.heads)
        return ops.add(h, ops.conv2d(a, self._p(f"attn.{site}.proj.w"), self._p(f"attn.{site}.proj.b")))

    def event_features(self, tpr) -> Var:
        x = tpr if isinstance(tpr, Var) else Var(np.asarray(tpr, dtype=self.dtype))
        return self.encoder(x)

    def __call__(self, x_t, t, x_hz, tpr=None) -> Var:
        cfg = self.cfg
        x_t = x_t if isinstance(x_t, Var) else Var(np.asarray(x_t, dtype=self.dtype))
        x_hz = x_hz if isinstance(x_hz, Var) else Var(np.asarray(x_hz, dtype=self.dtype))
        if x_t.shape != x_hz.shape:
            raise DataError(f"x_t {x_t.shape} and x_hz {x_hz.shape} differ")
        n, _, h, w = x_t.shape
        if h % 4 or w % 4:
            raise DataError(f"latent extents must be multiples of 4, got {h}x{w}")
        t = np.broadcast_to(np.asarray(t), (n,))
        emb = Var(timestep_embedding(t, cfg.emb_dim).astype(self.dtype))
        emb = ops.silu(ops.linear(emb, self._p("temb.w"), self._p("temb.b")))

        x_e = None
        if cfg.events:
            if tpr is None:
                raise DataError("events-conditioned model called without a pyramid")
            x_e = self.event_features(tpr)

        d1 = ops.silu(self._tadd("down1", self._conv("down1", ops.concat([x_t, x_hz], axis=1)), emb))
        d2 = ops.silu(self._tadd("down2", self._conv("down2", ops.avg_pool2(d1)), emb))
        d3 = ops.silu(self._tadd("down3", self._conv("down3", ops.avg_pool2(d2)), emb))
        mid = ops.silu(self._conv("mid", d3))
        if x_e is not None:
            mid = self._attend("mid", mid, x_e)
        u3 = ops.silu(self._tadd("up3", self._conv("up3", ops.concat([mid, d3], axis=1)), emb))
        if x_e is not None and cfg.attn_decoder:
            u3 = self._attend("up3", u3, x_e)
        u2 = ops.silu(self._tadd("up2", self._conv("up2", ops.concat([ops.upsample2(u3), d2], axis=1)), emb))
        if x_e is not None and cfg.attn_decoder:
            u2 = self._attend("up2", u2, x_e)
        u1 = ops.silu(self._tadd("up1", self._conv("up1", ops.concat([ops.upsample2(u2), d1], axis=1)), emb))
        return self._conv("out", u1)
