"""Training loop, conditional sampling and held-out evaluation for the toy model."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..autodiff import OptimizerState, Var, adamw_step, backward, load_checkpoint, no_grad, ops, save_checkpoint, zero_grads
from ..diffusion import NoiseSchedule, ddim_sample, ddpm_sample, init_latent, make_schedule, simple_loss
from ..errors import DataError
from ..tensor_core import RNG_ALGORITHM
from .codec import LatentCodec
from .data import DataConfig, build_toy_dataset, stack
from .metrics import psnr, ssim, total_loss
from .model import ModelConfig, ToyDenoiser

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, message, iteration):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5
    lambda_pix: float = 1.0
    lambda_perc: float = 0.2
    batch_size: int = 8
    iterations: int = 500
    seed: int = 0
    conditioning: str = "events"  # or "none"
    n_train: int = 64
    n_test: int = 16
    size: int = 16
    codec: str = "identity"
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    weight_decay: float = 0.01
    widths: tuple = (16, 32, 32)
    attn_decoder: bool = False
    finetune_x0: bool = False
    finetune_t_frac: float = 0.25  # x0-loss steps drawn from 1..ceil(frac*T)
    monitor_every: int = 100
    monitor_steps: int = 15
    init: str = "scheduled"
    latent_shift: float = 0.0
    latent_scale: float = 1.0
    data: DataConfig = DataConfig()

    def __post_init__(self):
        if self.lambda_pix < 0 or self.lambda_perc < 0:
            raise DataError("loss weights must be non-negative")
        if self.conditioning not in ("events", "none"):
            raise DataError(f"conditioning must be 'events' or 'none', got {self.conditioning!r}")
        if self.lr < 0:
            raise DataError("lr must be >= 0")

    def to_latent(self, images, codec: LatentCodec):
        z = codec.encode(images)
        if isinstance(z, Var):
            return ops.mul(ops.sub(z, self.latent_shift), self.latent_scale)
        return ((z - self.latent_shift) * self.latent_scale).astype(np.float32)

    def from_latent(self, z, codec: LatentCodec):
        if isinstance(z, Var):
            return codec.decode(ops.add(ops.mul(z, 1.0 / self.latent_scale), self.latent_shift))
        return codec.decode((np.asarray(z) / self.latent_scale + self.latent_shift).astype(np.float32))

    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.T, "linear", self.beta_start, self.beta_end)

    def model_config(self) -> ModelConfig:
        d = self.data
        return ModelConfig(latent_channels=d.channels, widths=tuple(self.widths),
                           events=self.conditioning == "events", tpr_channels=d.levels * d.bins,
                           attn_decoder=self.attn_decoder)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        data = d.pop("data", {}) or {}
        data = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        known = {f.name for f in fields(cls)}
        d = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items() if k in known}
        return cls(data=DataConfig(**data), **d)


@dataclass
class TrainResult:
    model: ToyDenoiser
    config: TrainConfig
    losses: list = field(default_factory=list)
    monitor: list = field(default_factory=list)
    checkpoint: Path | None = None


def split_dataset(cfg: TrainConfig):
    """(train, test) pairs, both derived from ``cfg.seed``."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    pairs = build_toy_dataset(cfg.n_train + cfg.n_test, cfg.size, rng, cfg.data)
    return pairs[:cfg.n_train], pairs[cfg.n_train:]


def _denoiser(model: ToyDenoiser, x_hz, tpr):
    def fn(x_t, t, cond=None):
        return model(x_t, t, x_hz, tpr if model.cfg.events else None)
    return fn


def train_toy(cfg: TrainConfig, train_pairs=None, out_dir=None) -> TrainResult:
    if train_pairs is None:
        train_pairs, _ = split_dataset(cfg)
    codec = LatentCodec(cfg.codec)
    sched = cfg.schedule()
    model = ToyDenoiser(cfg.model_config(), seed=cfg.seed)
    params = model.parameters()
    state = OptimizerState.for_params(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))

    clean = stack(train_pairs, "clean")
    hazy = stack(train_pairs, "hazy")
    tprs = stack(train_pairs, "tpr")
    x0_all = cfg.to_latent(clean, codec)
    xhz_all = cfg.to_latent(hazy, codec)
    result = TrainResult(model=model, config=cfg)
    n = len(train_pairs)
    for it in range(1, cfg.iterations + 1):
        idx = rng.choice(n, size=min(cfg.batch_size, n), replace=False)
        den = _denoiser(model, xhz_all[idx], tprs[idx])
        loss, parts = simple_loss(den, x0_all[idx], None, rng, sched, return_parts=True)
        if cfg.finetune_x0:
            loss = ops.add(loss, _x0_loss(model, cfg, sched, codec, rng, clean[idx], x0_all[idx],
                                          xhz_all[idx], tprs[idx]))
        value = float(loss.value)
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss {value}", it)
        zero_grads(params)
        backward(loss)
        adamw_step(params, state)
        result.losses.append(value)
        if cfg.monitor_every and it % cfg.monitor_every == 0:
            mon = monitor_metric(model, cfg, train_pairs[:2])
            result.monitor.append({"iteration": it, "total_loss": mon})
            log.info("iter %d eps-loss %.4f monitor total_loss %.4f", it, value, mon)
    if out_dir is not None:
        result.checkpoint = save_checkpoint(out_dir, params, meta={
            "train_config": cfg.to_dict(), "model_config": model.cfg.to_dict(),
            "rng": RNG_ALGORITHM, "losses": result.losses, "monitor": result.monitor,
        })
    return result


def _x0_loss(model, cfg, sched, codec, rng, clean, x0, x_hz, tpr):
    """Image-space loss through a one-step clean estimate.

    Uses its own step draw from 1..ceil(finetune_t_frac * T).
    """
    t_max = max(int(np.ceil(cfg.finetune_t_frac * sched.T)), 1)
    t = rng.integers(1, t_max + 1, size=x0.shape[0])
    eps = rng.standard_normal(x0.shape, dtype=np.float32)
    ab = sched.abar(t).reshape(-1, 1, 1, 1)
    x_t = (np.sqrt(ab) * x0 + np.sqrt(1 - ab) * eps).astype(np.float32)
    eps_hat = model(x_t, t, x_hz, tpr if model.cfg.events else None)
    x0_hat = ops.mul(ops.sub(x_t, ops.mul(eps_hat, np.sqrt(1 - ab).astype(np.float32))),
                     (1.0 / np.sqrt(ab)).astype(np.float32))
    return total_loss(cfg.from_latent(x0_hat, codec), clean, cfg.lambda_pix, cfg.lambda_perc)


def dehaze(model: ToyDenoiser, cfg: "TrainConfig", hazy: np.ndarray, tpr, sampler: str = "ddim",
           steps: int = 15, eta: float = 0.0, seed: int = 0, init=None) -> np.ndarray:
    """Batch (N, C, H, W) hazy images -> dehazed images clipped to [0, 1]."""
    sched = cfg.schedule()
    codec = LatentCodec(cfg.codec)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    x_hz = cfg.to_latent(np.asarray(hazy, dtype=np.float32), codec)
    x_T = init_latent(x_hz, sched, rng, init or cfg.init)
    den = _denoiser(model, x_hz, tpr)
    with no_grad():
        if sampler == "ddim":
            x0 = ddim_sample(den, x_T, sched, steps, eta=eta, rng=rng)
        elif sampler == "ddpm":
            x0 = ddpm_sample(den, x_T, sched, rng, steps)
        else:
            raise DataError(f"unknown sampler {sampler!r}")
    return np.clip(cfg.from_latent(x0, codec), 0.0, 1.0).astype(np.float32)


def monitor_metric(model, cfg, pairs) -> float:
    out = dehaze(model, cfg, stack(pairs, "hazy"), stack(pairs, "tpr"), "ddim", cfg.monitor_steps,
                 seed=cfg.seed)
    return total_loss(out, stack(pairs, "clean"), cfg.lambda_pix, cfg.lambda_perc)


def evaluate(model, cfg: TrainConfig, pairs, sampler="ddim", steps=15, eta=0.0, seed=None):
    """Per-image PSNR/SSIM plus the dehazed outputs."""
    seed = cfg.seed if seed is None else seed
    out = dehaze(model, cfg, stack(pairs, "hazy"), stack(pairs, "tpr"), sampler, steps, eta, seed=seed)
    clean = stack(pairs, "clean")
    ps = [psnr(o, c) for o, c in zip(out, clean)]
    ss = [ssim(o, c) for o, c in zip(out, clean)]
    return {"psnr": ps, "ssim": ss, "outputs": out}


def load_model(checkpoint_dir) -> tuple[ToyDenoiser, TrainConfig]:
    values, meta = load_checkpoint(checkpoint_dir)
    cfg = TrainConfig.from_dict(meta["train_config"])
    model = ToyDenoiser(ModelConfig.from_dict(meta["model_config"]), seed=cfg.seed)
    model.load_values(values)
    return model, cfg
