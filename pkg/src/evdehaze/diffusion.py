"""Noise schedules, forward noising, the epsilon objective and DDPM/DDIM samplers.

Step indices run 1..T. ``sched.abar(0) == 1`` by convention, which makes the
final reverse step land on the clean estimate. The forward marginal is
``x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps`` with the *cumulative*
product ``abar_t``.

A denoiser is any callable ``(x_t, t, cond) -> eps_hat`` where ``x_t`` is a
batch (N, ...) and ``t`` an int array of shape (N,). It may return a numpy
array or an autodiff Var.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Var, ops
from .errors import DataError


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray  # float64, length T, betas[t - 1] is beta_t

    @property
    def T(self) -> int:
        return len(self.betas)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(1.0 - self.betas)

    def abar(self, t):
        """Cumulative alpha at step(s) ``t`` in 0..T (0 gives 1)."""
        table = np.concatenate([[1.0], self.alpha_bars])
        return table[np.asarray(t)]


def make_schedule(T: int = 1000, kind: str = "linear", beta_start: float = 1e-4,
                  beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise DataError(f"T must be >= 1, got {T}")
    if kind != "linear":
        raise DataError(f"unknown schedule kind {kind!r}")
    if not 0 < beta_start <= beta_end < 1:
        raise DataError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return NoiseSchedule(np.linspace(beta_start, beta_end, T, dtype=np.float64))


def _bcast(v, x):
    v = np.asarray(v, dtype=np.float64)
    return v.reshape(v.shape + (1,) * (x.ndim - v.ndim))


def _check_t(t, sched):
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > sched.T):
        raise DataError(f"step index outside 1..{sched.T}")
    return t


def q_sample(x0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Forward marginal at step ``t`` (scalar or per-batch-item array)."""
    x0 = np.asarray(x0)
    if np.shape(eps) != x0.shape:
        raise DataError(f"eps dims {np.shape(eps)} != x0 dims {x0.shape}")
    t = _check_t(t, sched)
    ab = _bcast(sched.abar(t), x0) if t.ndim else sched.abar(t)
    out = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * np.asarray(eps)
    return out.astype(x0.dtype)


def simple_loss(denoiser, x0: np.ndarray, cond, rng: np.random.Generator, sched: NoiseSchedule,
                return_parts=False):
    """Mean squared error between drawn noise and its prediction.

    Returns a Var when the denoiser returns one (so gradients flow), else a
    float.
    """
    x0 = np.asarray(x0, dtype=np.float32)
    n = x0.shape[0]
    t = rng.integers(1, sched.T + 1, size=n)
    eps = rng.standard_normal(x0.shape, dtype=np.float32)
    x_t = q_sample(x0, t, eps, sched)
    pred = denoiser(x_t, t, cond)
    if isinstance(pred, Var):
        loss = ops.mean(ops.square(ops.sub(pred, eps)))
    else:
        diff = np.asarray(pred, dtype=np.float64) - eps
        loss = float(np.mean(diff * diff))
    if return_parts:
        return loss, {"t": t, "eps": eps, "x_t": x_t}
    return loss


def _eval(denoiser, x, t, cond) -> np.ndarray:
    out = denoiser(x, np.full(x.shape[0], t, dtype=np.int64), cond)
    out = out.value if isinstance(out, Var) else np.asarray(out)
    if out.shape != x.shape:
        raise DataError(f"denoiser output dims {out.shape} != input dims {x.shape}")
    return out


def sub_schedule(T: int, steps: int) -> np.ndarray:
    """Descending step indices, evenly spaced, always containing T and 1."""
    if steps < 1:
        raise DataError("steps must be >= 1")
    if steps > T:
        raise DataError(f"steps={steps} exceeds T={T}")
    if steps == 1:
        return np.array([T])
    idx = np.round(np.linspace(1, T, steps)).astype(np.int64)
    return idx[::-1]


def predict_x0(x_t, eps_hat, abar_t):
    return (x_t - np.sqrt(1.0 - abar_t) * eps_hat) / np.sqrt(abar_t)


def ddim_sigma(sched: NoiseSchedule, t: int, t_prev: int, eta: float) -> float:
    a, ap = float(sched.abar(t)), float(sched.abar(t_prev))
    return eta * np.sqrt((1.0 - ap) / (1.0 - a)) * np.sqrt(1.0 - a / ap)


def ddim_update(x_t, eps_hat, abar_t, abar_prev, sigma_t, z=None):
    """The DDIM update given a noise prediction."""
    carry2 = 1.0 - abar_prev - sigma_t ** 2
    if carry2 < -1e-12:
        raise DataError(f"sigma_t^2={sigma_t ** 2:.6g} exceeds 1 - abar_prev={1.0 - abar_prev:.6g}")
    x0_hat = predict_x0(x_t, eps_hat, abar_t)
    out = np.sqrt(abar_prev) * x0_hat + np.sqrt(max(carry2, 0.0)) * eps_hat
    if sigma_t > 0:
        if z is None:
            raise DataError("sigma_t > 0 needs a noise draw z")
        out = out + sigma_t * z
    return out


def ddim_step(denoiser, x_t, t: int, t_prev: int, sched: NoiseSchedule, sigma_t: float = 0.0,
              z=None, cond=None):
    if not 0 <= t_prev < t:
        raise DataError(f"need 0 <= t_prev < t, got t={t}, t_prev={t_prev}")
    if sigma_t < 0:
        raise DataError("sigma_t must be >= 0")
    _check_t(t, sched)
    x_t = np.asarray(x_t)
    eps_hat = _eval(denoiser, x_t, t, cond).astype(np.float64)
    out = ddim_update(x_t.astype(np.float64), eps_hat, float(sched.abar(t)), float(sched.abar(t_prev)),
                      sigma_t, z)
    return out.astype(x_t.dtype)


def ddim_sample(denoiser, x_T, sched: NoiseSchedule, steps: int, eta: float = 0.0, rng=None,
                cond=None) -> np.ndarray:
    taus = sub_schedule(sched.T, steps)
    x = np.asarray(x_T)
    if eta > 0 and rng is None:
        raise DataError("eta > 0 needs an rng")
    for i, t in enumerate(taus):
        t_prev = int(taus[i + 1]) if i + 1 < len(taus) else 0
        sigma = ddim_sigma(sched, int(t), t_prev, eta) if eta > 0 else 0.0
        z = rng.standard_normal(x.shape, dtype=np.float32) if sigma > 0 else None
        x = ddim_step(denoiser, x, int(t), t_prev, sched, sigma, z, cond)
    return x


def ddpm_posterior(x_t, eps_hat, abar_t, abar_prev):
    """Mean and variance of q(x_prev | x_t, x0_hat) for a possibly strided jump."""
    beta_eff = 1.0 - abar_t / abar_prev
    x0_hat = predict_x0(x_t, eps_hat, abar_t)
    mean = (np.sqrt(abar_prev) * beta_eff / (1.0 - abar_t)) * x0_hat \
        + (np.sqrt(1.0 - beta_eff) * (1.0 - abar_prev) / (1.0 - abar_t)) * x_t
    var = (1.0 - abar_prev) / (1.0 - abar_t) * beta_eff
    return mean, var


def ddpm_sample(denoiser, x_T, sched: NoiseSchedule, rng: np.random.Generator, steps=None,
                cond=None) -> np.ndarray:
    """Ancestral sampling with posterior variance; the final step adds no noise."""
    steps = sched.T if steps is None else steps
    taus = sub_schedule(sched.T, steps)
    x = np.asarray(x_T)
    dtype = x.dtype
    x = x.astype(np.float64)
    for i, t in enumerate(taus):
        t_prev = int(taus[i + 1]) if i + 1 < len(taus) else 0
        eps_hat = _eval(denoiser, x.astype(dtype), int(t), cond).astype(np.float64)
        mean, var = ddpm_posterior(x, eps_hat, float(sched.abar(t)), float(sched.abar(t_prev)))
        if t_prev > 0:
            x = mean + np.sqrt(var) * rng.standard_normal(x.shape)
        else:
            x = mean
    return x.astype(dtype)


def gaussian_oracle_denoiser(mu, sigma2, sched: NoiseSchedule):
    """Exact E[eps | x_t] when data are N(mu, sigma2 I).

    With x_t = sqrt(a) x0 + sqrt(1-a) eps the pair (x0, x_t) is jointly
    Gaussian, Cov(x0, x_t) = sqrt(a) sigma2 and Var(x_t) = a sigma2 + 1 - a,
    so E[x0 | x_t] = mu + sqrt(a) sigma2 / (a sigma2 + 1 - a) (x_t - sqrt(a) mu).
    """
    if sigma2 < 0:
        raise DataError("sigma2 must be >= 0")

    def denoise(x_t, t, cond=None):
        x = np.asarray(x_t, dtype=np.float64)
        a = _bcast(sched.abar(t), x)
        gain = np.sqrt(a) * sigma2 / (a * sigma2 + 1.0 - a)
        x0_mean = mu + gain * (x - np.sqrt(a) * mu)
        return (x - np.sqrt(a) * x0_mean) / np.sqrt(1.0 - a)

    return denoise


def init_latent(x_hz: np.ndarray, sched: NoiseSchedule, rng: np.random.Generator,
                mode: str = "scheduled") -> np.ndarray:
    """Starting point x_T from the hazy latent.

    ``scheduled``: the forward marginal at T. ``paper-literal``: x_hz plus
    unit-variance noise, unscaled.
    """
    eps = rng.standard_normal(np.shape(x_hz), dtype=np.float32)
    if mode == "scheduled":
        return q_sample(np.asarray(x_hz, dtype=np.float32), sched.T, eps, sched)
    if mode == "paper-literal":
        return (np.asarray(x_hz, dtype=np.float32) + eps).astype(np.float32)
    raise DataError(f"unknown init mode {mode!r}")
