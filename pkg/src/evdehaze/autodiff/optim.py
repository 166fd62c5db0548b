"""AdamW with decoupled weight decay and bias-corrected moments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OptimizerError(RuntimeError):
    pass


@dataclass
class OptimizerState:
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params, **hyper) -> "OptimizerState":
        state = cls(**hyper)
        for p in params:
            state.m[p.name] = np.zeros(p.shape, dtype=np.float64)
            state.v[p.name] = np.zeros(p.shape, dtype=np.float64)
        return state


def adamw_step(params, state: OptimizerState) -> None:
    """One in-place update of every param in ``params`` (an iterable of Param)."""
    params = list(params)
    for p in params:
        if p.name not in state.m:
            raise OptimizerError(f"optimizer state has no moments for param {p.name!r}")
        if p.grad is None or p.grad.shape != p.shape:
            raise OptimizerError(f"param {p.name!r} has no gradient of matching shape")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p in params:
        g = p.grad.astype(np.float64)
        m = state.m[p.name] = b1 * state.m[p.name] + (1.0 - b1) * g
        v = state.v[p.name] = b2 * state.v[p.name] + (1.0 - b2) * g * g
        w = p.value.astype(np.float64)
        w *= 1.0 - state.lr * state.weight_decay
        w -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.value = w.astype(p.value.dtype)


def zero_grads(params) -> None:
    for p in params:
        p.grad = np.zeros_like(p.value)
