"""Central finite differences against the analytic gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import backward, no_grad


@dataclass
class GradCheckReport:
    errors: dict
    max_rel_error: float
    tol: float
    coords_checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def _rel(a: np.ndarray, n: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def grad_check(fn, inputs, h=1e-3, tol=1e-4, max_coords=None, rng=None) -> GradCheckReport:
    """Compare d fn / d input for each Var in ``inputs``.

    ``fn`` takes no arguments and rebuilds the graph from the current input
    values, returning a scalar Var. Relative error per input is
    ||analytic - numeric|| / max(||analytic||, ||numeric||) over the checked
    coordinates (all of them, or a random subset of ``max_coords``).
    """
    for x in inputs:
        x.requires_grad = True
        x.grad = np.zeros_like(x.value)
    out = fn()
    if out.value.size != 1:
        raise ValueError(f"grad_check needs a scalar-valued graph, got shape {out.shape}")
    backward(out)
    rng = rng if rng is not None else np.random.default_rng(0)
    errors = {}
    checked = 0
    for i, x in enumerate(inputs):
        analytic = (x.grad if x.grad is not None else np.zeros_like(x.value)).reshape(-1)
        flat = x.value.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        numeric = np.zeros(idx.size)
        with no_grad():
            for j, k in enumerate(idx):
                orig = flat[k]
                flat[k] = orig + h
                fp = float(fn().value.reshape(-1)[0])
                flat[k] = orig - h
                fm = float(fn().value.reshape(-1)[0])
                flat[k] = orig
                numeric[j] = (fp - fm) / (2 * h)
        name = getattr(x, "name", None) or f"input{i}"
        errors[name] = _rel(analytic[idx].astype(np.float64), numeric)
        checked += idx.size
    worst = max(errors.values()) if errors else 0.0
    return GradCheckReport(errors=errors, max_rel_error=worst, tol=tol, coords_checked=checked)
