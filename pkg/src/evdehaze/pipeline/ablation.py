"""Matched-run ablation harness.

Every configuration in a grid is trained on the same data split with the
same seeds and iteration count, then scored on the held-out split with each
sampler. Grids must vary exactly one field.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..tensor_core import atomic_write_bytes
from .train import TrainConfig, evaluate, split_dataset, train_toy

log = logging.getLogger(__name__)

SAMPLERS = (("ddpm", 5), ("ddpm", 15), ("ddim", 15))
COLUMNS = ("config", "psnr_db", "ssim", "wall_seconds")

# Toy-scale training settings used by the acceptance ablation. The optimizer
# default (5e-5, T=1000) is far too slow for 500 iterations on 64 pairs.
TOY_CONFIG = TrainConfig(lr=3e-3, T=200, batch_size=32, iterations=500, n_train=64, n_test=16, size=16,
                         monitor_every=0)


def events_grid(base: TrainConfig = TOY_CONFIG) -> list[TrainConfig]:
    """Events ON/OFF pair differing only in conditioning."""
    return [replace(base, conditioning="events"), replace(base, conditioning="none")]


def _flat(cfg: TrainConfig) -> dict:
    d = cfg.to_dict()
    data = d.pop("data")
    d.update({f"data.{k}": v for k, v in data.items()})
    d.pop("seed")
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def ablated_factor(configs) -> str | None:
    """Name of the single field the grid varies (seeds excluded).

    Returns None for a one-config grid. Raises DataError when configs differ
    in more than one field.
    """
    configs = list(configs)
    if not configs:
        raise DataError("empty configuration grid")
    flats = [_flat(c) for c in configs]
    differing = sorted({k for f in flats[1:] for k in f if f[k] != flats[0][k]})
    if len(differing) > 1:
        raise DataError(f"configurations differ in more than one factor: {', '.join(differing)}")
    return differing[0] if differing else None


@dataclass
class AblationRow:
    factor: str
    value: object
    sampler: str
    steps: int
    seed: int | str
    psnr_db: float
    ssim: float
    wall_seconds: float

    @property
    def config(self) -> str:
        return f"{self.factor}={self.value};{self.sampler}-{self.steps};seed={self.seed}"

    def as_csv_row(self) -> list:
        return [self.config, f"{self.psnr_db:.4f}", f"{self.ssim:.4f}", f"{self.wall_seconds:.3f}"]


@dataclass
class AblationTable:
    factor: str
    rows: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict, repr=False)  # (value, sampler, steps, seed) -> images

    def mean(self, value=None, sampler=None, steps=None) -> dict:
        sel = [r for r in self.rows
               if (value is None or r.value == value) and (sampler is None or r.sampler == sampler)
               and (steps is None or r.steps == steps)]
        if not sel:
            raise DataError("no rows match the selection")
        return {"psnr_db": float(np.mean([r.psnr_db for r in sel])),
                "ssim": float(np.mean([r.ssim for r in sel])),
                "n": len(sel)}

    def summary_rows(self) -> list[AblationRow]:
        keys = []
        for r in self.rows:
            k = (r.value, r.sampler, r.steps)
            if k not in keys:
                keys.append(k)
        out = []
        for value, sampler, steps in keys:
            sel = [r for r in self.rows if (r.value, r.sampler, r.steps) == (value, sampler, steps)]
            out.append(AblationRow(self.factor, value, sampler, steps, "mean",
                                   float(np.mean([r.psnr_db for r in sel])),
                                   float(np.mean([r.ssim for r in sel])),
                                   float(np.sum([r.wall_seconds for r in sel]))))
        return out

    def to_csv(self, with_summary: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows + (self.summary_rows() if with_summary else []):
            w.writerow(r.as_csv_row())
        return buf.getvalue()

    def write_csv(self, path, with_summary: bool = True) -> Path:
        path = Path(path)
        atomic_write_bytes(path, self.to_csv(with_summary).encode())
        return path


def ablate(configs, samplers=SAMPLERS, seeds=(0, 1, 2), eta: float = 0.0,
           keep_outputs: bool = False) -> AblationTable:
    """Train every config for every seed and score each sampler on the held-out split."""
    configs = list(configs)
    factor = ablated_factor(configs) or "base"
    for sampler, steps in samplers:
        if sampler not in ("ddpm", "ddim"):
            raise DataError(f"unknown sampler {sampler!r}")
        if steps < 1:
            raise DataError(f"steps must be >= 1, got {steps}")
    table = AblationTable(factor)
    for seed in seeds:
        for cfg in configs:
            cfg = replace(cfg, seed=int(seed))
            value = _flat(cfg)[factor] if factor != "base" else "-"
            train_pairs, test_pairs = split_dataset(cfg)
            t0 = time.perf_counter()
            model = train_toy(cfg, train_pairs).model
            train_s = time.perf_counter() - t0
            for sampler, steps in samplers:
                t1 = time.perf_counter()
                ev = evaluate(model, cfg, test_pairs, sampler, steps, eta)
                row = AblationRow(factor, value, sampler, steps, int(seed), float(np.mean(ev["psnr"])),
                                  float(np.mean(ev["ssim"])), train_s + time.perf_counter() - t1)
                log.info("%s psnr %.3f ssim %.4f", row.config, row.psnr_db, row.ssim)
                table.rows.append(row)
                if keep_outputs:
                    table.outputs[(value, sampler, steps, int(seed))] = ev["outputs"]
    return table
