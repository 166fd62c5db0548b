"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/validation/IO error. Human
readable messages go to stderr; results go to files. Each successful run
leaves ``run-<verb>.json`` (a RunManifest) in ``--out-dir``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError
from .tensor_core import RNG_ALGORITHM, atomic_write_bytes

log = logging.getLogger("evdehaze")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


@dataclass
class RunManifest:
    verb: str
    flags: dict
    seed: int
    config_hash: str
    version: dict
    outputs: list
    wall_seconds: float
    summary: dict | None = None

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / f"run-{self.verb}.json"
        body = {f.name: getattr(self, f.name) for f in fields(self)}
        atomic_write_bytes(path, (json.dumps(body, indent=2, sort_keys=True, default=str) + "\n").encode())
        return path


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def config_hash(flags: dict) -> str:
    skip = {"out_dir", "threads", "config", "log_level", "func"}
    body = {k: _jsonable(v) for k, v in sorted(flags.items()) if k not in skip}
    return hashlib.sha256(json.dumps(body, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _versions() -> dict:
    return {"evdehaze": __version__, "numpy": np.__version__, "python": platform.python_version(),
            "rng": RNG_ALGORITHM}


# ---------------------------------------------------------------------------
# shared flag groups

def _common(p):
    g = p.add_argument_group("global")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=1, help="BLAS/OpenMP threads (default 1)")
    g.add_argument("--out-dir", type=Path, default=Path("."))
    g.add_argument("--config", type=Path, help="flat key=value file mirroring the flags")
    g.add_argument("--log-level", default="WARNING")


def _train_flags(p):
    from .pipeline.train import TrainConfig
    d = TrainConfig()
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--lambda-pix", type=float, default=d.lambda_pix)
    p.add_argument("--lambda-perc", type=float, default=d.lambda_perc)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--iterations", type=int, default=d.iterations)
    p.add_argument("--conditioning", choices=("events", "none"), default=d.conditioning)
    p.add_argument("--n-train", type=int, default=d.n_train)
    p.add_argument("--n-test", type=int, default=d.n_test)
    p.add_argument("--size", type=int, default=d.size)
    p.add_argument("--codec", choices=("identity", "avgpool2"), default=d.codec)
    p.add_argument("--T", type=int, default=d.T, dest="T")
    p.add_argument("--beta-start", type=float, default=d.beta_start)
    p.add_argument("--beta-end", type=float, default=d.beta_end)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)
    p.add_argument("--attn-decoder", action="store_true")
    p.add_argument("--finetune-x0", action="store_true")
    p.add_argument("--init", choices=("scheduled", "paper-literal"), default=d.init)
    p.add_argument("--monitor-every", type=int, default=d.monitor_every)
    p.add_argument("--latent-shift", type=float, default=d.latent_shift)
    p.add_argument("--latent-scale", type=float, default=d.latent_scale)


def _train_config(args):
    from .pipeline.train import TrainConfig
    names = {f.name for f in fields(TrainConfig)} - {"data", "widths", "monitor_steps"}
    return TrainConfig(**{k: getattr(args, k) for k in names if hasattr(args, k)})


def _out(args, path) -> Path:
    path = Path(path)
    return path if path.is_absolute() else Path(args.out_dir) / path


# ---------------------------------------------------------------------------
# verbs

def cmd_simulate_events(args):
    from .event_sim import SimConfig, read_trajectory, simulate_from_image
    from .events import write_events
    from .tensor_core import load_image
    img = load_image(args.image)
    traj = read_trajectory(args.traj)
    stream = simulate_from_image(img, traj, SimConfig(args.cpos, args.cneg, args.refractory, args.log_eps))
    out = _out(args, args.out)
    write_events(stream, out)
    return [out], {"events": len(stream)}


def cmd_make_haze(args):
    from .haze import HazeParams, synthesize_haze, transmission_from_depth
    from .tensor_core import load_image, load_tensor, save_image
    clean = load_image(args.clean)
    depth = load_tensor(args.depth)
    if depth.ndim == 3 and depth.shape[0] == 1:
        depth = depth[0]
    if depth.shape != clean.shape[1:]:
        raise DataError(f"{args.depth}: depth dims {depth.shape} do not match image {clean.shape[1:]}")
    t = transmission_from_depth(depth, args.beta)
    hazy = synthesize_haze(clean, HazeParams(args.airlight, t, args.beta))
    out = _out(args, args.out)
    save_image(hazy, out)
    return [out], {"mean_transmission": float(np.mean(t))}


def cmd_histogram(args):
    from .haze import intensity_histogram
    from .tensor_core import load_image
    h = intensity_histogram(load_image(args.image), args.bins)
    lines = ["bin,lo,hi,count"]
    for i, c in enumerate(h.counts):
        lines.append(f"{i},{h.edges[i]:.6f},{h.edges[i + 1]:.6f},{int(c)}")
    out = _out(args, args.out)
    atomic_write_bytes(out, ("\n".join(lines) + "\n").encode())
    return [out], {"min": h.min, "max": h.max, "spread": h.spread, "dr_ratio": h.dr_ratio}


def cmd_build_tpr(args):
    from .events import read_events
    from .tensor_core import save_tensor
    from .tpr import build_tpr
    stream = read_events(args.events, width=args.width, height=args.height)
    tpr = build_tpr(stream, args.t0, args.t1, args.levels, args.bins, anchor=args.pyramid_anchor,
                    split_polarity=args.split_polarity, normalize=args.normalize)
    out = _out(args, args.out)
    save_tensor(tpr.grid, out)
    return [out], {"channels": tpr.channels, "events": len(stream)}


def cmd_make_dataset(args):
    from .pipeline.data import DataConfig, build_toy_dataset, save_dataset
    cfg = DataConfig(motion=args.motion, event_source=args.event_source)
    pairs = build_toy_dataset(args.n, args.size, np.random.default_rng(np.random.SeedSequence([args.seed, 1])), cfg)
    out = _out(args, args.out)
    save_dataset(pairs, out)
    return sorted(out.iterdir()), {"pairs": len(pairs)}


def _pairs_for(args, cfg):
    from .pipeline.data import load_dataset
    from .pipeline.train import split_dataset
    if getattr(args, "dataset", None):
        pairs = load_dataset(args.dataset)
        return pairs[:cfg.n_train], pairs[cfg.n_train:cfg.n_train + cfg.n_test]
    return split_dataset(cfg)


def cmd_train_toy(args):
    from .pipeline.train import train_toy
    cfg = _train_config(args)
    train_pairs, _ = _pairs_for(args, cfg)
    if not train_pairs:
        raise DataError("no training pairs")
    out = _out(args, args.checkpoint)
    res = train_toy(cfg, train_pairs, out_dir=out)
    first = float(np.mean(res.losses[:10]))
    last = float(np.mean(res.losses[-10:]))
    return sorted(out.iterdir()), {"loss_first10": first, "loss_last10": last}


def cmd_sample(args):
    from .pipeline.train import dehaze, load_model
    from .tensor_core import load_image, load_tensor, save_image
    model, cfg = load_model(args.checkpoint)
    hazy = load_image(args.hazy)
    tpr = None
    if model.cfg.events:
        if args.cond_events is None:
            raise DataError(f"{args.checkpoint}: events-conditioned model needs --cond-events")
        tpr = load_tensor(args.cond_events)
        if tpr.shape[1:] != hazy.shape[1:]:
            raise DataError(f"{args.cond_events}: pyramid dims {tpr.shape} do not match image {hazy.shape}")
        tpr = tpr[None]
    out_img = dehaze(model, cfg, hazy[None], tpr, args.sampler, args.steps, args.eta, seed=args.seed,
                     init=args.init)[0]
    out = _out(args, args.out)
    save_image(out_img, out)
    return [out], None


def cmd_evaluate(args):
    from .pipeline.train import evaluate, load_model
    model, cfg = load_model(args.checkpoint)
    _, test_pairs = _pairs_for(args, cfg)
    if not test_pairs:
        raise DataError("no held-out pairs")
    t0 = time.perf_counter()
    ev = evaluate(model, cfg, test_pairs, args.sampler, args.steps, args.eta, seed=args.seed)
    wall = time.perf_counter() - t0
    tag = f"{args.sampler}-{args.steps}"
    lines = ["config,psnr_db,ssim,wall_seconds"]
    for i, (p, s) in enumerate(zip(ev["psnr"], ev["ssim"])):
        lines.append(f"image={i};{tag},{p:.4f},{s:.4f},")
    lines.append(f"mean;{tag},{np.mean(ev['psnr']):.4f},{np.mean(ev['ssim']):.4f},{wall:.3f}")
    out = _out(args, args.out)
    atomic_write_bytes(out, ("\n".join(lines) + "\n").encode())
    return [out], {"psnr_db": float(np.mean(ev["psnr"])), "ssim": float(np.mean(ev["ssim"]))}


def _coerce(name, text):
    from .pipeline.train import TrainConfig
    default = getattr(TrainConfig(), name, None)
    if default is None and name not in {f.name for f in fields(TrainConfig)}:
        raise UsageError(f"unknown ablation factor {name!r}")
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def cmd_ablate(args):
    from dataclasses import replace
    from .pipeline.ablation import ablate
    base = _train_config(args)
    factor = args.factor.replace("-", "_")
    values = [_coerce(factor, v) for v in args.values.split(",") if v]
    configs = [replace(base, **{factor: v}) for v in values]
    samplers = []
    for tok in args.samplers.split(","):
        name, _, steps = tok.partition("-")
        if not steps.isdigit():
            raise UsageError(f"sampler must look like ddim-15, got {tok!r}")
        samplers.append((name, int(steps)))
    seeds = [int(s) for s in args.seeds.split(",")]
    table = ablate(configs, samplers, seeds, eta=args.eta)
    out = table.write_csv(_out(args, args.out))
    summary = {r.config: {"psnr_db": r.psnr_db, "ssim": r.ssim} for r in table.summary_rows()}
    return [out], summary


def cmd_visualize_xe(args):
    from .pipeline.model import ModelConfig, ToyDenoiser
    from .pipeline.train import load_model
    from .pipeline.viz import visualize_feature
    from .tensor_core import load_tensor, save_image
    from .tpr import encode_events
    tpr = load_tensor(args.tpr)
    if tpr.ndim != 3:
        raise DataError(f"{args.tpr}: expected a (channels, H, W) pyramid, got dims {tpr.shape}")
    if args.checkpoint:
        model, _ = load_model(args.checkpoint)
        if not model.cfg.events:
            raise DataError(f"{args.checkpoint}: model has no event encoder")
    else:
        model = ToyDenoiser(ModelConfig(tpr_channels=tpr.shape[0]), seed=args.seed)
    if model.encoder.in_channels != tpr.shape[0]:
        raise DataError(f"{args.tpr}: {tpr.shape[0]} channels, encoder expects {model.encoder.in_channels}")
    heat = visualize_feature(encode_events(tpr, model.encoder))
    out = _out(args, args.out)
    save_image(heat, out)
    return [out], None


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evdehaze", description="Event-guided diffusion dehazing toolkit (toy scale).")
    sub = parser.add_subparsers(dest="verb", parser_class=_Parser)

    def verb(name, func, help):
        p = sub.add_parser(name, help=help, description=help)
        _common(p)
        p.set_defaults(func=func)
        return p

    p = verb("simulate-events", cmd_simulate_events, "render a frame along a trajectory and emit events")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--traj", type=Path, required=True, help="CSV lines t_us,dx,dy,rot,scale")
    p.add_argument("--cpos", type=float, default=0.2)
    p.add_argument("--cneg", type=float, default=0.2)
    p.add_argument("--refractory", type=int, default=0, help="microseconds")
    p.add_argument("--log-eps", type=float, default=1e-3)
    p.add_argument("--out", type=Path, default=Path("events.bin"))

    p = verb("make-haze", cmd_make_haze, "apply the scattering model to a clean image")
    p.add_argument("--clean", type=Path, required=True)
    p.add_argument("--depth", type=Path, required=True, help=".ten depth map (H, W)")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--airlight", type=float, default=0.9)
    p.add_argument("--out", type=Path, default=Path("hazy.ppm"))

    p = verb("histogram", cmd_histogram, "intensity histogram as CSV")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--out", type=Path, default=Path("hist.csv"))

    p = verb("build-tpr", cmd_build_tpr, "voxelize an event window into a temporal pyramid")
    p.add_argument("--events", type=Path, required=True)
    p.add_argument("--t0", type=int, required=True)
    p.add_argument("--t1", type=int, required=True)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--bins", type=int, default=2)
    p.add_argument("--pyramid-anchor", choices=("end", "start"), default="end")
    p.add_argument("--split-polarity", action="store_true")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--width", type=int, help="sensor width (CSV input only)")
    p.add_argument("--height", type=int, help="sensor height (CSV input only)")
    p.add_argument("--out", type=Path, default=Path("tpr.ten"))

    p = verb("make-dataset", cmd_make_dataset, "write procedural (clean, hazy, events, pyramid) pairs")
    p.add_argument("--n", type=int, default=80)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--motion", choices=("random", "static"), default="random")
    p.add_argument("--event-source", choices=("clean", "hazy"), default="clean")
    p.add_argument("--out", type=Path, default=Path("dataset"))

    p = verb("train-toy", cmd_train_toy, "train the toy denoiser and write a checkpoint")
    _train_flags(p)
    p.add_argument("--dataset", type=Path, help="directory from make-dataset (default: generate from --seed)")
    p.add_argument("--checkpoint", type=Path, default=Path("checkpoint"))

    p = verb("sample", cmd_sample, "dehaze one image with a trained checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--hazy", type=Path, required=True)
    p.add_argument("--cond-events", type=Path, help=".ten pyramid for events-conditioned models")
    p.add_argument("--sampler", choices=("ddim", "ddpm"), default="ddim")
    p.add_argument("--steps", type=int, default=15)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--init", choices=("scheduled", "paper-literal"))
    p.add_argument("--out", type=Path, default=Path("dehazed.ppm"))

    p = verb("evaluate", cmd_evaluate, "PSNR/SSIM of a checkpoint on held-out pairs")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dataset", type=Path)
    p.add_argument("--sampler", choices=("ddim", "ddpm"), default="ddim")
    p.add_argument("--steps", type=int, default=15)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--out", type=Path, default=Path("metrics.csv"))

    p = verb("ablate", cmd_ablate, "matched-run ablation over one factor")
    _train_flags(p)
    p.add_argument("--factor", default="conditioning")
    p.add_argument("--values", default="events,none")
    p.add_argument("--samplers", default="ddpm-5,ddpm-15,ddim-15")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--out", type=Path, default=Path("ablation.csv"))

    p = verb("visualize-xe", cmd_visualize_xe, "heatmap of encoded event features")
    p.add_argument("--tpr", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, help="use this model's encoder (default: fresh, seeded)")
    p.add_argument("--out", type=Path, default=Path("xe.ppm"))
    return parser


def _config_tokens(parser, verb, path) -> list[str]:
    """key=value lines -> argv tokens for ``verb``; store_true keys take true/false."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[verb]
    by_dest = {a.dest: a for a in sub._actions if a.option_strings}
    tokens = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"{path}: line {lineno}: expected key=value")
        key, value = key.strip(), value.strip()
        action = by_dest.get(key.replace("-", "_")) or by_dest.get(key)
        if action is None or action.dest == "config":
            raise DataError(f"{path}: line {lineno}: unknown key {key!r} for {verb}")
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                tokens.append(flag)
        else:
            tokens += [flag, value]
    return tokens


def _set_threads(n: int):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return None
    return threadpool_limits(limits=max(1, n))


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
        if args.verb is None:
            raise UsageError(parser.format_usage())
        if args.config is not None:
            i = argv.index(args.verb)
            argv = argv[:i + 1] + _config_tokens(parser, args.verb, args.config) + argv[i + 1:]
            args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e).rstrip(), file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return 0 if not e.code else 1
    except (DataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    limiter = _set_threads(args.threads)
    t0 = time.perf_counter()
    try:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        outputs, summary = args.func(args)
        flags = {k: _jsonable(v) for k, v in vars(args).items() if k != "func"}
        manifest = RunManifest(verb=args.verb, flags=flags, seed=args.seed, config_hash=config_hash(flags),
                               version=_versions(), outputs=[str(p) for p in outputs],
                               wall_seconds=round(time.perf_counter() - t0, 3), summary=summary)
        manifest.write(args.out_dir)
    except UsageError as e:
        print(str(e).rstrip(), file=sys.stderr)
        return 1
    except (DataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except RuntimeError as e:  # training divergence
        print(f"error: {e}", file=sys.stderr)
        return 2
    finally:
        if limiter is not None:
            limiter.restore_original_limits()
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
