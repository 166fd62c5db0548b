from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evdehaze.autodiff import Var, grad_check, ops
from evdehaze.errors import DataError
from evdehaze.pipeline import (TOY_CONFIG, AblationRow, AblationTable, DataConfig, LatentCodec, ModelConfig,
                               ToyDenoiser, TrainConfig, ablate, ablated_factor, build_toy_dataset, colormap, dehaze,
                               events_grid, load_dataset, load_model, psnr, save_dataset, split_dataset, ssim,
                               total_loss, train_toy, visualize_feature)
from evdehaze.pipeline.data import stack

SMALL = TrainConfig(iterations=4, n_train=6, n_test=2, size=8, batch_size=3, T=50, monitor_every=0,
                    widths=(4, 8, 8))


# ---------------------------------------------------------------------------
# codec

@given(st.integers(0, 2**31 - 1))
def test_identity_codec_is_exact(seed):
    x = np.random.default_rng(seed).random((2, 3, 8, 8)).astype(np.float32)
    c = LatentCodec("identity")
    assert c.decode(c.encode(x)).tobytes() == x.tobytes()


def test_avgpool_codec():
    c = LatentCodec("avgpool2")
    x = np.random.default_rng(0).random((2, 3, 8, 12))
    z = c.encode(x)
    assert z.shape == (2, 3, 4, 6) and c.factor == 2
    np.testing.assert_allclose(z[0, 0, 0, 0], x[0, 0, :2, :2].mean())
    assert c.decode(z).shape == x.shape
    const = np.full((1, 1, 8, 8), 0.3)
    np.testing.assert_allclose(c.decode(c.encode(const)), const, atol=1e-12)
    with pytest.raises(DataError):
        LatentCodec("vq")


def test_codec_passes_gradients():
    x = Var(np.random.default_rng(1).random((1, 1, 4, 4)), requires_grad=True)
    r = grad_check(lambda: ops.sum_(ops.square(LatentCodec("avgpool2").decode(LatentCodec("avgpool2").encode(x)))),
                   [x])
    assert r.max_rel_error < 1e-4


# ---------------------------------------------------------------------------
# metrics

def test_psnr_examples():
    a = np.random.default_rng(0).random((3, 8, 8))
    assert psnr(a, a) == 100.0
    assert psnr(np.full((3, 4, 4), 0.5), np.full((3, 4, 4), 0.6)) == pytest.approx(20.0, abs=1e-9)
    cb = (np.indices((8, 8)).sum(0) % 2).astype(float)
    assert psnr(cb, 1 - cb) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DataError):
        psnr(a, a[:2])


def brute_ssim(a, b, w=8, c1=1e-4, c2=9e-4):
    vals = []
    for ch in range(a.shape[0]):
        for i in range(a.shape[1] - w + 1):
            for j in range(a.shape[2] - w + 1):
                pa, pb = a[ch, i:i + w, j:j + w], b[ch, i:i + w, j:j + w]
                ma, mb = pa.mean(), pb.mean()
                va, vb = pa.var(), pb.var()
                cov = ((pa - ma) * (pb - mb)).mean()
                vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_ssim_matches_brute_force():
    rng = np.random.default_rng(2)
    a, b = rng.random((2, 10, 11)), rng.random((2, 10, 11))
    assert ssim(a, b) == pytest.approx(brute_ssim(a, b), abs=1e-10)


def test_ssim_examples():
    rng = np.random.default_rng(3)
    a = rng.random((3, 12, 12))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    assert ssim(a, 1.0 - a) < 0
    ca, cb = 0.3, 0.7
    expect = (2 * ca * cb + 1e-4) / (ca ** 2 + cb ** 2 + 1e-4)
    assert ssim(np.full((1, 9, 9), ca), np.full((1, 9, 9), cb)) == pytest.approx(expect, abs=1e-9)
    with pytest.raises(DataError):
        ssim(np.zeros((1, 7, 7)), np.zeros((1, 7, 7)))


def test_total_loss_examples():
    rng = np.random.default_rng(4)
    a, b = rng.random((3, 8, 8)), rng.random((3, 8, 8))
    assert total_loss(a, a) == 0.0
    assert total_loss(a, b) == pytest.approx(total_loss(b, a), rel=1e-12)
    # pixel term alone: constant offset 0.1
    assert total_loss(a + 0.1, a, 1.0, 0.0) == pytest.approx(0.1, abs=1e-9)
    with pytest.raises(DataError):
        total_loss(a, b[:2])


def test_total_loss_is_differentiable():
    rng = np.random.default_rng(5)
    x = Var(rng.random((1, 3, 6, 6)), requires_grad=True)
    tgt = rng.random((1, 3, 6, 6))
    r = grad_check(lambda: total_loss(ops.add(x, 0.0), tgt, 0.0, 1.0), [x], h=1e-6)
    assert r.max_rel_error < 1e-4


# ---------------------------------------------------------------------------
# visualization

def test_visualize_feature_examples():
    z = visualize_feature(np.zeros((4, 5, 5)))
    assert np.all(z == colormap(0.0)[:, None, None])
    hot = np.zeros((3, 5, 6))
    hot[1, 2, 3] = -4.0
    img = visualize_feature(hot)
    np.testing.assert_array_equal(img[:, 2, 3], colormap(1.0))
    mask = np.ones((5, 6), bool)
    mask[2, 3] = False
    assert np.all(img[:, mask] == colormap(0.0)[:, None])


@given(st.integers(0, 2**31 - 1))
def test_visualize_feature_channel_permutation(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(5, 4, 4))
    assert visualize_feature(x).tobytes() == visualize_feature(x[rng.permutation(5)]).tobytes()


def test_colormap_endpoints():
    np.testing.assert_array_equal(colormap(0.0), [0, 0, 0])
    np.testing.assert_array_equal(colormap(1.0), [1, 1, 1])


# ---------------------------------------------------------------------------
# dataset

def test_dataset_deterministic():
    a = build_toy_dataset(1, 8, np.random.default_rng(7))[0]
    b = build_toy_dataset(1, 8, np.random.default_rng(7))[0]
    for k in ("clean", "hazy", "tpr"):
        assert getattr(a, k).tobytes() == getattr(b, k).tobytes()
    assert np.array_equal(a.events.t, b.events.t) and np.array_equal(a.events.p, b.events.p)


def test_dataset_no_haze_gives_clean():
    cfg = DataConfig(beta_range=(0.0, 0.0))
    p = build_toy_dataset(1, 8, np.random.default_rng(0), cfg)[0]
    assert np.all(p.transmission == 1.0)
    np.testing.assert_array_equal(p.hazy, p.clean)


def test_static_motion_gives_no_events():
    p = build_toy_dataset(1, 8, np.random.default_rng(0), DataConfig(motion="static"))[0]
    assert len(p.events) == 0 and not p.tpr.any()


def test_dataset_errors():
    with pytest.raises(DataError):
        build_toy_dataset(1, 10, np.random.default_rng(0))
    with pytest.raises(DataError):
        build_toy_dataset(0, 8, np.random.default_rng(0))


def test_dataset_save_load(tmp_path):
    pairs = build_toy_dataset(2, 8, np.random.default_rng(1))
    save_dataset(pairs, tmp_path)
    back = load_dataset(tmp_path)
    assert len(back) == 2
    for p, q in zip(pairs, back):
        np.testing.assert_array_equal(p.clean, q.clean)
        np.testing.assert_array_equal(p.hazy, q.hazy)
        np.testing.assert_array_equal(p.tpr, q.tpr)
        assert np.array_equal(p.events.t, q.events.t)


# ---------------------------------------------------------------------------
# model

def test_model_output_dims():
    cfg = ModelConfig(widths=(4, 8, 8), encoder_widths=(4, 4, 8), emb_dim=8, attn_dim=4, attn_decoder=True)
    m = ToyDenoiser(cfg, seed=0)
    rng = np.random.default_rng(0)
    out = m(rng.normal(size=(2, 3, 8, 12)), np.array([1, 40]), rng.normal(size=(2, 3, 8, 12)),
            rng.random((2, 6, 8, 12)))
    assert out.shape == (2, 3, 8, 12)
    with pytest.raises(DataError):
        m(np.zeros((1, 3, 6, 8)), 1, np.zeros((1, 3, 6, 8)), np.zeros((1, 6, 6, 8)))
    with pytest.raises(DataError):
        m(np.zeros((1, 3, 8, 8)), 1, np.zeros((1, 3, 8, 8)))


def test_zero_init_attention_matches_unconditioned_model():
    base = dict(widths=(4, 8, 8), encoder_widths=(4, 4, 8), emb_dim=8, attn_dim=4)
    on = ToyDenoiser(ModelConfig(events=True, **base), seed=3)
    off = ToyDenoiser(ModelConfig(events=False, **base), seed=3)
    rng = np.random.default_rng(1)
    x, hz, tpr = rng.normal(size=(1, 3, 8, 8)), rng.normal(size=(1, 3, 8, 8)), rng.random((1, 6, 8, 8))
    np.testing.assert_array_equal(on(x, [7], hz, tpr).value, off(x, [7], hz).value)


# ---------------------------------------------------------------------------
# training

def test_lr_zero_leaves_weights_unchanged():
    cfg = replace(SMALL, lr=0.0)
    init = {p.name: p.value.copy() for p in ToyDenoiser(cfg.model_config(), seed=cfg.seed).parameters()}
    model = train_toy(cfg).model
    for p in model.parameters():
        assert p.value.tobytes() == init[p.name].tobytes(), p.name


def test_identical_seeds_identical_checkpoints(tmp_path):
    a = train_toy(SMALL, out_dir=tmp_path / "a").checkpoint
    b = train_toy(SMALL, out_dir=tmp_path / "b").checkpoint
    files_a = sorted(f.name for f in a.iterdir())
    assert files_a == sorted(f.name for f in b.iterdir())
    for name in files_a:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_checkpoint_restores_model(tmp_path):
    res = train_toy(SMALL, out_dir=tmp_path)
    model, cfg = load_model(tmp_path)
    assert cfg == SMALL
    _, test = split_dataset(cfg)
    hz, tpr = stack(test, "hazy"), stack(test, "tpr")
    a = dehaze(res.model, cfg, hz, tpr, "ddim", 5, seed=1)
    b = dehaze(model, cfg, hz, tpr, "ddim", 5, seed=1)
    assert a.tobytes() == b.tobytes()
    assert a.min() >= 0 and a.max() <= 1


def test_monitor_metric_logged():
    res = train_toy(replace(SMALL, monitor_every=2))
    assert [m["iteration"] for m in res.monitor] == [2, 4]
    assert all(np.isfinite(m["total_loss"]) for m in res.monitor)


def test_finetune_x0_mode_runs():
    res = train_toy(replace(SMALL, finetune_x0=True, codec="avgpool2"))
    assert all(np.isfinite(res.losses))


def test_config_validation():
    with pytest.raises(DataError):
        TrainConfig(lambda_perc=-1)
    with pytest.raises(DataError):
        TrainConfig(conditioning="both")
    assert TrainConfig().lr == 5e-5 and TrainConfig().lambda_pix == 1.0 and TrainConfig().lambda_perc == 0.2
    assert TrainConfig.from_dict(TOY_CONFIG.to_dict()) == TOY_CONFIG


def test_eps_loss_decreases_by_thirty_percent():
    cfg = replace(TOY_CONFIG, conditioning="events")
    res = train_toy(cfg)
    first, last = np.mean(res.losses[:10]), np.mean(res.losses[-10:])
    assert last <= 0.7 * first, (first, last)


# ---------------------------------------------------------------------------
# ablation harness

def test_grid_varying_two_factors_rejected():
    with pytest.raises(DataError, match="more than one factor"):
        ablated_factor([SMALL, replace(SMALL, conditioning="none", lr=1e-3)])
    assert ablated_factor(events_grid(SMALL)) == "conditioning"
    assert ablated_factor([replace(SMALL, seed=1), replace(SMALL, seed=2, data=replace(SMALL.data, bins=3))]) \
        == "data.bins"
    assert ablated_factor([SMALL]) is None


def test_ablate_small_grid_csv(tmp_path):
    table = ablate(events_grid(SMALL), samplers=(("ddpm", 2), ("ddim", 3)), seeds=(0,))
    assert len(table.rows) == 4
    path = table.write_csv(tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "config,psnr_db,ssim,wall_seconds"
    assert lines[1].startswith("conditioning=events;ddpm-2;seed=0,")
    assert len(lines) == 1 + 4 + 4
    again = ablate(events_grid(SMALL), samplers=(("ddpm", 2), ("ddim", 3)), seeds=(0,))
    assert [r.psnr_db for r in again.rows] == [r.psnr_db for r in table.rows]


def test_table_mean_and_summary():
    rows = [AblationRow("conditioning", "events", "ddim", 15, s, 10.0 + s, 0.5, 1.0) for s in range(3)]
    t = AblationTable("conditioning", rows)
    assert t.mean("events", "ddim", 15)["psnr_db"] == 11.0
    (summary,) = t.summary_rows()
    assert summary.seed == "mean" and summary.as_csv_row()[1] == "11.0000"
    with pytest.raises(DataError):
        t.mean("none")


def test_ablate_rejects_bad_sampler():
    with pytest.raises(DataError):
        ablate([SMALL], samplers=(("euler", 5),))


def test_dehaze_init_modes_differ():
    res = train_toy(SMALL)
    _, test = split_dataset(SMALL)
    hz, tpr = stack(test, "hazy"), stack(test, "tpr")
    a = dehaze(res.model, SMALL, hz, tpr, init="scheduled")
    b = dehaze(res.model, SMALL, hz, tpr, init="paper-literal")
    assert a.shape == b.shape == hz.shape and not np.array_equal(a, b)
    with pytest.raises(DataError):
        dehaze(res.model, SMALL, hz, tpr, sampler="euler")
