import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evdehaze.errors import DataError
from evdehaze.event_sim import (MotionSample, MotionTrajectory, SimConfig, random_trajectory, read_trajectory,
                                render_trajectory, simulate_events, simulate_from_image, warp_similarity)

from helpers import dense_reference_sim


def _frames_1px(values, times):
    return [(t, np.array([[[v]]], np.float32)) for t, v in zip(times, values)]


def test_constant_image_gives_no_events():
    img = np.full((1, 4, 5), 0.4, np.float32)
    s = simulate_events([(0, img), (1000, img)])
    assert len(s) == 0 and (s.width, s.height) == (5, 4)


def test_ramp_of_three_and_a_half_thresholds():
    c = 0.2
    i0 = 0.1
    i1 = float(np.exp(np.log(i0) + 3.5 * c))
    s = simulate_events(_frames_1px([i0, i1], [0, 3500]), SimConfig(c, c))
    assert s.p.tolist() == [1, 1, 1]
    # float32 frame storage moves the crossing by well under a microsecond
    np.testing.assert_allclose(s.t.astype(float), [1000, 2000, 3000], atol=1)
    ref, _ = dense_reference_sim(math.log(np.float32(i0)), math.log(np.float32(i1)), 0, 3500, math.log(np.float32(i0)), c, c)
    assert [p for _, p in ref] == [1, 1, 1]
    assert np.max(np.abs(np.array([t for t, _ in ref]) - s.t.astype(int))) <= 1


def test_refractory_covering_interval_keeps_first_only():
    c = 0.2
    i0, i1 = 0.1, float(np.exp(np.log(0.1) + 3.5 * c))
    s = simulate_events(_frames_1px([i0, i1], [0, 3500]), SimConfig(c, c, refractory=3500))
    assert len(s) == 1 and s.p[0] == 1 and abs(int(s.t[0]) - 1000) <= 1


def test_refractory_suppressed_crossing_still_moves_reference():
    # 2 crossings in frame 1 (second suppressed), then the signal holds: no late event
    c = 0.2
    lv = [math.log(0.2), math.log(0.2) + 2.2 * c, math.log(0.2) + 2.2 * c]
    frames = _frames_1px([math.exp(v) for v in lv], [0, 1000, 2000])
    s = simulate_events(frames, SimConfig(c, c, refractory=5000))
    assert len(s) == 1


def test_dense_reference_random_ramps():
    rng = np.random.default_rng(0)
    for _ in range(40):
        c_pos, c_neg = rng.uniform(0.1, 0.4, 2)
        dt = int(rng.integers(50, 3000))
        a, b = rng.uniform(0.02, 1.0, 2).astype(np.float32)
        s = simulate_events(_frames_1px([a, b], [0, dt]), SimConfig(c_pos, c_neg))
        la, lb = math.log(max(float(a), 1e-3)), math.log(max(float(b), 1e-3))
        ref, _ = dense_reference_sim(la, lb, 0, dt, la, c_pos, c_neg)
        assert s.p.tolist() == [p for _, p in ref]
        if ref:
            assert np.max(np.abs(s.t.astype(np.int64) - np.array([t for t, _ in ref]))) <= 1


def test_monotone_increasing_signal_only_positive():
    rng = np.random.default_rng(1)
    vals = np.sort(rng.uniform(0.01, 1.0, (8, 1, 3, 3)), axis=0).astype(np.float32)
    s = simulate_events([(1000 * i, v) for i, v in enumerate(vals)])
    assert len(s) > 0 and np.all(s.p == 1)


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=12), st.floats(0.05, 0.5), st.floats(0.05, 0.5))
def test_reconstruction_bound(vals, c_pos, c_neg):
    frames = _frames_1px(vals, [100 * i for i in range(len(vals))])
    s = simulate_events(frames, SimConfig(c_pos, c_neg))
    lg = [math.log(max(float(np.float32(v)), 1e-3)) for v in vals]
    recon = c_pos * np.sum(s.p == 1) - c_neg * np.sum(s.p == -1)
    assert abs(recon - (lg[-1] - lg[0])) <= max(c_pos, c_neg) + 1e-9


def test_output_order_and_validation():
    rng = np.random.default_rng(2)
    frames = [(i * 500, rng.uniform(0, 1, (1, 6, 7)).astype(np.float32)) for i in range(5)]
    s = simulate_events(frames)
    key = list(zip(s.t.tolist(), s.y.tolist(), s.x.tolist()))
    assert key == sorted(key)
    s.validated()


def test_simulate_errors():
    f = np.zeros((1, 2, 2), np.float32)
    with pytest.raises(DataError):
        simulate_events([(0, f)])
    with pytest.raises(DataError, match="strictly increasing"):
        simulate_events([(0, f), (0, f)])
    with pytest.raises(DataError, match="single-channel"):
        simulate_events([(0, np.zeros((3, 2, 2))), (1, np.zeros((3, 2, 2)))])
    with pytest.raises(DataError):
        SimConfig(c_pos=0)


def test_render_identity_is_exact():
    img = np.random.default_rng(3).uniform(0, 1, (3, 5, 6)).astype(np.float32)
    (_, out), = render_trajectory(img, MotionTrajectory((MotionSample(0),)))
    np.testing.assert_array_equal(out, img)


def test_integer_shift_moves_edge():
    img = np.zeros((1, 4, 8), np.float32)
    img[:, :, 4:] = 1.0
    out = warp_similarity(img, dx=1)
    assert np.argmax(img[0, 0] > 0.5) == 4
    assert np.argmax(out[0, 0] > 0.5) == 5


def test_rotation_pi_twice_is_identity():
    img = np.random.default_rng(4).uniform(0, 1, (1, 7, 9)).astype(np.float32)
    twice = warp_similarity(warp_similarity(img, rot=math.pi), rot=math.pi)
    np.testing.assert_allclose(twice, img, atol=1e-5)


def test_trajectory_invariants(tmp_path):
    with pytest.raises(DataError, match="scale"):
        MotionTrajectory((MotionSample(0, scale=0.0),))
    with pytest.raises(DataError, match="increasing"):
        MotionTrajectory((MotionSample(5), MotionSample(5)))
    with pytest.raises(DataError):
        MotionTrajectory(())
    p = tmp_path / "traj.csv"
    p.write_text("0,0,0,0,1\n# c\n1000,1.5,0,0.01,1.02\n")
    traj = read_trajectory(p)
    assert len(traj) == 2 and traj.samples[1].dx == 1.5


def test_static_and_random_motion_from_image():
    rng = np.random.default_rng(5)
    img = rng.uniform(0, 1, (3, 12, 12)).astype(np.float32)
    static = MotionTrajectory((MotionSample(0), MotionSample(33000)))
    assert len(simulate_from_image(img, static)) == 0
    traj = random_trajectory(rng)
    assert traj.samples[0] == MotionSample(0) and traj.samples[-1].t == 33000
    assert len(simulate_from_image(img, traj)) > 0
