import numpy as np
import pytest
from hypothesis import given, strategies as st

from evdehaze.errors import DataError
from evdehaze.events import EventStream
from evdehaze.tpr import EventEncoder, TemporalPyramid, build_tpr, encode_events

from helpers import random_stream, streams, tpr_oracle


def test_empty_stream_zero_grid():
    g = build_tpr(EventStream.empty(5, 4), 0, 1000, 3, 2).grid
    assert g.shape == (6, 4, 5) and not g.any()


def test_single_event_after_midpoint():
    s = EventStream.from_arrays(4, 4, [501], [2], [1], [1])
    g = build_tpr(s, 0, 1000, levels=3, bins=2).grid
    # level 1 spans [0,1000): second bin; level 2 spans [500,1000): first bin; level 3 spans [750,1000)
    assert g[1, 1, 2] == 1 and g[2, 1, 2] == 1
    assert np.count_nonzero(g) == 2


def test_opposite_polarities_cancel():
    s = EventStream.from_arrays(4, 4, [10, 20], [0, 0], [0, 0], [1, -1])
    assert not build_tpr(s, 0, 1000, 1, 2).grid.any()


def test_bad_arguments():
    s = EventStream.empty(2, 2)
    with pytest.raises(DataError):
        build_tpr(s, 10, 10)
    with pytest.raises(DataError):
        build_tpr(s, 0, 10, levels=0)
    with pytest.raises(DataError):
        build_tpr(s, 0, 10, bins=0)


def test_matches_fraction_oracle_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        s = random_stream(rng)
        t0 = int(rng.integers(0, 2000))
        t1 = t0 + int(rng.integers(1, 4000))
        L, M = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        for anchor in ("end", "start"):
            got = build_tpr(s, t0, t1, L, M, anchor=anchor).grid
            np.testing.assert_array_equal(got, tpr_oracle(s, t0, t1, L, M, anchor))


def test_boundary_timestamps_exact():
    # window length 7 split into 3 bins at level 2 (span 3.5): edges at fractional times
    s = EventStream.from_arrays(1, 1, list(range(0, 7)), [0] * 7, [0] * 7, [1] * 7)
    for L in range(1, 4):
        for M in range(1, 5):
            np.testing.assert_array_equal(build_tpr(s, 0, 7, L, M).grid, tpr_oracle(s, 0, 7, L, M))


@given(streams())
def test_polarity_antisymmetry(s):
    flipped = EventStream.from_arrays(s.width, s.height, s.t, s.x, s.y, -s.p)
    a = build_tpr(s, 0, 10_001, 3, 2).grid
    b = build_tpr(flipped, 0, 10_001, 3, 2).grid
    np.testing.assert_array_equal(a, -b)


@given(streams(max_side=8), st.integers(0, 4), st.integers(0, 4))
def test_translation_consistency(s, dx, dy):
    big = EventStream.from_arrays(s.width + 4, s.height + 4, s.t, s.x, s.y, s.p)
    moved = EventStream.from_arrays(s.width + 4, s.height + 4, s.t, s.x + dx, s.y + dy, s.p)
    a = build_tpr(big, 0, 10_001, 2, 3).grid
    b = build_tpr(moved, 0, 10_001, 2, 3).grid
    np.testing.assert_array_equal(np.roll(np.roll(a, dy, axis=1), dx, axis=2), b)


def test_split_polarity_and_normalize():
    s = EventStream.from_arrays(2, 2, [1, 2, 3], [0, 0, 1], [0, 0, 0], [1, -1, 1])
    g = build_tpr(s, 0, 4, 1, 1, split_polarity=True).grid
    assert g.shape == (2, 2, 2)
    assert g[0, 0, 0] == 1 and g[1, 0, 0] == 1 and g[0, 0, 1] == 1
    n = build_tpr(s, 0, 4, 1, 1, normalize=True).grid
    assert n[0, 0, 1] == pytest.approx(1 / 3)


def test_pyramid_channels():
    tp = build_tpr(EventStream.empty(3, 3), 0, 8, 4, 3)
    assert isinstance(tp, TemporalPyramid) and tp.channels == 12


# ---------------------------------------------------------------------------
# encoder

def test_encoder_zero_input_zero_output():
    enc = EventEncoder(6, np.random.default_rng(0))
    out = encode_events(np.zeros((6, 16, 16), np.float32), enc)
    assert out.shape == (32, 4, 4) and not out.any()


def test_encoder_output_dims_64():
    enc = EventEncoder(6, np.random.default_rng(0))
    assert encode_events(np.ones((6, 64, 64), np.float32), enc).shape == (32, 16, 16)


def test_encoder_channel_mismatch():
    enc = EventEncoder(6, np.random.default_rng(0))
    with pytest.raises(DataError):
        encode_events(np.zeros((4, 8, 8), np.float32), enc)


def _footprint(h, w, y, x):
    """Output cells (at H/4) whose receptive field contains input pixel (y, x)."""
    m = np.zeros((h, w), bool)
    m[y, x] = True

    def dilate(a):
        p = np.pad(a, 1)
        return np.any([p[i:i + a.shape[0], j:j + a.shape[1]] for i in range(3) for j in range(3)], axis=0)

    def pool(a):
        return a.reshape(a.shape[0] // 2, 2, a.shape[1] // 2, 2).any(axis=(1, 3))

    return dilate(pool(dilate(pool(dilate(m)))))


def test_encoder_impulse_shift_stays_in_receptive_field():
    rng = np.random.default_rng(1)
    enc = EventEncoder(6, rng)
    for b in enc.params[1::2]:  # nonzero biases make ReLU regions non-trivial
        b.value = rng.normal(0, 0.1, b.shape).astype(np.float32)
    for _ in range(20):
        y, x = rng.integers(0, 32), rng.integers(0, 31)
        ch = rng.integers(0, 6)
        a = np.zeros((6, 32, 32), np.float32)
        b = np.zeros_like(a)
        a[ch, y, x] = 5.0
        b[ch, y, x + 1] = 5.0
        diff = np.abs(encode_events(a, enc) - encode_events(b, enc)).max(axis=0)
        allowed = _footprint(32, 32, y, x) | _footprint(32, 32, y, x + 1)
        assert not diff[~allowed].any()
        assert diff[allowed].any()


def test_encoder_deterministic():
    g = np.random.default_rng(2).normal(size=(6, 8, 8)).astype(np.float32)
    a = encode_events(g, EventEncoder(6, np.random.default_rng(3)))
    b = encode_events(g, EventEncoder(6, np.random.default_rng(3)))
    assert a.tobytes() == b.tobytes()
