"""Shared generators and brute-force oracles for the test suite."""

from fractions import Fraction

import numpy as np
from hypothesis import strategies as st

from evdehaze.autodiff import Param, ops
from evdehaze.events import EventStream


def random_stream(rng, width=None, height=None, n=None, t_max=5000, dup_rate=0.2):
    width = width or int(rng.integers(1, 40))
    height = height or int(rng.integers(1, 40))
    n = int(rng.integers(0, 60)) if n is None else n
    t = np.sort(rng.integers(0, t_max, n)).astype(np.uint64)
    if n > 1:  # force some equal timestamps
        dup = rng.random(n - 1) < dup_rate
        t[1:][dup] = t[:-1][dup]
        t = np.maximum.accumulate(t)
    x = rng.integers(0, width, n)
    y = rng.integers(0, height, n)
    p = rng.choice([-1, 1], n)
    return EventStream.from_arrays(width, height, t, x, y, p)


@st.composite
def streams(draw, max_events=40, max_side=16, t_max=10_000):
    width = draw(st.integers(1, max_side))
    height = draw(st.integers(1, max_side))
    n = draw(st.integers(0, max_events))
    t = sorted(draw(st.lists(st.integers(0, t_max), min_size=n, max_size=n)))
    x = draw(st.lists(st.integers(0, width - 1), min_size=n, max_size=n))
    y = draw(st.lists(st.integers(0, height - 1), min_size=n, max_size=n))
    p = draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    return EventStream.from_arrays(width, height, t, x, y, p)


def tpr_oracle(stream, t0, t1, levels, bins, anchor="end"):
    """Per-event loop with exact rational arithmetic for spans and bins."""
    grid = np.zeros((levels * bins, stream.height, stream.width))
    for t, x, y, p in zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist()):
        if not t0 <= t < t1:
            continue
        for lvl in range(1, levels + 1):
            length = Fraction(t1 - t0, 2 ** (lvl - 1))
            lo, hi = (t1 - length, Fraction(t1)) if anchor == "end" else (Fraction(t0), t0 + length)
            if not lo <= t < hi:
                continue
            width = length / bins
            b = int((t - lo) // width)
            grid[(lvl - 1) * bins + b, y, x] += p
    return grid


def dense_reference_sim(log_a, log_b, t_a, t_b, ref, c_pos, c_neg):
    """Step through every microsecond; emit when the interpolated signal passes ref +/- c.

    Returns (events, new_ref) with events as (t_us, polarity). Timestamps are
    the first integer microsecond at or after the crossing.
    """
    events = []
    dt = t_b - t_a
    for k in range(1, dt + 1):
        v = log_a + (log_b - log_a) * k / dt
        while v >= ref + c_pos - 1e-12:
            ref += c_pos
            events.append((t_a + k, 1))
        while v <= ref - c_neg + 1e-12:
            ref -= c_neg
            events.append((t_a + k, -1))
    return events, ref


def _p(name, shape, rng, scale=1.0):
    return Param(name, rng.normal(0, scale, shape), np.float64)


def layer_case(kind, rng):
    """(inputs, forward) for one randomly shaped instance of a differentiable op."""
    n = int(rng.integers(1, 3))
    if kind == "conv":
        cin, cout, k = (int(v) for v in rng.integers(1, 4, 3))
        stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
        h, w = int(rng.integers(k, 7)), int(rng.integers(k, 7))
        x, wt, b = _p("x", (n, cin, h, w), rng), _p("w", (cout, cin, k, k), rng), _p("b", (cout,), rng)
        return [x, wt, b], lambda: ops.conv2d(x, wt, b, stride=stride, pad=pad)
    if kind == "linear":
        din, dout = (int(v) for v in rng.integers(1, 6, 2))
        x, wt, b = _p("x", (n, din), rng), _p("w", (din, dout), rng), _p("b", (dout,), rng)
        return [x, wt, b], lambda: ops.linear(x, wt, b)
    if kind == "softmax":
        x = _p("x", (n, int(rng.integers(1, 7))), rng, 2.0)
        return [x], lambda: ops.softmax(x)
    if kind == "silu":
        x = _p("x", (n, 5), rng, 2.0)
        return [x], lambda: ops.silu(x)
    if kind == "relu":
        x = _p("x", (n, 7), rng)
        x.value[np.abs(x.value) < 0.05] += 0.2  # keep away from the kink
        return [x], lambda: ops.relu(x)
    if kind == "pool_up":
        x = _p("x", (n, 2, 4, 6), rng)
        return [x], lambda: ops.upsample2(ops.avg_pool2(x))
    if kind == "resize":
        x = _p("x", (n, 2, int(rng.integers(1, 5)), int(rng.integers(1, 5))), rng)
        ho, wo = (int(v) for v in rng.integers(1, 8, 2))
        return [x], lambda: ops.resize_bilinear(x, ho, wo)
    if kind == "elementwise":
        a, b = _p("a", (n, 3, 1), rng), _p("b", (1, 4), rng)
        return [a, b], lambda: ops.square(ops.sub(ops.mul(a, b), ops.abs_(ops.add(b, 3.0))))
    if kind == "reduce":
        x = _p("x", (n, 3, 4), rng)
        return [x], lambda: ops.mean(ops.concat([x, ops.transpose(ops.reshape(x, (n, 4, 3)), (0, 2, 1))], 1),
                                     axis=1, keepdims=True)
    if kind == "matmul":
        a, b = _p("a", (2, n, 3), rng), _p("b", (3, 4), rng)
        return [a, b], lambda: ops.matmul(a, b)
    raise AssertionError(kind)


LAYER_KINDS = ["conv", "linear", "softmax", "silu", "relu", "pool_up", "resize", "elementwise", "reduce", "matmul"]
