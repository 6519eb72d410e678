import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidtag.errors import ConfigError
from vidtag.temporal import (
    GLOBAL,
    FrameScoreSeries,
    TransitionTable,
    estimate_transitions,
    gaussian_weights,
    smooth,
)


def pair_count_oracle(bits, lag):
    n = len(bits)
    num = den = 0
    for k in range(n):
        j = k - lag
        if 0 <= j < n and bits[j]:
            den += 1
            num += bool(bits[k])
    return num, den


def test_all_relevant_raw():
    t = estimate_transitions([("v", "x", [1] * 6)], 3, alpha=0)
    for lag in range(-3, 4):
        assert t.prob("x", lag) == 1.0


def test_bitstring_lag_one():
    t = estimate_transitions([("v", "x", [1, 1, 0, 1])], 1, alpha=0)
    assert pair_count_oracle([1, 1, 0, 1], 1) == (1, 2)
    assert t.prob("x", 1) == 0.5
    assert t.prob("x", 0) == 1.0


def test_laplace_and_fallbacks():
    t = estimate_transitions([("v", "x", [1, 1, 0, 1]), ("v", "y", [0, 0, 0])], 1)
    assert t.prob("x", 1) == (1 + 1) / (2 + 2)
    assert t.prob("y", 1) == 0.5  # no relevant frames: smoothing prior
    assert t.prob("y", 0) == 1.0
    assert t.source("x") == "tag" and t.source("unseen") == "global"
    assert t.prob("unseen", 1) == t.probs[(GLOBAL, 1)]
    assert TransitionTable.uniform().source("x") == "none"
    with pytest.raises(ConfigError):
        estimate_transitions([], -1)


def test_random_bitstrings_match_oracle():
    rnd = random.Random(11)
    for _ in range(120):
        n = rnd.randint(1, 50)
        bits = [rnd.random() < 0.5 for _ in range(n)]
        d_max = rnd.randint(0, 5)
        t = estimate_transitions([("v", "x", bits)], d_max, alpha=0)
        for lag in range(-d_max, d_max + 1):
            num, den = pair_count_oracle(bits, lag)
            assert t.counts[("x", lag)] == (num, den)
            if lag == 0:
                assert t.prob("x", 0) == 1.0
            elif den:
                assert t.prob("x", lag) == num / den
            assert 0.0 <= t.prob("x", lag) <= 1.0


def test_pooling_across_videos():
    t = estimate_transitions([("v1", "x", [1, 1]), ("v2", "x", [1, 0])], 1, alpha=0)
    assert t.counts[("x", 1)] == (1, 2)


def test_gaussian_weights():
    assert gaussian_weights(0).w == (1.0,)
    w = gaussian_weights(1, 1.0)
    w0 = 1 / (1 + 2 * math.exp(-0.5))
    assert w.at(0) == pytest.approx(w0, abs=1e-15) and w0 == pytest.approx(0.4519, abs=1e-4)
    assert w.at(-1) == w.at(1) == pytest.approx(math.exp(-0.5) * w0)
    for d in range(6):
        for sigma in (None, 0.5, 1.0, 2.5):
            g = gaussian_weights(d, sigma)
            assert abs(sum(g.w) - 1) <= 1e-9
            assert all(g.at(i) == g.at(-i) for i in range(d + 1))
    assert gaussian_weights(3).sigma == 3.0


def test_table_roundtrip(tmp_path):
    t = estimate_transitions([("v", "x", [1, 1, 0, 1]), ("v", "y", [0, 1, 1])], 2)
    t.save(tmp_path / "t.csv")
    back = TransitionTable.load(tmp_path / "t.csv")
    assert back.probs == t.probs and back.d_max == 2 and back.counts == t.counts


def test_smooth_identity_d0():
    s = FrameScoreSeries("x", (0.3, -0.0, 1.7, 0.1 + 0.2))
    out = smooth(s, TransitionTable.uniform(), gaussian_weights(0))
    assert [x.hex() for x in out.scores] == [x.hex() for x in s.scores]


def test_smooth_constant():
    s = FrameScoreSeries("x", (0.4,) * 9)
    out = smooth(s, TransitionTable.uniform(), gaussian_weights(3))
    assert out.scores == pytest.approx((0.4,) * 9)


def test_smooth_hand_computed():
    w = gaussian_weights(1, 1.0)
    a, b = w.at(0), w.at(1)
    table = TransitionTable({("x", 1): 0.5, ("x", -1): 0.25}, 1)
    out = smooth(FrameScoreSeries("x", (1.0, 0.0, 0.0)), table, w).scores
    # frame 0 sees lags 0 and -1; frame 1 sees frame 0 at lag +1
    assert out[0] == pytest.approx(a * 1.0 / (a + b))
    assert out[1] == pytest.approx(b * 0.5 * 1.0 / (a + 2 * b))
    assert out[2] == 0.0


def test_smooth_window_exceeding_table():
    with pytest.raises(ConfigError):
        smooth(FrameScoreSeries("x", (1.0,)), TransitionTable({}, 1), gaussian_weights(2))


def test_smooth_empty_and_no_mutation():
    assert smooth(FrameScoreSeries("x", ()), TransitionTable.uniform(), gaussian_weights(2)).scores == ()
    s = FrameScoreSeries("x", (1.0, 2.0))
    smooth(s, TransitionTable.uniform(), gaussian_weights(1))
    assert s.scores == (1.0, 2.0)


scores = st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=30)


@settings(max_examples=200)
@given(scores, st.integers(0, 4), st.floats(0, 1))
def test_convexity(xs, d, p):
    table = TransitionTable({("x", i): p for i in range(-d, d + 1) if i}, d)
    out = smooth(FrameScoreSeries("x", tuple(xs)), table, gaussian_weights(d)).scores
    for k, y in enumerate(out):
        window = xs[max(0, k - d) : k + d + 1]
        assert y <= max(window) + 1e-12
    unit = smooth(FrameScoreSeries("x", tuple(xs)), TransitionTable.uniform(), gaussian_weights(d)).scores
    for k, y in enumerate(unit):
        window = xs[max(0, k - d) : k + d + 1]
        assert min(window) - 1e-12 <= y <= max(window) + 1e-12


@settings(max_examples=200)
@given(st.integers(1, 25), st.integers(0, 4), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10**6))
def test_linearity(n, d, alpha, beta, seed):
    rng = np.random.default_rng(seed)
    s1, s2 = rng.normal(size=n), rng.normal(size=n)
    table = TransitionTable({("x", i): float(rng.random()) for i in range(-d, d + 1) if i}, d)
    w = gaussian_weights(d)
    f = lambda s: np.array(smooth(FrameScoreSeries("x", tuple(s)), table, w).scores)
    np.testing.assert_allclose(f(alpha * s1 + beta * s2), alpha * f(s1) + beta * f(s2), atol=1e-9)


@settings(max_examples=100)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), max_size=40))
def test_d0_identity_property(xs):
    out = smooth(FrameScoreSeries("x", tuple(xs)), TransitionTable.uniform(), gaussian_weights(0)).scores
    assert list(out) == xs
