import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poselift.core import JointSignal, PoseSequence3D, sequence_to_signals, signals_to_sequence
from poselift.errors import ConfigError
from poselift.temporal import KINDS, FilterSpec, smooth_sequence, smooth_signal, smooth_values


def oracle(values, kind, w):
    """Direct evaluation of the four filter definitions, with 1-based t."""
    S = [None] + [float(v) for v in values]
    N = len(values)
    out = [None] * (N + 1)
    if kind in ("SMA", "WMA"):
        for t in range(1, N + 1):
            if t <= w:
                out[t] = S[t]
            elif kind == "SMA":
                out[t] = sum(S[t - i] for i in range(w)) / w
            else:
                out[t] = sum((w - i) * S[t - i] for i in range(w)) / (w * (w + 1) / 2)
    else:
        a = 2.0 / (w + 1) if kind == "EMA" else 1.0 / w
        out[1] = S[1]
        for t in range(2, N + 1):
            out[t] = (1 - a) * out[t - 1] + a * S[t]
    return np.array(out[1:])


@pytest.mark.parametrize(
    "kind, w, signal, expected",
    [
        ("SMA", 2, [1, 2, 3, 4, 5], [1, 2, 2.5, 3.5, 4.5]),
        ("EMA", 3, [2, 4, 8], [2, 3, 5.5]),
        ("WMA", 2, [1, 2, 3, 4], [1, 2, 8 / 3, 11 / 3]),
        ("MMA", 2, [4, 0], [4, 2]),
    ],
)
def test_hand_worked_examples(kind, w, signal, expected):
    np.testing.assert_allclose(smooth_values(signal, FilterSpec(kind, w)), expected, rtol=0, atol=1e-15)


def test_filter_spec_validation():
    assert FilterSpec("mma", 4).kind == "MMA"
    assert FilterSpec("EMA", 3).alpha == 0.5
    assert FilterSpec("MMA", 4).alpha == 0.25
    assert FilterSpec("SMA", 4).alpha is None
    assert FilterSpec("wma", 9).name == "wma_w9"
    for bad in [("KMA", 3), ("SMA", 0), ("SMA", 2.5)]:
        with pytest.raises(ConfigError):
            FilterSpec(*bad)


@pytest.mark.parametrize("kind", KINDS)
def test_window_longer_than_signal(kind):
    s = np.array([3.0, -1.0, 2.0])
    out = smooth_values(s, FilterSpec(kind, 10))
    np.testing.assert_allclose(out, oracle(s, kind, 10), atol=1e-15)
    if kind in ("SMA", "WMA"):
        np.testing.assert_array_equal(out, s)


@pytest.mark.parametrize("kind", KINDS)
def test_single_sample(kind):
    np.testing.assert_array_equal(smooth_values([7.5], FilterSpec(kind, 4)), [7.5])


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40),
    st.sampled_from(KINDS),
    st.integers(1, 9),
)
def test_matches_oracle(values, kind, w):
    np.testing.assert_allclose(smooth_values(values, FilterSpec(kind, w)), oracle(values, kind, w), rtol=1e-12, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=1, max_size=40),
    st.lists(st.floats(-10, 10), min_size=40, max_size=40),
    st.floats(-3, 3),
    st.floats(-3, 3),
    st.sampled_from(KINDS),
    st.integers(1, 6),
)
def test_linearity(s, t, a, b, kind, w):
    s = np.array(s)
    t = np.array(t[: len(s)])
    spec = FilterSpec(kind, w)
    lhs = smooth_values(a * s + b * t, spec)
    rhs = a * smooth_values(s, spec) + b * smooth_values(t, spec)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@pytest.mark.parametrize("kind", ["SMA", "WMA"])
def test_shift_equivariance_in_steady_state(kind):
    rng = np.random.default_rng(3)
    s = rng.normal(size=50)
    w, k = 4, 3
    spec = FilterSpec(kind, w)
    full = smooth_values(s, spec)
    shifted = smooth_values(s[k:], spec)
    np.testing.assert_allclose(shifted[w:], full[w + k :], atol=1e-14)


def test_smooth_signal_keeps_identity():
    sig = JointSignal(np.array([1.0, 3.0, 5.0]), 4, "z")
    out = smooth_signal(sig, FilterSpec("SMA", 1))
    assert (out.joint, out.axis) == (4, "z")
    np.testing.assert_array_equal(out.values, sig.values)


def test_smooth_sequence_matches_per_signal(topo):
    rng = np.random.default_rng(4)
    seq = PoseSequence3D(topo, rng.normal(size=(30, 15, 3)))
    spec = FilterSpec("WMA", 4)
    manual = signals_to_sequence([smooth_signal(s, spec) for s in sequence_to_signals(seq)], topo)
    assert smooth_sequence(seq, spec) == manual


def test_smooth_sequence_trivial_cases(topo):
    one = PoseSequence3D(topo, np.ones((1, 15, 3)))
    assert smooth_sequence(one, FilterSpec("EMA", 5)) == one
    const = PoseSequence3D(topo, np.tile(np.linspace(-1, 1, 45).reshape(1, 15, 3), (20, 1, 1)))
    for kind in KINDS:
        assert smooth_sequence(const, FilterSpec(kind, 5)) == const
