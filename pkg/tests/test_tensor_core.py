import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dfm_wsol.tensor_core import (
    RngStream, as_feature_map, bernoulli, broadcast_channel, broadcast_spatial, cap, gap, tanh_map,
    load_tensor_text, save_tensor_text, scale_add,
)

from oracles import cap_loop, gap_loop

finite = st.floats(-1e3, 1e3, allow_nan=False)


@st.composite
def feature_maps(draw, max_dim=6):
    shape = tuple(draw(st.integers(1, max_dim)) for _ in range(3))
    return draw(arrays(np.float64, shape, elements=finite))


@given(feature_maps())
def test_gap_matches_loop(F):
    np.testing.assert_allclose(gap(F), gap_loop(F.tolist()), rtol=0, atol=1e-9)


@given(feature_maps())
def test_cap_matches_loop(F):
    np.testing.assert_allclose(cap(F), cap_loop(F.tolist()), rtol=0, atol=1e-9)


def test_pooling_on_a_batch_matches_per_sample():
    F = np.random.default_rng(0).normal(size=(3, 4, 5, 6))
    np.testing.assert_array_equal(gap(F), np.stack([gap(f) for f in F]))
    np.testing.assert_array_equal(cap(F), np.stack([cap(f) for f in F]))


def test_broadcasts_expand_constant_maps():
    v = np.array([1.0, -2.0])
    B = broadcast_channel(v, 3, 4)
    assert B.shape == (2, 3, 4)
    assert np.all(B[1] == -2.0)
    m = np.arange(6.0).reshape(2, 3)
    S = broadcast_spatial(m, 5)
    assert S.shape == (5, 2, 3)
    assert all(np.array_equal(S[k], m) for k in range(5))


def test_broadcast_rejects_empty_extent():
    with pytest.raises(ValueError):
        broadcast_channel(np.ones(2), 0, 3)


def test_scale_add_requires_matching_shapes():
    np.testing.assert_array_equal(scale_add(2.0, np.ones((1, 2, 2)), np.ones((1, 2, 2))), np.full((1, 2, 2), 3.0))
    with pytest.raises(ValueError):
        scale_add(1.0, np.ones((1, 2, 2)), np.ones((2, 2, 2)))


@pytest.mark.parametrize("bad", [np.ones((2, 2)), np.ones((1, 0, 2)), np.array([[[np.nan]]])])
def test_feature_map_validation(bad):
    with pytest.raises(ValueError):
        as_feature_map(bad)


def test_streams_are_keyed_by_label_and_extra():
    a = RngStream(5, "data-gen", 3).uniform(size=4)
    assert np.array_equal(a, RngStream(5, "data-gen", 3).uniform(size=4))
    assert not np.array_equal(a, RngStream(5, "data-gen", 4).uniform(size=4))
    assert not np.array_equal(a, RngStream(5, "shuffle", 3).uniform(size=4))
    with pytest.raises(ValueError):
        RngStream(1, "nope")


def test_stream_state_round_trips_through_json():
    r = RngStream(9, "dfm-select")
    r.uniform(size=7)
    text = r.state_json()
    json.loads(text)
    expected = r.uniform(size=5)
    restored = RngStream.from_state_json(text)
    assert np.array_equal(restored.uniform(size=5), expected)


def test_bernoulli_consumes_one_draw_and_validates():
    a, b = RngStream(1, "dfm-select"), RngStream(1, "dfm-select")
    bernoulli(a, 0.3)
    b.uniform()
    assert a.uniform() == b.uniform()
    assert bernoulli(RngStream(1, "dfm-select"), 1.0) is True
    assert bernoulli(RngStream(1, "dfm-select"), 0.0) is False
    for p in (-0.1, 1.1, float("nan")):
        with pytest.raises(ValueError):
            bernoulli(a, p)


@settings(max_examples=20)
@given(feature_maps(max_dim=4))
def test_tensor_text_round_trip(tmp_path_factory, F):
    path = tmp_path_factory.mktemp("t") / "f.txt"
    save_tensor_text(path, F)
    assert np.array_equal(load_tensor_text(path), F)
    assert path.read_text().split("\n")[0] == " ".join(map(str, F.shape))


def test_tensor_text_reports_wrong_count(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("1 2 2\n1 2 3\n")
    with pytest.raises(ValueError, match="expected 4 values"):
        load_tensor_text(p)


def test_worked_pooling_example():
    F = np.array([[[1.0, 2.0], [3.0, 4.0]], [[0.0, 0.0], [0.0, 8.0]]])
    assert gap(F).tolist() == [2.5, 2.0]
    assert cap(F).tolist() == [[0.5, 1.0], [1.5, 6.0]]
    assert np.array_equal(gap(np.ones((3, 2, 5))), np.ones(3))
    single = np.random.default_rng(0).normal(size=(1, 3, 3))
    assert np.array_equal(cap(single), single[0])


def test_tanh_values():
    assert np.array_equal(tanh_map(np.zeros(3)), np.zeros(3))
    assert abs(tanh_map(np.array([100.0]))[0] - 1.0) <= 1e-12
    assert tanh_map(np.array([0.5]))[0] == pytest.approx(math.tanh(0.5), abs=1e-15)
    assert tanh_map(np.array([0.5]))[0] == pytest.approx(0.46211715726, abs=1e-11)


@given(arrays(np.float64, st.integers(1, 8), elements=finite), st.integers(1, 6), st.integers(1, 6))
def test_broadcast_channel_inverts_gap(v, h, w):
    assert np.array_equal(gap(broadcast_channel(v, h, w)), v)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite), st.integers(1, 8))
def test_broadcast_spatial_inverts_cap(m, c):
    assert np.array_equal(cap(broadcast_spatial(m, c)), m)


def test_worked_broadcast_and_scale_add_examples():
    B = broadcast_channel(np.array([0.0, 1.0]), 2, 2)
    assert not B[0].any() and np.all(B[1] == 1.0)
    m = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.array_equal(broadcast_spatial(m, 1)[0], m)
    X, Y = np.full((1, 2, 2), 0.5), np.ones((1, 2, 2))
    assert np.array_equal(scale_add(0.0, X, Y), Y)
    assert np.array_equal(scale_add(1.0, X, np.zeros_like(X)), X)
    assert np.allclose(scale_add(0.6, X, Y), 1.3)


def test_bernoulli_frequency_seed_42():
    r = RngStream(42, "dfm-select")
    frac = sum(bernoulli(r, 0.7) for _ in range(10_000)) / 10_000
    assert 0.68 <= frac <= 0.72


def test_operations_are_pure():
    F = np.random.default_rng(5).normal(size=(3, 4, 4))
    before = F.copy()
    a, b = (gap(F), cap(F)), (gap(F), cap(F))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert np.array_equal(F, before)
