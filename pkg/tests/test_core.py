import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from negstream.core import (
    DimensionMismatch,
    NonFinite,
    Rng,
    ZeroVector,
    cosine,
    normalize,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
vectors = arrays(np.float64, st.integers(1, 12), elements=finite).filter(lambda x: np.linalg.norm(x) > 1e-6)


def test_normalize_examples():
    np.testing.assert_allclose(normalize([3, 4]), [0.6, 0.8])
    np.testing.assert_array_equal(normalize([1, 0, 0]), [1, 0, 0])
    with pytest.raises(ZeroVector):
        normalize([0, 0])
    with pytest.raises(NonFinite):
        normalize([1.0, np.nan])
    with pytest.raises(NonFinite):
        normalize([np.inf, 1.0])


@given(vectors)
def test_normalize_gives_unit_norm(x):
    assert abs(np.linalg.norm(normalize(x)) - 1.0) < 1e-6


@given(vectors, st.floats(1e-3, 1e3))
def test_normalize_scale_invariant(x, s):
    np.testing.assert_allclose(normalize(s * x), normalize(x), atol=1e-9)


def test_cosine_examples():
    u = normalize([0.3, -0.2, 0.9])
    assert cosine(u, u) == pytest.approx(1.0)
    assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert cosine([1.0, 0.0], [-1.0, 0.0]) == -1.0
    with pytest.raises(DimensionMismatch):
        cosine([1.0, 0.0], [1.0, 0.0, 0.0])


@given(st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_cosine_symmetric_and_bounded(d, seed):
    g = np.random.default_rng(seed)
    a, b = normalize(g.normal(size=d) + 1e-3), normalize(g.normal(size=d) + 1e-3)
    assert cosine(a, b) == cosine(b, a)
    assert abs(cosine(a, b)) <= 1 + 1e-9


def test_rng_replay_and_state_roundtrip():
    a, b = Rng(42), Rng(42)
    np.testing.assert_array_equal(a.normal(1.0, 5), b.normal(1.0, 5))
    state = a.get_state()
    x = a.permutation(20)
    c = Rng.from_state(state)
    np.testing.assert_array_equal(c.permutation(20), x)


def test_rng_derive_ignores_consumption():
    a = Rng(3)
    d1 = a.derive(5).uniform(size=3)
    a.uniform(size=100)
    np.testing.assert_array_equal(a.derive(5).uniform(size=3), d1)
    assert not np.array_equal(a.derive(6).uniform(size=3), d1)


def test_sample_without_replacement_distinct():
    r = Rng(0)
    for n, k in [(5, 5), (10, 3), (1, 0)]:
        s = r.sample_without_replacement(n, k)
        assert len(s) == k == len(set(s))
        assert all(0 <= i < n for i in s)
