import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daliid.numerics import (SeedStream, ZeroVectorError, cosine,
                             derive_stream, l2_normalize, log_sum_exp)


def test_l2_normalize_345():
    u, mag = l2_normalize(np.array([3.0, 4.0]))
    assert np.allclose(u, [0.6, 0.8])
    assert mag == 5.0


def test_l2_normalize_unit_identity():
    v = np.array([0.0, 1.0, 0.0])
    u, mag = l2_normalize(v)
    assert np.allclose(u, v)
    assert mag == pytest.approx(1.0)


def test_l2_normalize_zero_raises():
    with pytest.raises(ZeroVectorError):
        l2_normalize(np.zeros(4))


@pytest.mark.parametrize("dim", [2, 64, 512])
def test_l2_normalize_random(dim):
    gen = SeedStream(3).child(dim).generator()
    for _ in range(1000):
        v = gen.standard_normal(dim)
        u, mag = l2_normalize(v)
        # independent norm recomputation
        assert abs(float(np.sqrt(np.sum(u * u))) - 1.0) <= 1e-9
        assert mag == pytest.approx(float(np.sqrt(np.sum(v * v))), rel=1e-12)


def test_cosine_identity_orthogonal_antipodal():
    u = np.array([1.0, 0.0])
    w = np.array([0.0, 1.0])
    assert cosine(u, u) == 1.0
    assert cosine(u, w) == 0.0
    assert cosine(u, -u) == -1.0


def test_cosine_commutative():
    gen = SeedStream(5).generator()
    for _ in range(50):
        u, _ = l2_normalize(gen.standard_normal(16))
        w, _ = l2_normalize(gen.standard_normal(16))
        assert cosine(u, w) == cosine(w, u)


def test_log_sum_exp_basics():
    assert log_sum_exp([0.0]) == 0.0
    assert log_sum_exp([2.5, 2.5]) == pytest.approx(2.5 + np.log(2), abs=1e-12)
    assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(
        1000.0 + np.log(2), abs=1e-9)
    with pytest.raises(ValueError):
        log_sum_exp([])


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=20),
       st.randoms())
@settings(max_examples=100, deadline=None)
def test_log_sum_exp_permutation_invariant(xs, rnd):
    shuffled = list(xs)
    rnd.shuffle(shuffled)
    assert abs(log_sum_exp(xs) - log_sum_exp(shuffled)) <= 1e-12


class TestSeedStream:
    def test_same_child_identical(self):
        s = SeedStream(42)
        a = derive_stream(s, 0).generator().random(1000)
        b = derive_stream(s, 0).generator().random(1000)
        assert np.array_equal(a, b)

    def test_distinct_children_differ(self):
        s = SeedStream(42)
        a = derive_stream(s, 0).generator().random(1000)
        b = derive_stream(s, 1).generator().random(1000)
        assert np.any(a != b)

    def test_path_order_matters(self):
        s = SeedStream(42)
        a = s.child(1).child(2).generator().random(1000)
        b = s.child(2).child(1).generator().random(1000)
        assert np.any(a != b)
