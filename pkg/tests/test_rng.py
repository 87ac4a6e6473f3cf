import numpy as np
from hypothesis import given, strategies as st
from scipy import stats

from landau_chaos import _rng


def test_stream_keys_are_deterministic_and_distinct():
    a = _rng.stream_keys(3, range(100))
    assert np.array_equal(a, _rng.stream_keys(3, range(100)))
    assert len(set(a.tolist())) == 100
    assert _rng.stream_key(3, 0) != _rng.stream_key(4, 0)


@given(st.integers(0, 2**31), st.integers(0, 10**6))
def test_numpy_rng_reproducible(seed, r):
    assert _rng.numpy_rng(seed, r).random() == _rng.numpy_rng(seed, r).random()


def test_pair_normals_are_standard_normal():
    key = np.uint64(_rng.stream_key(0, 0))
    g = np.zeros(3)
    xs = []
    for step in range(200):
        sk = np.uint64(_rng.step_key(key, step))
        for lo in range(10):
            for hi in range(lo + 1, 11):
                _rng.fill_normals(np.uint64(_rng.pair_key(sk, lo, hi)), g)
                xs.append(g.copy())
    xs = np.array(xs)
    assert stats.kstest(xs[:, 0], "norm").pvalue > 1e-3
    assert stats.kstest(xs[:, 2], "norm").pvalue > 1e-3
    assert abs(np.corrcoef(xs[:, 0], xs[:, 1])[0, 1]) < 0.02
    assert abs(xs.mean()) < 0.02 and abs(xs.var() - 1) < 0.03


def test_uniform_in_unit_interval():
    key = np.uint64(_rng.stream_key(1, 2))
    u = np.array([_rng.uniform(np.uint64(_rng.pair_key(key, 0, k)), s) for k in range(1, 2000) for s in range(3)])
    assert np.all((u > 0) & (u <= 1))
    assert stats.kstest(u, "uniform").pvalue > 1e-3
