import numpy as np

from rwre.rng import (derive_key, mix64, mix64_array, scalar_site_key,
                      site_keys, site_keys_mixed, stream_u01,
                      stream_u01_array, counter_u01_array)


def test_mix64_scalar_matches_array():
    xs = [0, 1, 2**63, 0xDEADBEEF, 2**64 - 1]
    arr = mix64_array(np.array(xs, dtype=np.uint64))
    for x, a in zip(xs, arr):
        assert mix64(x) == int(a)


def test_scalar_site_key_matches_vectorized():
    key = derive_key(42, 7)
    sites = np.array([[3, 4], [0, 0], [-5, 11], [2**31, -2**31]], dtype=np.int64)
    vec = site_keys(key, sites)
    for row, k in zip(sites, vec):
        assert scalar_site_key(key, tuple(row)) == int(k)
    mixed = site_keys_mixed(np.full(len(sites), key, dtype=np.uint64), sites)
    assert np.array_equal(vec, mixed)


def test_stream_scalar_matches_array():
    keys = np.array([derive_key(1, i) for i in range(5)], dtype=np.uint64)
    for ctr in (0, 1, 17, 123456):
        arr = stream_u01_array(keys, ctr)
        for k, u in zip(keys, arr):
            assert stream_u01(int(k), ctr) == u
    one = counter_u01_array(int(keys[0]), np.arange(10, dtype=np.uint64))
    for ctr in range(10):
        assert one[ctr] == stream_u01(int(keys[0]), ctr)


def test_uniforms_open_interval_and_spread():
    keys = np.array([derive_key(9, i) for i in range(20000)], dtype=np.uint64)
    u = stream_u01_array(keys, 0)
    assert np.all(u > 0) and np.all(u < 1)
    assert abs(u.mean() - 0.5) < 0.02
    assert abs(u.var() - 1 / 12) < 0.005


def test_derive_key_sensitivity():
    assert derive_key(1, 2, 3) != derive_key(1, 3, 2)
    assert derive_key(1, 2) != derive_key(2, 2)
    assert derive_key(5, -1) != derive_key(5, 1)
    keys = {derive_key(0, i, j) for i in range(50) for j in range(50)}
    assert len(keys) == 2500
