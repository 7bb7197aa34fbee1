"""Keyed, counter-based pseudo-randomness.

Every random quantity in the laboratory is a pure function of a 64-bit key
and a counter.  Keys are derived by folding integer parts (seeds, lattice
coordinates, replica indices, purpose tags) through the splitmix64
finalizer; streams are splitmix64 sequences anchored at the key.  This
gives reproducibility that is independent of query order, worker count and
scheduling: two consumers asking for the same (key, counter) always see the
same value, and no draw ever has to be stored.

Scalar helpers operate on Python ints (masked to 64 bits); the `*_array`
variants operate on numpy uint64 arrays and produce bit-identical values.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_U_GAMMA = np.uint64(_GAMMA)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)

# fixed purpose tags so that unrelated streams never share a key
TAG_SITE = 0x51BE5EED
TAG_WALK = 0x57A1C5EED
TAG_ENV = 0xE27F5EED
TAG_STEPSTREAM = 0x5E95EED


def mix64(h: int) -> int:
    """splitmix64 finalizer on a Python int, result in [0, 2^64)."""
    h &= MASK64
    h = ((h ^ (h >> 30)) * _M1) & MASK64
    h = ((h ^ (h >> 27)) * _M2) & MASK64
    return h ^ (h >> 31)


def mix64_array(h: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer on uint64 arrays."""
    with np.errstate(over="ignore"):
        h = (h ^ (h >> np.uint64(30))) * _U_M1
        h = (h ^ (h >> np.uint64(27))) * _U_M2
        return h ^ (h >> np.uint64(31))


def derive_key(seed: int, *parts: int) -> int:
    """Fold integer parts (may be negative) into a well-mixed 64-bit key."""
    h = mix64(seed + _GAMMA)
    for p in parts:
        h = mix64((h + _GAMMA) ^ (p & MASK64))
    return h


def scalar_site_key(env_key: int, site) -> int:
    """Python-int twin of site_keys for one site (bit-identical)."""
    h = mix64(env_key + _GAMMA)
    for c in site:
        h = mix64((h + _GAMMA) ^ (int(c) & MASK64))
    return h


def site_keys(env_key: int, sites: np.ndarray) -> np.ndarray:
    """Keys for lattice sites, one per row of `sites` (n, d) int array.

    Matches derive_key(env_key, *site) coordinate by coordinate.
    """
    sites = np.asarray(sites)
    if sites.ndim == 1:
        sites = sites[None, :]
    h = np.full(sites.shape[0], mix64(env_key + _GAMMA), dtype=np.uint64)
    with np.errstate(over="ignore"):
        for j in range(sites.shape[1]):
            c = sites[:, j].astype(np.int64).view(np.uint64)
            h = mix64_array((h + _U_GAMMA) ^ c)
    return h


def site_keys_mixed(env_keys: np.ndarray, sites: np.ndarray) -> np.ndarray:
    """Like site_keys but with a separate environment key per row."""
    sites = np.asarray(sites)
    h = mix64_array(np.asarray(env_keys, dtype=np.uint64) + _U_GAMMA)
    with np.errstate(over="ignore"):
        for j in range(sites.shape[1]):
            c = sites[:, j].astype(np.int64).view(np.uint64)
            h = mix64_array((h + _U_GAMMA) ^ c)
    return h


def stream_u64(key: int, ctr: int) -> int:
    """Draw `ctr` of the stream anchored at `key` (splitmix64 sequence)."""
    return mix64((key + ctr * _GAMMA) & MASK64)


def stream_u01(key: int, ctr: int) -> float:
    """Uniform in the open interval (0, 1), scalar."""
    return ((stream_u64(key, ctr) >> 11) + 0.5) * 2.0**-53


def stream_u64_array(keys: np.ndarray, ctr: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        return mix64_array(np.asarray(keys, dtype=np.uint64)
                           + np.uint64((ctr * _GAMMA) & MASK64))


def stream_u01_array(keys: np.ndarray, ctr: int) -> np.ndarray:
    """Uniforms in (0, 1), one per key, all at the same counter."""
    v = stream_u64_array(keys, ctr)
    return ((v >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def counter_u01_array(key: int, ctrs: np.ndarray) -> np.ndarray:
    """Uniforms in (0, 1) for one key across an array of counters."""
    with np.errstate(over="ignore"):
        v = mix64_array(np.uint64(key)
                        + np.asarray(ctrs, dtype=np.uint64) * _U_GAMMA)
    return ((v >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
