"""Quenched walk simulation and diffusive scaling.

A walk is driven by two independent sources of randomness: the environment
stream (per-site probability vectors) and the walk's own uniform stream,
one draw per time step.  Steps are selected by inverse CDF over the fixed
ordering of J, so a path is a pure function of (env_seed, walk_seed, start)
and simulating n' < n steps yields the prefix of the n-step path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environment import Environment, EnvironmentModel, cum_vectors_from_keys
from .rng import (TAG_WALK, derive_key, site_keys, site_keys_mixed,
                  counter_u01_array, stream_u01, stream_u01_array)


@dataclass
class WalkPath:
    """A finite trajectory with cached level data."""

    sites: np.ndarray        # (n+1, d) int64
    u_hat: np.ndarray        # (d,) int64

    def __post_init__(self):
        self.sites = np.asarray(self.sites, dtype=np.int64)
        self.u_hat = np.asarray(self.u_hat, dtype=np.int64)
        self.levels = self.sites @ self.u_hat
        self.running_max = np.maximum.accumulate(self.levels)

    @property
    def start(self) -> np.ndarray:
        return self.sites[0]

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def n_steps(self) -> int:
        return len(self.sites) - 1

    def to_csv_rows(self):
        """Rows (k, x_1..x_d, level) for debugging dumps."""
        for k in range(len(self.sites)):
            yield (k, *self.sites[k].tolist(), int(self.levels[k]))


def walk_key(walk_seed: int) -> int:
    return derive_key(walk_seed, TAG_WALK)


def simulate(env: Environment, start, n: int, walk_seed: int) -> WalkPath:
    """Sample an n-step path under P^omega_start."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    d = env.model.support.dimension
    start = np.asarray(start, dtype=np.int64)
    u_hat = np.asarray(env.model.support.u_hat, dtype=np.int64)
    if n == 0:
        return WalkPath(start[None, :].copy(), u_hat)
    wkey = walk_key(walk_seed)
    steps_arr = env.model.support.steps_array

    if env.model.kind == "deterministic":
        cum = np.cumsum(np.array(env.model.probs))
        u = counter_u01_array(wkey, np.arange(n, dtype=np.uint64))
        idx = np.searchsorted(cum, u, side="left")
        idx = np.minimum(idx, len(cum) - 1)
        sites = np.empty((n + 1, d), dtype=np.int64)
        sites[0] = start
        np.cumsum(steps_arr[idx], axis=0, out=sites[1:])
        sites[1:] += start
        return WalkPath(sites, u_hat)

    sites = np.empty((n + 1, d), dtype=np.int64)
    sites[0] = start
    pos = tuple(int(c) for c in start)
    k = len(env.model.support.steps)
    step_tuples = env.model.support.steps
    for t in range(n):
        cum = env.cum_at(pos)
        u = stream_u01(wkey, t)
        i = 0
        while i < k - 1 and cum[i] < u:
            i += 1
        z = step_tuples[i]
        pos = tuple(p + s for p, s in zip(pos, z))
        sites[t + 1] = pos
    return WalkPath(sites, u_hat)


def first_passage(path: WalkPath, level: int):
    """Minimal k with levels[k] >= level, or None if not reached."""
    hits = np.nonzero(path.levels >= level)[0]
    if hits.size == 0:
        return None
    return int(hits[0])


def diffusive_scale(path: WalkPath, v, n: int, t_grid) -> np.ndarray:
    """B_n(t) = (X_[nt] - [nt] v) / sqrt(n) on the given t grid."""
    v = np.asarray(v, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    idx = np.floor(n * t_grid).astype(int)
    if idx.max(initial=0) > path.n_steps:
        raise ValueError("path too short for requested scale/grid")
    return (path.sites[idx] - idx[:, None] * v) / np.sqrt(n)


# ---------------------------------------------------------------------------
# vectorized many-walk engines


def _steps_from_unique_keys(model: EnvironmentModel, keys: np.ndarray,
                            u: np.ndarray, steps_arr: np.ndarray) -> np.ndarray:
    """Inverse-CDF steps for walkers with site keys `keys` and uniforms `u`."""
    uniq, inv = np.unique(keys, return_inverse=True)
    cums = cum_vectors_from_keys(model, uniq)[inv]
    idx = (cums < u[:, None]).sum(axis=1)
    idx = np.minimum(idx, steps_arr.shape[0] - 1)
    return steps_arr[idx]


def _iter_positions(model: EnvironmentModel, env_keys, starts: np.ndarray,
                    n: int, walk_seeds) -> "iterator":
    """Advance m walkers in lockstep, yielding positions after each step.

    env_keys may be a scalar (shared environment) or one key per walker.
    """
    starts = np.asarray(starts, dtype=np.int64)
    pos = starts.copy()
    m = pos.shape[0]
    wkeys = np.array([walk_key(int(s)) for s in np.asarray(walk_seeds)],
                     dtype=np.uint64)
    steps_arr = model.support.steps_array
    shared = np.isscalar(env_keys)
    if not shared:
        env_keys = np.asarray(env_keys, dtype=np.uint64)
    if model.kind == "deterministic":
        cum = np.cumsum(np.array(model.probs))
        for t in range(n):
            u = stream_u01_array(wkeys, t)
            idx = np.searchsorted(cum, u, side="left")
            idx = np.minimum(idx, len(cum) - 1)
            pos += steps_arr[idx]
            yield t, pos
        return
    for t in range(n):
        if shared:
            keys = site_keys(env_keys, pos)
        else:
            keys = site_keys_mixed(env_keys, pos)
        u = stream_u01_array(wkeys, t)
        pos += _steps_from_unique_keys(model, keys, u, steps_arr)
        yield t, pos


def simulate_paths_many(env: Environment, starts, n: int, walk_seeds) -> np.ndarray:
    """Full site arrays (n+1, m, d) for m walks sharing one environment."""
    starts = np.asarray(starts, dtype=np.int64)
    out = np.empty((n + 1,) + starts.shape, dtype=np.int64)
    out[0] = starts
    for t, pos in _iter_positions(env.model, env.env_key, starts, n, walk_seeds):
        out[t + 1] = pos
    return out


def simulate_finals_many(env: Environment, starts, n: int, walk_seeds) -> np.ndarray:
    """Final positions (m, d) of m walks sharing one environment."""
    starts = np.asarray(starts, dtype=np.int64)
    pos = starts
    for _, pos in _iter_positions(env.model, env.env_key, starts, n, walk_seeds):
        pass
    return pos.copy()


def simulate_finals_many_envs(model: EnvironmentModel, env_keys, starts, n: int,
                              walk_seeds) -> np.ndarray:
    """Final positions for m walks, each in its own environment."""
    starts = np.asarray(starts, dtype=np.int64)
    pos = starts
    for _, pos in _iter_positions(model, env_keys, starts, n, walk_seeds):
        pass
    return pos.copy()


def simulate_paths_many_envs(model: EnvironmentModel, env_keys, starts, n: int,
                             walk_seeds) -> np.ndarray:
    """Full site arrays (n+1, m, d); walkers may share or own environments
    through the per-walker env_keys."""
    starts = np.asarray(starts, dtype=np.int64)
    out = np.empty((n + 1,) + starts.shape, dtype=np.int64)
    out[0] = starts
    for t, pos in _iter_positions(model, env_keys, starts, n, walk_seeds):
        out[t + 1] = pos
    return out


def simulate_level_stats_many_envs(model: EnvironmentModel, env_keys, starts,
                                   n: int, walk_seeds, checkpoints=None):
    """Level summaries for m independent-environment walks.

    Returns dict with final positions, the running max/min of the level
    sequence, and (optionally) levels at checkpoint times.
    """
    starts = np.asarray(starts, dtype=np.int64)
    u_hat = np.asarray(model.support.u_hat, dtype=np.int64)
    lev = starts @ u_hat
    max_lev = lev.astype(np.int64).copy()
    min_lev = lev.astype(np.int64).copy()
    checkpoints = sorted(set(int(c) for c in (checkpoints or [])))
    cp = {}
    if 0 in checkpoints:
        cp[0] = lev.copy()
    pos = starts
    for t, pos in _iter_positions(model, env_keys, starts, n, walk_seeds):
        lev = pos @ u_hat
        np.maximum(max_lev, lev, out=max_lev)
        np.minimum(min_lev, lev, out=min_lev)
        if t + 1 in checkpoints:
            cp[t + 1] = lev.copy()
    return {
        "final": pos.copy(),
        "final_level": lev.copy(),
        "max_level": max_lev,
        "min_level": min_lev,
        "checkpoint_levels": cp,
    }
