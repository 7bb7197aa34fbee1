"""Two walks in a common environment: intersections, joint regenerations,
the difference chain and its symmetric twin, and the three-walk coupling.

Joint regeneration levels are found by the fresh-level iteration: starting
from a common level, locate the first level that both walks enter exactly
at first passage; test there for joint no-backtracking (approximated by a
confirmation margin); on failure restart the search above everything seen
so far.  Levels live on the h-lattice of the accessible level set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .environment import Environment, EnvironmentModel, compute_h, make_environment
from .rng import derive_key, site_keys, stream_u01
from .walk import WalkPath, simulate, simulate_paths_many_envs, walk_key

_TAG_PAIR = 0xAA01
_TAG_YCHAIN = 0xAA02
_TAG_YBAR = 0xAA03
_TAG_TRIPLE = 0xAA04
_TAG_INTER = 0xAA05
_TAG_STEPS = 0xAA06


@dataclass
class PairPath:
    pathX: WalkPath
    pathXtilde: WalkPath


@dataclass
class JointRegenRecord:
    lambda_levels: list
    Lambda: Optional[int]
    mu1: Optional[int]
    mu1_tilde: Optional[int]
    confirmed: bool
    x_mu: Optional[tuple] = None
    x_tilde_mu: Optional[tuple] = None


@dataclass
class YChainSample:
    y: np.ndarray            # (K, d) states, all in V_d
    rejections: int
    unconfirmed: int


@dataclass
class CouplingOutcome:
    Y1: np.ndarray
    Ybar1: np.ndarray
    equal: bool
    hit_X_path: bool
    n_triples: int


def make_pair(env: Environment, x, y, n: int, seed: int = 0) -> PairPath:
    """Two independent n-step walks reading the same environment."""
    return PairPath(
        pathX=simulate(env, x, n, derive_key(seed, _TAG_PAIR, 1)),
        pathXtilde=simulate(env, y, n, derive_key(seed, _TAG_PAIR, 2)),
    )


def count_intersections(p: PairPath, n: int) -> int:
    """Number of common sites of the two ranges X_[0,n) and Xtilde_[0,n)."""
    if p.pathX.n_steps < n - 1 or p.pathXtilde.n_steps < n - 1:
        raise ValueError("paths shorter than requested horizon")
    a = set(map(tuple, p.pathX.sites[:n].tolist()))
    b = set(map(tuple, p.pathXtilde.sites[:n].tolist()))
    return len(a & b)


def intersection_curve(model: EnvironmentModel, n_grid, reps: int,
                       seed: int = 0, chunk: int = 250) -> dict:
    """Mean number of common points of two walks in a common environment,
    over a horizon grid, with independent replicas per grid point."""
    n_grid = sorted(int(n) for n in n_grid)
    d = model.support.dimension
    means, ses = [], []
    for ni, n in enumerate(n_grid):
        counts = np.empty(reps)
        for c0 in range(0, reps, chunk):
            c1 = min(c0 + chunk, reps)
            m = c1 - c0
            env_keys = np.empty(2 * m, dtype=np.uint64)
            wseeds = []
            for i in range(m):
                ek = make_environment(
                    model, derive_key(seed, _TAG_INTER, ni, c0 + i)).env_key
                env_keys[2 * i] = ek
                env_keys[2 * i + 1] = ek
                wseeds.append(derive_key(seed, _TAG_INTER, ni, c0 + i, 1))
                wseeds.append(derive_key(seed, _TAG_INTER, ni, c0 + i, 2))
            starts = np.zeros((2 * m, d), dtype=np.int64)
            paths = simulate_paths_many_envs(model, env_keys, starts,
                                             n - 1, wseeds)
            for i in range(m):
                ka = np.unique(site_keys(0, paths[:, 2 * i, :]))
                kb = np.unique(site_keys(0, paths[:, 2 * i + 1, :]))
                counts[c0 + i] = np.intersect1d(ka, kb,
                                                assume_unique=True).size
        means.append(float(counts.mean()))
        ses.append(float(counts.std(ddof=1) / np.sqrt(reps)))
    from .fitting import fit_exponent
    fit = fit_exponent(n_grid, means)
    return {"n_grid": n_grid, "mean": np.array(means), "se": np.array(ses),
            "fit": fit}


# ---------------------------------------------------------------------------
# sequential walks with fresh-level bookkeeping


class _TimeSource:
    """Per-walk uniform stream indexed by time."""

    __slots__ = ("key",)

    def __init__(self, key: int):
        self.key = key

    def draw(self, site: tuple, t: int) -> float:
        return stream_u01(self.key, t)


class _SiteSource:
    """Per-site uniform streams; each visit consumes the next index.

    Two walks sharing the same base key read identical uniforms as long as
    their visit histories agree, which is what couples them.
    """

    __slots__ = ("base", "counts", "_keys")

    def __init__(self, base: int):
        self.base = base
        self.counts: dict = {}
        self._keys: dict = {}

    def draw(self, site: tuple, t: int) -> float:
        k = self.counts.get(site, 0)
        self.counts[site] = k + 1
        key = self._keys.get(site)
        if key is None:
            key = derive_key(self.base, _TAG_STEPS, *site)
            self._keys[site] = key
        return stream_u01(key, k)


class _SeqWalk:
    """A lazily extended walk with level records and fresh-level map."""

    def __init__(self, cum_fn, start: tuple, source, u_hat, steps):
        self.cum_fn = cum_fn
        self.source = source
        self.u_hat = u_hat
        self.steps = steps
        lev = sum(a * b for a, b in zip(start, u_hat))
        self.positions = [tuple(start)]
        self.levels = [lev]
        self.runmax = [lev]
        self.min_level = lev
        self.fresh = {lev: 0}

    def __len__(self):
        return len(self.positions)

    def extend_to(self, t: int, horizon: int) -> bool:
        """Grow the path to time index t; False when the horizon blocks."""
        while len(self.positions) - 1 < t:
            if len(self.positions) - 1 >= horizon:
                return False
            self._step()
        return True

    def advance_until_max(self, level: int, horizon: int) -> bool:
        while self.runmax[-1] < level:
            if len(self.positions) - 1 >= horizon:
                return False
            self._step()
        return True

    def _step(self):
        t = len(self.positions) - 1
        pos = self.positions[-1]
        cum = self.cum_fn(pos)
        u = self.source.draw(pos, t)
        i = 0
        last = len(cum) - 1
        while i < last and cum[i] < u:
            i += 1
        z = self.steps[i]
        new = tuple(p + s for p, s in zip(pos, z))
        lev = self.levels[-1] + sum(a * b for a, b in zip(z, self.u_hat))
        self.positions.append(new)
        self.levels.append(lev)
        if lev > self.runmax[-1]:
            self.runmax.append(lev)
            self.fresh[lev] = t + 1
        else:
            self.runmax.append(self.runmax[-1])
        if lev < self.min_level:
            self.min_level = lev


def _joint_regen(wa: _SeqWalk, wb: _SeqWalk, h: int, margin: int,
                 horizon: int) -> JointRegenRecord:
    """Run the fresh-level iteration on two walks sharing a start level."""
    lam0 = wa.levels[0]
    lambdas = []
    target = lam0 + h
    while True:
        # locate the next common fresh level at or above `target`
        ell = target
        lam = None
        while True:
            if not wa.advance_until_max(ell, horizon) or \
               not wb.advance_until_max(ell, horizon):
                return JointRegenRecord(lambdas, None, None, None, False)
            ta = wa.fresh.get(ell)
            tb = wb.fresh.get(ell)
            if ta is not None and tb is not None:
                lam = ell
                break
            ell += h
        lambdas.append(lam)
        # joint no-backtracking test with a confirmation margin
        ok_a = ok_b = False
        off = 0
        failed = False
        while not (ok_a and ok_b):
            off += 1
            if not wa.extend_to(ta + off, horizon) or \
               not wb.extend_to(tb + off, horizon):
                return JointRegenRecord(lambdas, None, None, None, False)
            la = wa.levels[ta + off]
            lb = wb.levels[tb + off]
            if la < lam or lb < lam:
                top = max(wa.runmax[ta + off], wb.runmax[tb + off])
                target = top + h
                failed = True
                break
            ok_a = ok_a or wa.runmax[ta + off] >= lam + margin
            ok_b = ok_b or wb.runmax[tb + off] >= lam + margin
        if failed:
            continue
        return JointRegenRecord(lambdas, lam, ta, tb, True,
                                x_mu=wa.positions[ta],
                                x_tilde_mu=wb.positions[tb])


def _check_common_start(model: EnvironmentModel, x, y) -> int:
    sup = model.support
    lx = sup.dot_u(x)
    ly = sup.dot_u(y)
    if lx != ly:
        raise ValueError("joint regeneration requires equal start levels")
    h = compute_h(sup)
    if lx % h != 0:
        raise ValueError("start level must lie on the h-lattice")
    return h


def first_joint_regeneration(env: Environment, x, y, margin: int = 20,
                             horizon: int = 20_000, seed: int = 0,
                             walk_seeds=None) -> JointRegenRecord:
    """First joint regeneration record of two fresh walks from x and y.

    walk_seeds optionally fixes the two walks' own seeds; passing the same
    seed with x == y makes the pair one and the same walk.
    """
    model = env.model
    h = _check_common_start(model, x, y)
    sup = model.support
    if walk_seeds is None:
        walk_seeds = (derive_key(seed, _TAG_PAIR, 10),
                      derive_key(seed, _TAG_PAIR, 11))
    wa = _SeqWalk(env.cum_at, tuple(int(c) for c in x),
                  _TimeSource(walk_key(int(walk_seeds[0]))),
                  sup.u_hat, sup.steps)
    wb = _SeqWalk(env.cum_at, tuple(int(c) for c in y),
                  _TimeSource(walk_key(int(walk_seeds[1]))),
                  sup.u_hat, sup.steps)
    return _joint_regen(wa, wb, h, margin, horizon)


# ---------------------------------------------------------------------------
# canonical difference chains


def _one_q_step(model: EnvironmentModel, y: tuple, seed: int, margin: int,
                horizon: int, independent_envs: bool) -> tuple:
    """One attempt at a conditioned slab from states (0, y).

    Returns (accepted, new_y, confirmed) where accepted requires both the
    joint regeneration to confirm and neither walk to dip below the start
    level anywhere in its simulated range.
    """
    sup = model.support
    d = sup.dimension
    origin = tuple(0 for _ in range(d))
    env_a = make_environment(model, derive_key(seed, 1))
    env_b = env_a
    if independent_envs:
        env_b = make_environment(model, derive_key(seed, 2))
    wa = _SeqWalk(env_a.cum_at, origin,
                  _TimeSource(derive_key(seed, 3)), sup.u_hat, sup.steps)
    wb = _SeqWalk(env_b.cum_at, y,
                  _TimeSource(derive_key(seed, 4)), sup.u_hat, sup.steps)
    h = compute_h(sup)
    rec = _joint_regen(wa, wb, h, margin, horizon)
    if not rec.confirmed:
        return False, None, False
    if wa.min_level < 0 or wb.min_level < 0:
        return False, None, True
    diff = tuple(b - a for a, b in zip(rec.x_mu, rec.x_tilde_mu))
    return True, diff, True


def _sample_chain(model: EnvironmentModel, x0, K: int, seed: int, margin: int,
                  horizon: int, max_rejections: int,
                  independent_envs: bool, tag: int) -> YChainSample:
    sup = model.support
    if sup.dot_u(x0) != 0:
        raise ValueError("x0 must lie in the hyperplane V_d (x0.u_hat = 0)")
    y = tuple(int(c) for c in x0)
    out = []
    rejections = 0
    unconfirmed = 0
    for k in range(K):
        accepted = False
        for attempt in range(max_rejections):
            ok, new_y, confirmed = _one_q_step(
                model, y, derive_key(seed, tag, k, attempt), margin, horizon,
                independent_envs)
            if ok:
                y = new_y
                accepted = True
                break
            rejections += 1
            if not confirmed:
                unconfirmed += 1
        if not accepted:
            raise RuntimeError(
                f"rejection cap {max_rejections} hit at chain step {k + 1}")
        out.append(y)
    return YChainSample(y=np.array(out, dtype=np.int64),
                        rejections=rejections, unconfirmed=unconfirmed)


def sample_Y_chain(model: EnvironmentModel, x0, K: int, seed: int = 0,
                   margin: int = 20, horizon: int = 20_000,
                   max_rejections: int = 1000) -> YChainSample:
    """K steps of the canonical difference chain (common environment).

    Each transition runs a fresh conditioned slab: a pair of walks from
    (0, y) in a fresh environment strip, rejected until neither backtracks
    below the start level (margin-approximated), per the conditioning in
    the transition law.
    """
    return _sample_chain(model, x0, K, seed, margin, horizon, max_rejections,
                         independent_envs=False, tag=_TAG_YCHAIN)


def sample_Ybar_chain(model: EnvironmentModel, x0, K: int, seed: int = 0,
                      margin: int = 20, horizon: int = 20_000,
                      max_rejections: int = 1000) -> YChainSample:
    """Same construction with the two walks in independent environments:
    the symmetric random walk used as the coupling target."""
    return _sample_chain(model, x0, K, seed, margin, horizon, max_rejections,
                         independent_envs=True, tag=_TAG_YBAR)


def support_inheritance_check(model: EnvironmentModel, x0, n_samples: int,
                              seed: int = 0, margin: int = 12,
                              horizon: int = 20_000,
                              threshold_factor: float = 10.0) -> dict:
    """Compare the empirical supports of one-step q(x0,.) and qbar(x0,.).

    Flags atoms seen under q with frequency above threshold_factor / n but
    never under qbar at matched sample size.  With many atoms this is a
    multiple comparison, so isolated borderline flags are expected at rate
    ~ exp(-threshold_factor).
    """
    from collections import Counter
    cq: Counter = Counter()
    cqb: Counter = Counter()
    for i in range(n_samples):
        s = sample_Y_chain(model, x0, 1, seed=derive_key(seed, 5, i),
                           margin=margin, horizon=horizon)
        cq[tuple(s.y[0])] += 1
        sb = sample_Ybar_chain(model, x0, 1, seed=derive_key(seed, 6, i),
                               margin=margin, horizon=horizon)
        cqb[tuple(sb.y[0])] += 1
    thresh = threshold_factor / n_samples
    flagged = [z for z, c in cq.items()
               if c / n_samples > thresh and cqb[z] == 0]
    return {"q_support": dict(cq), "qbar_support": dict(cqb),
            "flagged": flagged, "threshold": thresh,
            "note": "flags are subject to multiple testing across atoms"}


# ---------------------------------------------------------------------------
# the three-walk coupling


class _RangeEnvChooser:
    """Cumulative vectors for the Xbar walk: the independent environment on
    X's (lazily extended) range, the common environment elsewhere."""

    __slots__ = ("env", "env_bar", "x_walk", "x_set", "lookahead", "pad",
                 "horizon", "owner", "hit")

    def __init__(self, env, env_bar, x_walk, lookahead, pad, horizon):
        self.env = env
        self.env_bar = env_bar
        self.x_walk = x_walk
        self.x_set = set(x_walk.positions)
        self.lookahead = lookahead
        self.pad = pad
        self.horizon = horizon
        self.owner: Optional[_SeqWalk] = None
        self.hit = False

    def _sync_range(self):
        need = self.lookahead * (len(self.owner.positions)) + self.pad
        prev = len(self.x_walk.positions)
        if need > prev:
            self.x_walk.extend_to(min(need, self.horizon), self.horizon)
            for p in self.x_walk.positions[prev:]:
                self.x_set.add(p)

    def __call__(self, site: tuple) -> tuple:
        self._sync_range()
        if site in self.x_set:
            self.hit = True
            return self.env_bar.cum_at(site)
        return self.env.cum_at(site)


def coupled_triple(model: EnvironmentModel, x0, seed: int = 0,
                   margin: int = 20, horizon: int = 20_000,
                   lookahead: int = 2, max_triples: int = 200) -> CouplingOutcome:
    """One coupled sample (Y_1, Ybar_1) from a common start x0 in V_d.

    Generates i.i.d. triples (X, Xtilde, Xbar): X from the origin in omega;
    Xtilde from x0 in omega; Xbar from x0 reading an independent
    environment on X's range and omega elsewhere, step-coupled to Xtilde
    through shared per-site visit streams.  Y_1 comes from the first
    triple whose (X, Xtilde) pair never backtracks, Ybar_1 from the first
    triple whose (X, Xbar) pair never backtracks.
    """
    sup = model.support
    if sup.dot_u(x0) != 0:
        raise ValueError("x0 must lie in the hyperplane V_d (x0.u_hat = 0)")
    h = compute_h(sup)
    d = sup.dimension
    origin = tuple(0 for _ in range(d))
    x0 = tuple(int(c) for c in x0)
    Y1 = Ybar1 = None
    hit = False
    m = 0
    while (Y1 is None or Ybar1 is None) and m < max_triples:
        m += 1
        tseed = derive_key(seed, _TAG_TRIPLE, m)
        env = make_environment(model, derive_key(tseed, 1))
        env_bar = make_environment(model, derive_key(tseed, 2))
        wx = _SeqWalk(env.cum_at, origin, _TimeSource(derive_key(tseed, 3)),
                      sup.u_hat, sup.steps)
        shared = derive_key(tseed, 4)
        wt = _SeqWalk(env.cum_at, x0, _SiteSource(shared),
                      sup.u_hat, sup.steps)
        chooser = _RangeEnvChooser(env, env_bar, wx, lookahead,
                                   pad=4 * margin, horizon=horizon)
        wbar = _SeqWalk(chooser, x0, _SiteSource(shared),
                        sup.u_hat, sup.steps)
        chooser.owner = wbar
        rec_t = _joint_regen(wx, wt, h, margin, horizon)
        rec_b = _joint_regen(wx, wbar, h, margin, horizon)
        hit = hit or chooser.hit
        if Y1 is None and rec_t.confirmed and wx.min_level >= 0 \
                and wt.min_level >= 0:
            Y1 = tuple(b - a for a, b in zip(rec_t.x_mu, rec_t.x_tilde_mu))
        if Ybar1 is None and rec_b.confirmed and wx.min_level >= 0 \
                and wbar.min_level >= 0:
            Ybar1 = tuple(b - a for a, b in zip(rec_b.x_mu, rec_b.x_tilde_mu))
    if Y1 is None or Ybar1 is None:
        raise RuntimeError(f"coupling cap {max_triples} triples exhausted")
    return CouplingOutcome(Y1=np.array(Y1, dtype=np.int64),
                           Ybar1=np.array(Ybar1, dtype=np.int64),
                           equal=bool(Y1 == Ybar1),
                           hit_X_path=hit, n_triples=m)


def coupling_decay(model: EnvironmentModel, x0_list, reps: int, seed: int = 0,
                   margin: int = 20, horizon: int = 20_000) -> dict:
    """P_hat(Y_1 != Ybar_1) per start, with binomial standard errors."""
    rows = []
    for j, x0 in enumerate(x0_list):
        neq = 0
        for i in range(reps):
            out = coupled_triple(model, x0, seed=derive_key(seed, 7, j, i),
                                 margin=margin, horizon=horizon)
            neq += int(not out.equal)
        p = neq / reps
        rows.append((tuple(x0), p,
                     float(np.sqrt(max(p * (1 - p), 1e-12) / reps))))
    return {"rows": rows}
