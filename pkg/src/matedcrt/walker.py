"""Simple random walk on multigraphs: Monte Carlo runs and exact evolution.

A step picks one of the ``deg(v)`` edge-ends at ``v`` uniformly, so parallel
edges are weighted by multiplicity and a self-loop (two edge-ends) keeps the
walker in place with probability ``2/deg``.

Monte Carlo walkers draw from the counter-based stream in :mod:`._rng`.
Walkers are grouped in shards of ``SHARD_SIZE``; walker ``i`` always belongs to
shard ``i // SHARD_SIZE`` regardless of how many threads run, so results are a
pure function of the master seed.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ._accel import USE_NUMBA, njit
from ._rng import uniform_at, uniforms, walker_keys
from .errors import AccuracyError, ContaminationError, DomainError
from .graph_core import MultiGraph, bfs_ball, bfs_distances

SHARD_SIZE = 4096
DEFAULT_TAU = 1e-15


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("MCRT_THREADS", "1")))
    except ValueError:
        return 1


# -- kernels --------------------------------------------------------------------------


@njit(nogil=True)
def _run_walkers(indptr, nbr, keys, root, steps, dist, radii, times, stop_mask, use_stop, until_time,
                 bad_mask, use_bad):
    """Advance each walker; see :func:`_run_walkers_numpy` for the meaning of the outputs."""
    w_count = len(keys)
    sigma = np.full((w_count, len(radii)), -1, dtype=np.int64)
    disp = np.full((w_count, len(times)), -1, dtype=np.int64)
    visits = np.zeros(w_count, dtype=np.int64)
    used = np.zeros(w_count, dtype=np.int64)
    tainted = np.full(w_count, -1, dtype=np.int64)
    for w in range(w_count):
        key = keys[w]
        v = root
        ri = 0
        ti = 0
        t = 0
        while True:
            if use_stop and stop_mask[v]:
                break
            if use_bad and tainted[w] < 0 and bad_mask[v]:
                tainted[w] = t
            if t <= until_time and v == root:
                visits[w] += 1
            while ti < len(times) and times[ti] == t:
                disp[w, ti] = dist[v]
                ti += 1
            while ri < len(radii) and dist[v] > radii[ri]:
                sigma[w, ri] = t
                ri += 1
            if t >= steps or (not use_stop and ri == len(radii) and ti == len(times) and t >= until_time):
                break
            lo = indptr[v]
            d = indptr[v + 1] - lo
            j = int(uniform_at(key, t) * d)
            v = nbr[lo + j]
            t += 1
        used[w] = t
    return sigma, disp, visits, used, tainted


def _run_walkers_numpy(indptr, nbr, keys, root, steps, dist, radii, times, stop_mask, use_stop, until_time,
                       bad_mask, use_bad):
    """Vectorised over walkers.

    ``sigma[w, i]`` is the first time walker ``w`` is farther than ``radii[i]``
    from the root (-1 if not within ``steps``), ``disp[w, i]`` its distance at
    ``times[i]``, ``visits[w]`` the number of times ``t <= until_time`` (and
    before the stop set is hit) at which it sits at the root, and ``used[w]``
    the number of steps taken.  ``tainted[w]`` is the first time the walker
    stands on a ``bad_mask`` vertex, or -1.
    """
    w_count = len(keys)
    sigma = np.full((w_count, len(radii)), -1, dtype=np.int64)
    disp = np.full((w_count, len(times)), -1, dtype=np.int64)
    visits = np.zeros(w_count, dtype=np.int64)
    used = np.zeros(w_count, dtype=np.int64)
    tainted = np.full(w_count, -1, dtype=np.int64)
    pos = np.full(w_count, root, dtype=np.int64)
    alive = np.ones(w_count, dtype=bool)
    ri = np.zeros(w_count, dtype=np.int64)
    t_map = {int(x): i for i, x in enumerate(times)}
    nr = len(radii)
    t = 0
    while alive.any():
        idx = np.nonzero(alive)[0]
        v = pos[idx]
        if use_stop:
            hit = stop_mask[v]
            used[idx[hit]] = t
            alive[idx[hit]] = False
            idx, v = idx[~hit], v[~hit]
        if use_bad:
            newly = (tainted[idx] < 0) & bad_mask[v]
            tainted[idx[newly]] = t
        if t <= until_time:
            visits[idx[v == root]] += 1
        if t in t_map:
            disp[idx, t_map[t]] = dist[v]
        dv = dist[v]
        for i in range(nr):
            newly = (ri[idx] == i) & (dv > radii[i])
            sigma[idx[newly], i] = t
            ri[idx[newly]] += 1
        if t >= steps:
            used[idx] = t
            alive[idx] = False
            break
        if not use_stop:
            done = (ri[idx] == nr) & (t >= until_time) & (t >= (times[-1] if len(times) else 0))
            used[idx[done]] = t
            alive[idx[done]] = False
            idx, v = idx[~done], v[~done]
        lo = indptr[v]
        d = indptr[v + 1] - lo
        j = (uniforms(keys[idx], np.full(len(idx), t)) * d).astype(np.int64)
        pos[idx] = nbr[lo + j]
        t += 1
    return sigma, disp, visits, used, tainted


def _batch(g: MultiGraph, root: int, walkers: int, seed: int, steps: int, dist, radii, times,
           stop_mask=None, until_time: int = -1, shard_offset: int = 0, bad_mask=None):
    """Run ``walkers`` walkers split into fixed shards, possibly on several threads."""
    radii = np.asarray(radii, dtype=np.int64)
    times = np.asarray(times, dtype=np.int64)
    use_stop = stop_mask is not None
    mask = stop_mask if use_stop else np.zeros(1, dtype=np.bool_)
    use_bad = bad_mask is not None
    bad = bad_mask if use_bad else np.zeros(1, dtype=np.bool_)
    kernel = _run_walkers if USE_NUMBA else _run_walkers_numpy
    shards = [(s, min(SHARD_SIZE, walkers - s * SHARD_SIZE)) for s in range((walkers + SHARD_SIZE - 1) // SHARD_SIZE)]

    def job(spec):
        s, count = spec
        keys = walker_keys(seed, shard_offset + s, count)
        return kernel(g.indptr, g.nbr, keys, root, steps, dist, radii, times, mask, use_stop, until_time, bad, use_bad)

    threads = min(thread_count(), len(shards))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(job, shards))
    else:
        parts = [job(s) for s in shards]
    # shard order is fixed, so concatenation is reproducible
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(5))


# -- simulation ------------------------------------------------------------------------


@dataclass
class WalkRun:
    root: int
    steps: int
    seed: int
    radii: np.ndarray
    exit_times: np.ndarray
    root_visits: int
    times: np.ndarray
    displacements: np.ndarray


def _check_root(g: MultiGraph, root: int):
    if not (0 <= root < g.n):
        raise DomainError(f"root {root} out of range")
    if g.degrees[root] == 0:
        raise DomainError("root is isolated; the walk is undefined")


def _check_forbidden(g, root, radius, forbidden):
    if forbidden is not None and radius >= 0:
        ball = bfs_ball(g, root, int(radius), forbidden)
        if not ball.valid:
            raise ContaminationError(f"B_{radius}({root}) contains window-contaminated vertices")


def simulate_walk(g: MultiGraph, root: int, steps: int, radii=(), seed: int = 0, times=(),
                  forbidden=None, shard: int = 0) -> WalkRun:
    """One walker of ``steps`` steps.

    Records the exit time from each ``B_r`` (-1 if not reached), the number of
    visits to the root at times ``0..steps`` and ``dist(X_t, root)`` at ``times``.
    """
    _check_root(g, root)
    if steps < 0:
        raise DomainError("steps must be non-negative")
    radii = np.sort(np.asarray(radii, dtype=np.int64))
    times = np.sort(np.asarray(times, dtype=np.int64))
    if len(times) and (times[0] < 0 or times[-1] > steps):
        raise DomainError("recording times must lie in [0, steps]")
    _check_forbidden(g, root, radii[-1] if len(radii) else -1, forbidden)
    dist, _ = bfs_distances(g, root)
    keys = walker_keys(seed, shard, 1)
    kernel = _run_walkers if USE_NUMBA else _run_walkers_numpy
    none = np.zeros(1, dtype=np.bool_)
    sigma, disp, visits, _, _ = kernel(g.indptr, g.nbr, keys, root, steps, dist, radii, times,
                                       none, False, steps, none, False)
    return WalkRun(root, steps, seed, radii, sigma[0], int(visits[0]), times, disp[0])


@dataclass
class McEstimate:
    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    confidence: float
    walkers: int
    samples: np.ndarray = field(repr=False, default=None)

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def _estimate(samples: np.ndarray, confidence: float) -> McEstimate:
    x = samples.astype(float)
    mean = float(x.mean())
    se = float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else float("inf")
    z = float(norm.ppf(0.5 + confidence / 2))
    return McEstimate(mean, se, mean - z * se, mean + z * se, confidence, len(x), samples)


def _stop_mask(g, stop):
    mask = np.zeros(g.n, dtype=np.bool_)
    idx = np.asarray(list(stop) if isinstance(stop, (set, frozenset)) else stop, dtype=np.int64)
    if idx.size == 0:
        raise DomainError("stop set must be nonempty")
    mask[idx] = True
    return mask


def green_mc(g: MultiGraph, root: int, stop, walkers: int, seed: int = 0, confidence: float = 0.99,
             max_steps: int = 10**9) -> McEstimate:
    """Expected visits to ``root`` before ``stop``.

    ``stop`` is either an integer time ``n`` (visits at times ``0..n``) or a
    collection of vertices (visits strictly before the first hit).
    """
    _check_root(g, root)
    if walkers <= 0:
        raise DomainError("need at least one walker")
    dist = np.zeros(g.n, dtype=np.int64)
    if np.isscalar(stop) and isinstance(stop, (int, np.integer)):
        n = int(stop)
        if n < 0:
            raise DomainError("stop time must be non-negative")
        _, _, visits, _, _ = _batch(g, root, walkers, seed, n, dist, [], [], None, n)
    else:
        mask = _stop_mask(g, stop)
        d, _ = bfs_distances(g, root)
        if not (d[mask] >= 0).any():
            raise DomainError("stop set is unreachable from the root")
        _, _, visits, used, _ = _batch(g, root, walkers, seed, max_steps, dist, [], [], mask, max_steps)
        if (used >= max_steps).any() and not mask[root]:
            raise DomainError(f"some walkers did not hit the stop set within {max_steps} steps")
    return _estimate(visits, confidence)


def exit_times_mc(g: MultiGraph, root: int, radii, walkers: int, seed: int = 0, forbidden=None,
                  max_steps: int = 10**9, confidence: float = 0.99) -> list[McEstimate]:
    """Monte Carlo estimate of ``E[sigma_r]`` for each radius."""
    _check_root(g, root)
    radii = np.sort(np.asarray(radii, dtype=np.int64))
    _check_forbidden(g, root, radii[-1], forbidden)
    dist, _ = bfs_distances(g, root)
    sigma, _, _, _, _ = _batch(g, root, walkers, seed, max_steps, dist, radii, [])
    if (sigma < 0).any():
        raise DomainError(f"some walkers did not exit within {max_steps} steps")
    return [_estimate(sigma[:, i], confidence) for i in range(len(radii))]


def displacement_samples(g: MultiGraph, root: int, times, walkers: int, seed: int = 0,
                         forbidden=None) -> np.ndarray:
    """``dist(X_t, root)`` for every walker (rows) and time (columns).

    With a ``forbidden`` mask, a walker that steps on a forbidden vertex by
    the last time raises :class:`ContaminationError`.
    """
    _check_root(g, root)
    times = np.sort(np.asarray(times, dtype=np.int64))
    if len(times) == 0 or times[0] < 0:
        raise DomainError("times must be a nonempty set of non-negative integers")
    if walkers <= 0:
        raise DomainError("need at least one walker")
    dist, _ = bfs_distances(g, root)
    _, disp, _, _, tainted = _batch(g, root, walkers, seed, int(times[-1]), dist, [], times, bad_mask=forbidden)
    if (tainted >= 0).any():
        first = int(tainted[tainted >= 0].min())
        raise ContaminationError(f"{int((tainted >= 0).sum())} of {walkers} walkers reached "
                                 f"window-contaminated vertices (first at step {first})")
    return disp


# -- exact evolution -----------------------------------------------------------------


@njit
def _evolve(indptr, nbr, root, steps, tau, forbidden, check, abort_on_hit, max_abs, max_rel):
    # sparse push while the support is small, dense pull once it covers a fair share of the graph
    n = len(indptr) - 1
    p = np.zeros(n)
    q = np.zeros(n)
    mark = np.zeros(n, dtype=np.bool_)
    active = np.empty(n, dtype=np.int64)
    touched = np.empty(n, dtype=np.int64)
    at_root = np.zeros(steps + 1)
    dropped = np.zeros(steps + 1)
    support = np.zeros(steps + 1, dtype=np.int64)
    p[root] = 1.0
    active[0] = root
    n_active = 1
    at_root[0] = 1.0
    support[0] = 1
    hit = -1
    dense = False
    for t in range(1, steps + 1):
        drop = 0.0
        if not dense and n_active * 3 > n:
            dense = True
        if dense:
            for v in range(n):
                d = indptr[v + 1] - indptr[v]
                if d > 0:
                    p[v] /= d
            n_active = 0
            for u in range(n):
                acc = 0.0
                for j in range(indptr[u], indptr[u + 1]):
                    acc += p[nbr[j]]
                if acc == 0.0:
                    q[u] = 0.0
                elif acc < tau:
                    drop += acc
                    q[u] = 0.0
                else:
                    q[u] = acc
                    n_active += 1
                    if check and hit < 0 and forbidden[u]:
                        hit = t
            p, q = q, p
        else:
            n_touched = 0
            for i in range(n_active):
                v = active[i]
                lo = indptr[v]
                hi = indptr[v + 1]
                share = p[v] / (hi - lo)
                p[v] = 0.0
                for j in range(lo, hi):
                    u = nbr[j]
                    if not mark[u]:
                        mark[u] = True
                        touched[n_touched] = u
                        n_touched += 1
                    q[u] += share
            n_active = 0
            for i in range(n_touched):
                u = touched[i]
                mark[u] = False
                val = q[u]
                q[u] = 0.0
                if val < tau:
                    drop += val
                else:
                    p[u] = val
                    active[n_active] = u
                    n_active += 1
                    if check and hit < 0 and forbidden[u]:
                        hit = t
        at_root[t] = p[root]
        dropped[t] = dropped[t - 1] + drop
        support[t] = n_active
        if (hit >= 0 and abort_on_hit) or (t % 2 == 0 and (dropped[t] > max_abs or dropped[t] > max_rel * at_root[t])):
            return at_root[: t + 1], dropped[: t + 1], support[: t + 1], hit
    return at_root, dropped, support, hit


def _evolve_numpy(g: MultiGraph, root, steps, tau, forbidden, check, abort_on_hit, max_abs, max_rel):
    T = g.transition_matrix()
    at_root = np.zeros(steps + 1)
    dropped = np.zeros(steps + 1)
    support = np.zeros(steps + 1, dtype=np.int64)
    idx = np.array([root])
    val = np.array([1.0])
    at_root[0] = 1.0
    support[0] = 1
    hit = -1
    TT = None
    for t in range(1, steps + 1):
        if TT is None and len(idx) * 8 > g.n:
            TT = T.T.tocsr()
        if TT is not None:
            full = np.zeros(g.n)
            full[idx] = val
            full = TT @ full
            idx = np.nonzero(full)[0]
            val = full[idx]
        else:
            sub = T[idx].tocoo()
            w = sub.data * val[sub.row]
            idx, inv = np.unique(sub.col, return_inverse=True)
            val = np.bincount(inv, weights=w, minlength=len(idx))
        keep = val >= tau
        dropped[t] = dropped[t - 1] + val[~keep].sum()
        idx, val = idx[keep], val[keep]
        if check and hit < 0 and forbidden[idx].any():
            hit = t
        pos = np.searchsorted(idx, root)
        at_root[t] = val[pos] if pos < len(idx) and idx[pos] == root else 0.0
        support[t] = len(idx)
        if (hit >= 0 and abort_on_hit) or (t % 2 == 0 and (dropped[t] > max_abs or dropped[t] > max_rel * at_root[t])):
            return at_root[: t + 1], dropped[: t + 1], support[: t + 1], hit
    return at_root, dropped, support, hit


@dataclass
class ReturnProbSeries:
    """Exact return probabilities with one-sided truncation error.

    ``p_all[j]`` is the computed mass at the root after ``j`` steps and
    ``bound_all[j]`` the total mass dropped up to step ``j``; the true value
    lies in ``[p_all[j], p_all[j] + bound_all[j]]``.
    """

    root: int
    deg_root: int
    n_max: int
    tau: float
    p_all: np.ndarray = field(repr=False)
    bound_all: np.ndarray = field(repr=False)
    support: np.ndarray = field(repr=False)
    contaminated_at: int | None = None

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.n_max + 1)

    @property
    def p2n(self) -> np.ndarray:
        return self.p_all[::2]

    @property
    def trunc_bound(self) -> np.ndarray:
        return self.bound_all[::2]

    def monotone_within_bound(self) -> bool:
        p, b = self.p2n, self.trunc_bound
        return bool((p[1:] <= p[:-1] + b[1:] + 1e-15).all())


def return_prob_exact(g: MultiGraph, root: int, n_max: int, tau: float = DEFAULT_TAU, forbidden=None,
                      max_bound: float | None = None, max_relative_bound: float | None = None,
                      on_contamination: str = "raise") -> ReturnProbSeries:
    """Evolve the walk distribution for ``2 n_max`` steps from ``root``.

    Entries below ``tau`` are dropped after every step and their mass is
    accumulated as the error bound.  When the bound exceeds ``max_bound``, or
    ``max_relative_bound * P(2n)`` at some even time, evolution stops and
    :class:`AccuracyError` is raised.  If mass above ``tau`` lands on a
    ``forbidden`` vertex, ``on_contamination="raise"`` stops with
    :class:`ContaminationError`; ``"flag"`` only records the step.  Both
    errors carry the series computed so far as ``partial``.
    """
    _check_root(g, root)
    if n_max < 0:
        raise DomainError("n_max must be non-negative")
    if not (0 <= tau < 1):
        raise DomainError("tau must lie in [0, 1)")
    if on_contamination not in ("raise", "flag"):
        raise DomainError("on_contamination must be 'raise' or 'flag'")
    steps = 2 * n_max
    check = forbidden is not None
    fb = forbidden if check else np.zeros(1, dtype=np.bool_)
    abort = check and on_contamination == "raise"
    max_abs = np.inf if max_bound is None else float(max_bound)
    max_rel = np.inf if max_relative_bound is None else float(max_relative_bound)
    evolve = _evolve if USE_NUMBA else _evolve_numpy
    graph_args = (g.indptr, g.nbr) if USE_NUMBA else (g,)
    at_root, dropped, support, hit = evolve(*graph_args, root, steps, tau, fb, check, abort, max_abs, max_rel)
    done = len(at_root) - 1
    # keep whole pairs of steps so even-time views stay aligned
    keep = done - (done % 2)
    series = ReturnProbSeries(root, int(g.degrees[root]), keep // 2, tau, at_root[: keep + 1],
                              dropped[: keep + 1], support[: keep + 1], None if hit < 0 else int(hit))
    if hit >= 0 and abort:
        raise ContaminationError(f"distribution reached a contaminated vertex at step {hit}", partial=series)
    if done < steps:
        b = float(dropped[done])
        p = float(at_root[done])
        if b > max_abs:
            raise AccuracyError(f"truncation bound {b:.3e} exceeds {max_abs:.3e} at step {done}",
                                achieved=b, partial=series)
        rel = b / p if p > 0 else np.inf
        raise AccuracyError(f"truncation bound is {rel:.3e} of P at step {done}, above {max_rel:.3e}",
                            achieved=rel, partial=series)
    return series


@dataclass
class GreenSeries:
    times: np.ndarray
    gr: np.ndarray
    deg_root: int

    @property
    def gr_over_deg(self) -> np.ndarray:
        return self.gr / self.deg_root

    def at(self, j: int) -> float:
        return float(self.gr[j])


def green_cumulative(series: ReturnProbSeries, deg_root: int | None = None) -> GreenSeries:
    """``Gr_j(root, root) = sum_{i <= j} P(X_i = root)`` for ``j = 0..2 n_max``."""
    deg = series.deg_root if deg_root is None else int(deg_root)
    return GreenSeries(np.arange(len(series.p_all)), np.cumsum(series.p_all), deg)


def return_bound_holds(series: ReturnProbSeries) -> bool:
    """``P(2n) <= Gr_{2n} / n`` for every ``n >= 1``; follows from monotonicity."""
    gr = green_cumulative(series).gr[::2]
    n = series.n[1:]
    return bool((series.p2n[1:] <= gr[1:] / n + series.trunc_bound[1:]).all())


def write_series_csv(series: ReturnProbSeries, path) -> None:
    gr = green_cumulative(series).gr[::2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "P2n", "trunc_bound", "Gr"])
        for i, (p, b, c) in enumerate(zip(series.p2n.tolist(), series.trunc_bound.tolist(), gr.tolist())):
            w.writerow([i, repr(p), repr(b), repr(c)])


# -- dense references for small graphs -----------------------------------------------------


def dense_transition(g: MultiGraph) -> np.ndarray:
    return g.transition_matrix().toarray()


def step_distributions(g: MultiGraph, root: int, steps: int) -> np.ndarray:
    """Row ``t`` is the law of ``X_t`` started at ``root``."""
    P = dense_transition(g)
    out = np.zeros((steps + 1, g.n))
    out[0, root] = 1.0
    for t in range(steps):
        out[t + 1] = out[t] @ P
    return out


def reversibility_defect(g: MultiGraph, n: int) -> float:
    """``max |deg(u) P^n(u, v) - deg(v) P^n(v, u)|``."""
    Pn = np.linalg.matrix_power(dense_transition(g), n)
    D = g.degrees.astype(float)[:, None] * Pn
    return float(np.abs(D - D.T).max())


@dataclass
class CauchySchwarzChain:
    """Successive lower bounds for ``P[X_2n = v]``; each entry is at most the previous one."""

    return_prob: float
    ball_paths: float
    squared_mass: float
    max_degree_form: float

    def holds(self, tol: float = 1e-12) -> bool:
        seq = [self.return_prob, self.ball_paths, self.squared_mass, self.max_degree_form]
        return all(a >= b - tol for a, b in zip(seq, seq[1:]))


def cauchy_schwarz_chain(g: MultiGraph, root: int, n: int, r: int) -> CauchySchwarzChain:
    """Evaluate the chain with exact distributions.

    ``P[X_2n = v] >= deg(v) sum_{u in B_r} P[X_n = u]^2 / deg(u)
    >= P[X_n in B_r]^2 / sum_{B_r} deg >= P[X_n in B_r]^2 / (max deg * #B_r)``.
    """
    dist = step_distributions(g, root, 2 * n)
    ball = bfs_ball(g, root, r)
    deg = g.degrees.astype(float)
    pn = dist[n, ball.members]
    mass = pn.sum()
    vol = deg[ball.members].sum()
    return CauchySchwarzChain(
        float(dist[2 * n, root]),
        float(deg[root] * (pn**2 / deg[ball.members]).sum()),
        float(mass**2 / vol),
        float(mass**2 / (deg[ball.members].max() * ball.size)),
    )
