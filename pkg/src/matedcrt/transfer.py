"""Comparison tools between two graphs linked by vertex maps and path systems.

Given ``phi: V(G1) -> V(G2)`` and, for every edge of ``G1``, a path in ``G2``
between the images of its endpoints, Cauchy-Schwarz along each path gives

    Energy(f o phi; G1) <= L_max * C_max * Energy(f; G2)

where ``L_max`` is the longest path and ``C_max`` the largest number of
traversals of a single edge of ``G2``.  This module checks that inequality,
audits how far vertex maps are from isometries, and provides the
subdivision / lazy-walk constructions used to remove parity effects.
"""

from __future__ import annotations

import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from ._rng import uniforms, walker_keys
from .errors import DomainError, FormatError
from .graph_core import MultiGraph, bfs_distances
from .resistance import dirichlet_energy


@dataclass
class PathSystem:
    """``paths[e]`` is a vertex sequence in the target graph for edge ``e`` of the source graph."""

    paths: list
    congestion: dict = field(repr=False)
    l_max: int
    c_max: int

    @classmethod
    def build(cls, g1: MultiGraph, g2: MultiGraph, phi, paths) -> "PathSystem":
        phi = np.asarray(phi, dtype=np.int64)
        if len(paths) != g1.num_edges:
            raise DomainError(f"{g1.num_edges} source edges but {len(paths)} paths")
        adj = _pair_set(g2)
        cong: Counter = Counter()
        clean = []
        for e, ((a, b), p) in enumerate(zip(g1.edges.tolist(), paths)):
            if p is None:
                raise DomainError(f"edge {e} = ({a}, {b}) has no path")
            p = [int(x) for x in p]
            if not p:
                raise DomainError(f"edge {e} has an empty path")
            ends = {(p[0], p[-1]), (p[-1], p[0])}
            if (int(phi[a]), int(phi[b])) not in ends:
                raise DomainError(f"path for edge {e} does not join phi({a}) and phi({b})")
            for x, y in zip(p[:-1], p[1:]):
                key = (min(x, y), max(x, y))
                if key not in adj:
                    raise DomainError(f"path for edge {e} uses non-edge {key}")
                cong[key] += 1
            clean.append(p)
        l_max = max((len(p) - 1 for p in clean), default=0)
        c_max = max(cong.values(), default=0)
        return cls(clean, dict(cong), l_max, c_max)

    def vertex_hits(self) -> Counter:
        """Number of paths visiting each target vertex."""
        hits: Counter = Counter()
        for p in self.paths:
            hits.update(set(p))
        return hits


def _pair_set(g: MultiGraph) -> set:
    e = np.sort(g.edges, axis=1)
    return set(map(tuple, e.tolist()))


@dataclass
class VertexMapPair:
    phi: np.ndarray
    psi: np.ndarray | None = None

    def check(self, g1: MultiGraph, g2: MultiGraph) -> None:
        phi = np.asarray(self.phi)
        if phi.shape != (g1.n,) or (g1.n and (phi.min() < 0 or phi.max() >= g2.n)):
            raise DomainError("phi must map every vertex of G1 into G2")
        if self.psi is not None:
            psi = np.asarray(self.psi)
            if psi.shape != (g2.n,) or (g2.n and (psi.min() < 0 or psi.max() >= g1.n)):
                raise DomainError("psi must map every vertex of G2 into G1")


@dataclass
class TransferCheck:
    lhs: float
    energy_target: float
    l_max: int
    c_max: int

    @property
    def factor(self) -> int:
        return self.l_max * self.c_max

    @property
    def rhs(self) -> float:
        return self.factor * self.energy_target

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-12


def energy_transfer_bound(g1: MultiGraph, g2: MultiGraph, phi, paths, f) -> TransferCheck:
    """Evaluate both sides of the energy transfer inequality.

    ``paths`` is a :class:`PathSystem` or a list with one vertex sequence per
    edge of ``g1``; ``f`` is a function on the vertices of ``g2``.
    """
    if not isinstance(paths, PathSystem):
        paths = PathSystem.build(g1, g2, phi, paths)
    phi = np.asarray(phi, dtype=np.int64)
    f = np.asarray(f, dtype=float)
    if f.shape != (g2.n,):
        raise DomainError("f must be defined on every vertex of the target graph")
    return TransferCheck(dirichlet_energy(g1, f[phi]), dirichlet_energy(g2, f), paths.l_max, paths.c_max)


# -- rough isometries -------------------------------------------------------------------


@dataclass
class DistortionStats:
    pairs: int
    max_ratio: float
    min_ratio: float
    percentiles: dict
    factor: float

    def to_dict(self) -> dict:
        return {"pairs": self.pairs, "max_ratio": self.max_ratio, "min_ratio": self.min_ratio,
                "percentiles": self.percentiles, "factor": self.factor}


def _distortion(ga: MultiGraph, gb: MultiGraph, f: np.ndarray, pairs) -> tuple[list, float]:
    by_source = defaultdict(list)
    for a, b in pairs:
        by_source[int(a)].append(int(b))
    ratios = []
    factor = 1.0
    for a, targets in by_source.items():
        da, _ = bfs_distances(ga, a)
        db, _ = bfs_distances(gb, int(f[a]))
        for b in targets:
            x = da[b]
            y = db[int(f[b])]
            if x < 0 or y < 0:
                if (x < 0) != (y < 0):
                    factor = np.inf
                continue
            if x == 0:
                if y > 0:
                    factor = np.inf
                continue
            ratios.append(y / x)
            # smallest K with x / K - 2 <= y <= K x
            factor = max(factor, y / x, x / (y + 2))
    return ratios, factor


def rough_isometry_audit(g1: MultiGraph, g2: MultiGraph, maps: VertexMapPair, pairs=None,
                         pairs_target=None, samples: int = 200, seed: int = 0) -> DistortionStats:
    """Distance distortion of ``phi`` (and ``psi`` if given) on sampled vertex pairs.

    ``factor`` is the smallest ``K >= 1`` with ``d1 / K - 2 <= d2 <= K d1``
    on every sampled pair, for both maps.
    """
    maps.check(g1, g2)
    rng = np.random.default_rng(seed)
    if pairs is None:
        pairs = rng.integers(0, g1.n, (samples, 2)).tolist()
    ratios, factor = _distortion(g1, g2, np.asarray(maps.phi), pairs)
    if maps.psi is not None:
        if pairs_target is None:
            pairs_target = rng.integers(0, g2.n, (samples, 2)).tolist()
        r2, f2 = _distortion(g2, g1, np.asarray(maps.psi), pairs_target)
        ratios += r2
        factor = max(factor, f2)
    r = np.asarray(ratios) if ratios else np.array([1.0])
    pct = {str(q): float(np.percentile(r, q)) for q in (50, 90, 99)}
    return DistortionStats(len(ratios), float(r.max()), float(r.min()), pct, float(factor))


# -- subdivision and lazy walks ----------------------------------------------------------


def subdivide(m: MultiGraph) -> tuple[MultiGraph, np.ndarray]:
    """Put a new vertex in the middle of every edge.

    Edge ``e = (u, v)`` becomes ``u - (n + e) - v``.  Returns the new graph and
    ``origin`` with ``origin[i] = i`` for old vertices and ``-1`` for midpoints.
    """
    n, k = m.n, m.num_edges
    mid = n + np.arange(k)
    e = m.edges.astype(np.int64)
    edges = np.empty((2 * k, 2), dtype=np.int64)
    edges[0::2, 0] = e[:, 0]
    edges[0::2, 1] = mid
    edges[1::2, 0] = mid
    edges[1::2, 1] = e[:, 1]
    origin = np.concatenate([np.arange(n), np.full(k, -1)])
    return MultiGraph(n + k, edges), origin


def reweight_root(m: MultiGraph) -> list[Fraction]:
    """Root law proportional to ``1 + deg / 2``, in exact arithmetic."""
    w = [Fraction(2 + int(d), 2) for d in m.degrees]
    total = sum(w, Fraction(0))
    if total == 0:
        raise DomainError("empty graph")
    return [x / total for x in w]


@dataclass
class RootCoupling:
    joint: dict
    marginal: list
    stay: list

    def matches(self, target) -> bool:
        return all(a == b for a, b in zip(self.marginal, target))


def midpoint_root_coupling(m: MultiGraph) -> RootCoupling:
    """Uniform vertex of the subdivision, sent to an original vertex.

    A midpoint goes to one of its edge's two endpoints with probability 1/2
    each (a self-loop's midpoint goes to its vertex).  ``stay[v]`` is the
    conditional probability that the uniform vertex was ``v`` itself.
    """
    n, k = m.n, m.num_edges
    total = n + k
    u = Fraction(1, total)
    joint: dict = defaultdict(Fraction)
    for v in range(n):
        joint[(v, v)] += u
    for e, (a, b) in enumerate(m.edges.tolist()):
        joint[(n + e, a)] += u / 2
        joint[(n + e, b)] += u / 2
    marginal = [Fraction(0)] * n
    for (_, v), p in joint.items():
        marginal[v] += p
    stay = [joint[(v, v)] / marginal[v] for v in range(n)]
    return RootCoupling(dict(joint), marginal, stay)


def _dense_transition(g: MultiGraph) -> np.ndarray:
    A = g.adjacency().toarray()
    deg = g.degrees.astype(float)
    P = np.eye(g.n)
    nz = deg > 0
    P[nz] = A[nz] / deg[nz, None]
    return P


def lazy_transition(m: MultiGraph) -> np.ndarray:
    return 0.5 * (np.eye(m.n) + _dense_transition(m))


def lazy_equivalence_check(m: MultiGraph, root: int, m_steps: int) -> float:
    """Total variation between the subdivided walk at time ``2 m_steps`` and the lazy walk at ``m_steps``.

    The subdivided walk's law is restricted to original vertices, where all
    of its mass sits at even times.
    """
    if not (0 <= root < m.n):
        raise DomainError("root out of range")
    if m_steps < 0:
        raise DomainError("m_steps must be non-negative")
    s, _ = subdivide(m)
    P2 = np.linalg.matrix_power(_dense_transition(s), 2)[: m.n, : m.n]
    x = np.zeros(m.n)
    x[root] = 1.0
    y = x.copy()
    L = lazy_transition(m)
    for _ in range(m_steps):
        x = x @ P2
        y = y @ L
    return 0.5 * float(np.abs(x - y).sum())


def _fraction_transition(g: MultiGraph) -> list[list[Fraction]]:
    n = g.n
    P = [[Fraction(0)] * n for _ in range(n)]
    for v in range(n):
        row = g.nbr[g.indptr[v] : g.indptr[v + 1]].tolist()
        if not row:
            P[v][v] = Fraction(1)
            continue
        for u in row:
            P[v][u] += Fraction(1, len(row))
    return P


def _step(x, P):
    n = len(x)
    out = [Fraction(0)] * n
    for v, xv in enumerate(x):
        if xv:
            for u, p in enumerate(P[v]):
                if p:
                    out[u] += xv * p
    return out


def lazy_equivalence_exact(m: MultiGraph, root: int, m_steps: int) -> bool:
    """Rational-arithmetic version of :func:`lazy_equivalence_check`; True iff the laws coincide."""
    s, _ = subdivide(m)
    Ps = _fraction_transition(s)
    Pm = _fraction_transition(m)
    half = Fraction(1, 2)
    x = [Fraction(0)] * s.n
    x[root] = Fraction(1)
    y = [Fraction(0)] * m.n
    y[root] = Fraction(1)
    for _ in range(m_steps):
        x = _step(_step(x, Ps), Ps)
        moved = _step(y, Pm)
        y = [half * a + half * b for a, b in zip(y, moved)]
    return x[: m.n] == y and all(v == 0 for v in x[m.n :])


def exact_return_probabilities(g: MultiGraph, root: int, steps: int) -> list[Fraction]:
    """``P(X_j = root)`` for ``j = 0..steps`` in rational arithmetic."""
    P = _fraction_transition(g)
    x = [Fraction(0)] * g.n
    x[root] = Fraction(1)
    out = [x[root]]
    for _ in range(steps):
        x = _step(x, P)
        out.append(x[root])
    return out


@dataclass
class HoeffdingCheck:
    trials: int
    m_steps: int
    eps: float
    failures: int
    bound: float
    threshold: int

    @property
    def passed(self) -> bool:
        return self.failures <= self.threshold


def hoeffding_lazy_check(m: MultiGraph, root: int, m_steps: int, eps: float, trials: int,
                         seed: int = 0, alpha: float = 1e-6) -> HoeffdingCheck:
    """Simulate lazy walks and count moving steps.

    A trial fails when the number of moving steps leaves
    ``[(1/2 - eps) m, (1/2 + eps) m]``; Hoeffding bounds the failure rate by
    ``2 exp(-2 eps^2 m)``.  The check passes when the observed failures do
    not exceed the upper ``alpha`` quantile of the binomial with that rate.
    """
    from scipy.stats import binom

    if not (0 < eps < 0.5) or m_steps <= 0 or trials <= 0:
        raise DomainError("need 0 < eps < 1/2 and positive m_steps, trials")
    keys = walker_keys(seed, 0, trials)
    pos = np.full(trials, root, dtype=np.int64)
    moves = np.zeros(trials, dtype=np.int64)
    for t in range(m_steps):
        coin = uniforms(keys, np.full(trials, 2 * t)) < 0.5
        moves += coin
        idx = np.nonzero(coin)[0]
        v = pos[idx]
        lo = m.indptr[v]
        d = m.indptr[v + 1] - lo
        ok = d > 0
        j = (uniforms(keys[idx], np.full(len(idx), 2 * t + 1)) * np.maximum(d, 1)).astype(np.int64)
        pos[idx[ok]] = m.nbr[(lo + j)[ok]]
    lo_b, hi_b = (0.5 - eps) * m_steps, (0.5 + eps) * m_steps
    failures = int(((moves < lo_b) | (moves > hi_b)).sum())
    bound = min(1.0, 2.0 * np.exp(-2.0 * eps * eps * m_steps))
    threshold = int(binom.ppf(1 - alpha, trials, bound))
    return HoeffdingCheck(trials, m_steps, eps, failures, bound, threshold)


# -- text format ----------------------------------------------------------------------------

_MAP_RE = re.compile(r"^(?:(phi|psi)\s+)?(\d+)\s*->\s*(\d+)$")
_PATH_RE = re.compile(r"^edge\s+(\d+)\s+(\d+)\s*:\s*((?:\d+\s*)+)$")


@dataclass
class TransferSpec:
    phi: dict
    psi: dict
    paths: list  # (u, v, [x0, ..., xk]) in file order


def parse_transfer_spec(text: str) -> TransferSpec:
    """Parse vertex maps and paths.

    ``v -> x`` (or ``phi v -> x``) sets ``phi(v) = x``; ``psi x -> v`` sets
    ``psi(x) = v``; ``edge u v : x0 x1 ... xk`` gives the path for edge
    ``{u, v}`` of the source graph.  ``#`` starts a comment.
    """
    phi: dict = {}
    psi: dict = {}
    paths = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _MAP_RE.match(line)
        if m:
            which, a, b = m.group(1) or "phi", int(m.group(2)), int(m.group(3))
            target = phi if which == "phi" else psi
            if a in target and target[a] != b:
                raise FormatError(f"line {lineno}: {which}({a}) assigned twice")
            target[a] = b
            continue
        m = _PATH_RE.match(line)
        if m:
            paths.append((int(m.group(1)), int(m.group(2)), [int(x) for x in m.group(3).split()]))
            continue
        raise FormatError(f"line {lineno}: cannot parse {raw!r}")
    return TransferSpec(phi, psi, paths)


def load_transfer_spec(path) -> TransferSpec:
    return parse_transfer_spec(Path(path).read_text())


def assemble(spec: TransferSpec, g1: MultiGraph, g2: MultiGraph) -> tuple[VertexMapPair, PathSystem]:
    """Match the parsed paths to edge instances of ``g1``.

    The k-th ``edge u v`` line for a pair goes to its k-th parallel instance;
    a single line for a pair covers all of its instances.
    """
    missing = [v for v in range(g1.n) if v not in spec.phi]
    if missing:
        raise DomainError(f"phi undefined on vertices {missing[:5]}")
    phi = np.array([spec.phi[v] for v in range(g1.n)], dtype=np.int64)
    psi = None
    if spec.psi:
        gaps = [x for x in range(g2.n) if x not in spec.psi]
        if gaps:
            raise DomainError(f"psi undefined on vertices {gaps[:5]}")
        psi = np.array([spec.psi[x] for x in range(g2.n)], dtype=np.int64)
    # path orientation is free: PathSystem.build accepts either direction
    by_pair = defaultdict(list)
    for u, v, p in spec.paths:
        by_pair[(min(u, v), max(u, v))].append(p)
    seen: Counter = Counter()
    paths = []
    for a, b in g1.edges.tolist():
        key = (min(a, b), max(a, b))
        lst = by_pair.get(key)
        if not lst:
            raise DomainError(f"no path for edge {key}")
        i = seen[key]
        seen[key] += 1
        if len(lst) > 1 and i >= len(lst):
            raise DomainError(f"too few paths for parallel edges {key}")
        paths.append(lst[i] if len(lst) > 1 else lst[0])
    maps = VertexMapPair(phi, psi)
    maps.check(g1, g2)
    return maps, PathSystem.build(g1, g2, phi, paths)


def random_path_system(rng: np.random.Generator, g1: MultiGraph, g2: MultiGraph, phi,
                       max_detour: int = 3) -> list:
    """Random walks-with-shortcut paths joining ``phi`` images, for property sweeps.

    Each path starts with up to ``max_detour`` random steps and then follows a
    BFS geodesic; the graphs must be connected.
    """
    phi = np.asarray(phi, dtype=np.int64)
    out = []
    for a, b in g1.edges.tolist():
        x, y = int(phi[a]), int(phi[b])
        path = [x]
        for _ in range(int(rng.integers(0, max_detour + 1))):
            row = g2.nbr[g2.indptr[path[-1]] : g2.indptr[path[-1] + 1]]
            if len(row) == 0:
                break
            path.append(int(row[rng.integers(0, len(row))]))
        dist, _ = bfs_distances(g2, y)
        cur = path[-1]
        if dist[cur] < 0:
            raise DomainError("target graph must be connected")
        while cur != y:
            row = g2.nbr[g2.indptr[cur] : g2.indptr[cur + 1]]
            closer = row[dist[row] == dist[cur] - 1]
            cur = int(closer[rng.integers(0, len(closer))])
            path.append(cur)
        out.append(path)
    return out
