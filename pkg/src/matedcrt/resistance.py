"""Electrical-network quantities on multigraphs with unit conductances.

Potentials come from a Jacobi-preconditioned conjugate-gradient solve of the
Dirichlet problem on the free vertices; everything else (energies, currents,
resistances, exit times) is read off those potentials.  A dense direct solve
is provided as an independent reference for small graphs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._accel import njit
from .errors import ConvergenceError, DomainError, TopologyError
from .graph_core import MultiGraph, bfs_ball, bfs_distances

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class BoundaryCondition:
    """Potential 1 at ``source``, 0 on ``sinks``."""

    source: int
    sinks: tuple

    def __init__(self, source, sinks):
        sinks = tuple(sorted({int(v) for v in np.atleast_1d(np.asarray(sinks, dtype=np.int64))}))
        object.__setattr__(self, "source", int(source))
        object.__setattr__(self, "sinks", sinks)
        if not sinks:
            raise DomainError("sink set must be nonempty")
        if self.source in sinks:
            raise DomainError("source must not belong to the sink set")

    def validate(self, g: MultiGraph) -> np.ndarray:
        """Check vertex ranges and connectivity; returns distances from the source."""
        if not (0 <= self.source < g.n) or self.sinks[0] < 0 or self.sinks[-1] >= g.n:
            raise DomainError("boundary vertex out of range")
        dist, _ = bfs_distances(g, self.source)
        if not (dist[list(self.sinks)] >= 0).any():
            raise TopologyError(f"no sink is reachable from source {self.source}")
        return dist


@dataclass
class PotentialField:
    values: np.ndarray
    residual: float
    iterations: int
    bc: BoundaryCondition


@dataclass
class UnitFlow:
    """Flow value per edge instance, oriented from ``edges[e, 0]`` to ``edges[e, 1]``."""

    values: np.ndarray
    source: int
    sinks: tuple


@dataclass
class FlowDiagnostics:
    max_interior_divergence: float
    source_deviation: float
    energy: float

    def ok(self, tol: float = 1e-10) -> bool:
        return self.max_interior_divergence < tol and self.source_deviation < tol


def pcg(A: sp.csr_matrix, b: np.ndarray, tol: float = DEFAULT_TOL, maxiter: int | None = None,
        x0: np.ndarray | None = None) -> tuple[np.ndarray, float, int]:
    """Conjugate gradients with diagonal preconditioning for SPD ``A``.

    Stops when ``||b - A x|| <= tol * ||b||``.
    """
    n = len(b)
    if maxiter is None:
        maxiter = max(50 * n, 100)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0.0, 0
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > tol and it < maxiter:
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        it += 1
        if it % 50 == 0:
            # refresh the recursively updated residual to avoid drift
            r = b - A @ x
        res = np.linalg.norm(r) / bnorm
        z = dinv * r
        rz_new = r @ z
        p *= rz_new / rz
        p += z
        rz = rz_new
    if res > tol:
        raise ConvergenceError(f"PCG stopped at relative residual {res:.3e} after {it} iterations",
                               residual=res, iterations=it)
    return x, float(res), it


def _free_system(g: MultiGraph, fixed: np.ndarray, reach: np.ndarray):
    """Laplacian block on reachable free vertices and its coupling to fixed ones."""
    L = g.laplacian()
    free = np.nonzero(~fixed & reach)[0]
    return L, free


def harmonic_solve(g: MultiGraph, bc: BoundaryCondition, tol: float = DEFAULT_TOL,
                   maxiter: int | None = None) -> PotentialField:
    """Potential equal to 1 at the source, 0 on the sinks, harmonic elsewhere.

    Vertices in components without boundary vertices get value 0.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    dist = bc.validate(g)
    fixed = np.zeros(g.n, dtype=bool)
    fixed[bc.source] = True
    fixed[list(bc.sinks)] = True
    values = np.zeros(g.n)
    values[bc.source] = 1.0
    L, free = _free_system(g, fixed, dist >= 0)
    if len(free) == 0:
        return PotentialField(values, 0.0, 0, bc)
    L_ff = L[free][:, free].tocsr()
    b = -(L[free][:, [bc.source]].toarray().ravel())
    x, res, it = pcg(L_ff, b, tol, maxiter)
    # the exact solution lies in [0, 1]; projecting the iterate there only reduces the error
    values[free] = np.clip(x, 0.0, 1.0)
    return PotentialField(values, res, it, bc)


def dirichlet_energy(g: MultiGraph, f) -> float:
    """Sum over edge instances of squared differences; self-loops contribute 0."""
    f = np.asarray(f, dtype=float)
    if f.shape != (g.n,):
        raise DomainError("function must be defined on every vertex")
    d = f[g.edges[:, 0]] - f[g.edges[:, 1]]
    return float(d @ d)


def effective_resistance(g: MultiGraph, x: int, V, tol: float = DEFAULT_TOL) -> float:
    """Resistance between ``x`` and the set ``V`` as the reciprocal Dirichlet energy."""
    pf = harmonic_solve(g, BoundaryCondition(x, V), tol)
    return 1.0 / dirichlet_energy(g, pf.values)


def resistance_dense(g: MultiGraph, x: int, V) -> float:
    """Reference value from a dense direct solve; for small graphs only."""
    bc = BoundaryCondition(x, V)
    dist = bc.validate(g)
    L = g.laplacian().toarray()
    fixed = np.zeros(g.n, dtype=bool)
    fixed[x] = True
    fixed[list(bc.sinks)] = True
    free = np.nonzero(~fixed & (dist >= 0))[0]
    f = np.zeros(g.n)
    f[x] = 1.0
    if len(free):
        f[free] = np.linalg.solve(L[np.ix_(free, free)], -L[free, x])
    # current leaving x through its edges
    current = float(L[x] @ f)
    return 1.0 / current


def divergence(g: MultiGraph, values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    out = np.bincount(g.edges[:, 0], weights=values, minlength=g.n)
    out -= np.bincount(g.edges[:, 1], weights=values, minlength=g.n)
    return out


def flow_energy(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(values @ values)


def current_flow(g: MultiGraph, pf: PotentialField, bc: BoundaryCondition | None = None) -> UnitFlow:
    """Unit current flow induced by a potential; each parallel edge carries its own value."""
    bc = pf.bc if bc is None else bc
    f = pf.values
    theta = f[g.edges[:, 0]] - f[g.edges[:, 1]]
    out = divergence(g, theta)[bc.source]
    if not np.isfinite(out) or abs(out) < 1e-300:
        raise DomainError("potential carries no net current from the source")
    return UnitFlow(theta / out, bc.source, bc.sinks)


def validate_unit_flow(g: MultiGraph, theta: UnitFlow) -> FlowDiagnostics:
    div = divergence(g, theta.values)
    mask = np.ones(g.n, dtype=bool)
    mask[theta.source] = False
    mask[list(theta.sinks)] = False
    interior = float(np.abs(div[mask]).max()) if mask.any() else 0.0
    return FlowDiagnostics(interior, abs(div[theta.source] - 1.0), flow_energy(theta.values))


# -- flows built from random paths ----------------------------------------------


@dataclass
class PathPolicy:
    """How :func:`path_flow` picks a path from the source to the sink set.

    ``kind`` is one of

    * ``"geodesic"``: a uniform target in the sink set (or ``targets``), then the
      BFS geodesic to it with ties broken towards the smallest vertex and edge
      ids.  Above ``max_exact`` targets, ``samples`` targets are drawn with
      ``seed`` instead of enumerating all of them.
    * ``"all-geodesics"``: a uniform target, then a uniform shortest path to it.
    * ``"explicit"``: the vertex sequences in ``paths`` with probabilities
      ``weights`` (uniform if omitted).
    """

    kind: str = "geodesic"
    targets: tuple | None = None
    max_exact: int = 4096
    samples: int = 4096
    seed: int = 0
    paths: tuple | None = None
    weights: tuple | None = None


def _geodesic_tree(g: MultiGraph, x: int):
    """BFS parents with lexicographic tie-breaking: smallest parent id, then smallest edge id."""
    dist, order = bfs_distances(g, x)
    parent = np.full(g.n, -1, dtype=np.int64)
    pedge = np.full(g.n, -1, dtype=np.int64)
    _lex_parents(g.indptr, g.nbr, g.eid, dist, order, parent, pedge)
    return dist, order, parent, pedge


@njit
def _lex_parents(indptr, nbr, eid, dist, order, parent, pedge):
    for i in range(1, len(order)):
        v = order[i]
        best = -1
        best_e = -1
        for j in range(indptr[v], indptr[v + 1]):
            u = nbr[j]
            if dist[u] == dist[v] - 1:
                if best < 0 or u < best or (u == best and eid[j] < best_e):
                    best = u
                    best_e = eid[j]
        parent[v] = best
        pedge[v] = best_e


def _tree_flow(g, order, parent, pedge, weight):
    # weight[v] = probability that v is the chosen target; push it up the tree
    acc = weight.astype(float).copy()
    theta = np.zeros(g.num_edges)
    for v in order[::-1][:-1]:
        p = parent[v]
        e = pedge[v]
        sign = 1.0 if g.edges[e, 0] == p else -1.0
        theta[e] += sign * acc[v]
        acc[p] += acc[v]
    return theta


def _explicit_flow(g: MultiGraph, paths, weights):
    theta = np.zeros(g.num_edges)
    for path, w in zip(paths, weights):
        for a, b in zip(path[:-1], path[1:]):
            lo, hi = g.indptr[a], g.indptr[a + 1]
            hit = np.nonzero(g.nbr[lo:hi] == b)[0]
            if len(hit) == 0:
                raise DomainError(f"path step {a}->{b} is not an edge")
            e = int(g.eid[lo + hit[0]])
            sign = 1.0 if (g.edges[e, 0] == a and g.edges[e, 1] == b) else -1.0
            theta[e] += sign * w
    return theta


def _all_geodesics_flow(g: MultiGraph, x: int, targets: np.ndarray, weight: np.ndarray):
    dist_x, _ = bfs_distances(g, x)
    count_x = _path_counts(g, dist_x)
    theta = np.zeros(g.num_edges)
    u, v = g.edges[:, 0], g.edges[:, 1]
    for t, w in zip(targets.tolist(), weight.tolist()):
        dist_t, _ = bfs_distances(g, t)
        count_t = _path_counts(g, dist_t)
        total = count_x[t]
        d = dist_x[t]
        fwd = (dist_x[u] + 1 == dist_x[v]) & (dist_x[u] + 1 + dist_t[v] == d)
        bwd = (dist_x[v] + 1 == dist_x[u]) & (dist_x[v] + 1 + dist_t[u] == d)
        theta[fwd] += w * count_x[u[fwd]] * count_t[v[fwd]] / total
        theta[bwd] -= w * count_x[v[bwd]] * count_t[u[bwd]] / total
    return theta


def _path_counts(g, dist):
    # number of shortest paths from the BFS root, counting parallel edges separately
    order = np.argsort(dist, kind="stable")
    order = order[dist[order] >= 0]
    count = np.zeros(g.n)
    count[order[0]] = 1.0
    for v in order[1:].tolist():
        row = g.nbr[g.indptr[v] : g.indptr[v + 1]]
        count[v] = count[row[dist[row] == dist[v] - 1]].sum()
    return count


def path_flow(g: MultiGraph, x: int, V, policy: PathPolicy | None = None) -> UnitFlow:
    """Unit flow ``theta(e) = P[path uses e forwards] - P[path uses e backwards]``.

    It is an average of unit flows along single paths, hence a unit flow from
    ``x`` to ``V``, and its energy bounds the effective resistance from above.
    """
    policy = policy or PathPolicy()
    bc = BoundaryCondition(x, V)
    if policy.kind == "explicit":
        if not policy.paths:
            raise DomainError("explicit policy needs at least one path")
        w = np.ones(len(policy.paths)) if policy.weights is None else np.asarray(policy.weights, float)
        w = w / w.sum()
        sinks = set(bc.sinks)
        for p in policy.paths:
            if p[0] != x or p[-1] not in sinks:
                raise DomainError("explicit paths must run from the source to the sink set")
        return UnitFlow(_explicit_flow(g, policy.paths, w), x, bc.sinks)
    bc.validate(g)
    targets = np.asarray(policy.targets if policy.targets is not None else bc.sinks, dtype=np.int64)
    dist_x, order, parent, pedge = _geodesic_tree(g, x)
    targets = targets[dist_x[targets] >= 0]
    if len(targets) == 0:
        raise DomainError("empty path family: no target reachable")
    if len(targets) > policy.max_exact:
        rng = np.random.default_rng(policy.seed)
        chosen = rng.choice(targets, size=policy.samples, replace=True)
        targets, weight = np.unique(chosen, return_counts=True)
        weight = weight / policy.samples
    else:
        weight = np.full(len(targets), 1.0 / len(targets))
    if policy.kind == "geodesic":
        wv = np.zeros(g.n)
        np.add.at(wv, targets, weight)
        theta = _tree_flow(g, order, parent, pedge, wv)
    elif policy.kind == "all-geodesics":
        theta = _all_geodesics_flow(g, x, targets, weight)
    else:
        raise DomainError(f"unknown path policy {policy.kind!r}")
    return UnitFlow(theta, x, bc.sinks)


# -- exit times -----------------------------------------------------------------------


def expected_exit_time(g: MultiGraph, root: int, boundary, tol: float = DEFAULT_TOL,
                       method: str = "direct") -> float:
    """Expected number of steps for the walk from ``root`` to hit ``boundary``.

    Solves ``L u = deg`` on the free vertices.  ``method="direct"`` factorises
    the system (sparse LU) and applies iterative refinement until the
    normwise backward error ``|r| / (|L| |u| + |b|)`` meets ``tol`` (a
    relative residual of 1e-10 is below the float64 floor once ``u`` is
    large); ``"pcg"`` uses conjugate gradients only.  These
    systems are much worse conditioned than the resistance ones, since ``u``
    grows like the ball volume times its resistance.
    """
    if method not in ("direct", "pcg"):
        raise DomainError(f"unknown method {method!r}")
    boundary = np.unique(np.atleast_1d(np.asarray(boundary, dtype=np.int64)))
    if len(boundary) == 0:
        raise DomainError("boundary must be nonempty")
    if root in set(boundary.tolist()):
        return 0.0
    dist, _ = bfs_distances(g, root)
    if not (dist[boundary] >= 0).any():
        raise TopologyError("boundary unreachable from root")
    fixed = np.zeros(g.n, dtype=bool)
    fixed[boundary] = True
    free = np.nonzero(~fixed & (dist >= 0))[0]
    L = g.laplacian()
    L_ff = L[free][:, free].tocsr()
    b = g.degrees[free].astype(float)
    if method == "direct":
        lu = spla.splu(L_ff.tocsc())
        u = lu.solve(b)
        anorm = float(spla.norm(L_ff, np.inf))
        bnorm = float(np.linalg.norm(b, np.inf))
        for _ in range(10):
            r = b - L_ff @ u
            err = float(np.linalg.norm(r, np.inf)) / (anorm * float(np.linalg.norm(u, np.inf)) + bnorm)
            if err <= tol:
                break
            u = u + lu.solve(r)
        else:
            raise ConvergenceError(f"exit-time refinement stalled at backward error {err:.2e}")
    else:
        u, _, _ = pcg(L_ff, b, tol)
    pos = np.searchsorted(free, root)
    return float(u[pos])


@dataclass
class ExitTimeCheck:
    radius: int
    expected_exit: float
    resistance: float
    degree_sum: float

    @property
    def bound(self) -> float:
        return self.resistance * self.degree_sum

    @property
    def holds(self) -> bool:
        return self.expected_exit <= self.bound * (1 + 1e-9)


def exit_time_inequality(g: MultiGraph, root: int, r: int, forbidden=None,
                         tol: float = DEFAULT_TOL) -> ExitTimeCheck:
    """Both sides of ``E[sigma_r] <= R(root <-> exit set) * sum_{B_r} deg``.

    ``sigma_r`` is the first time the walk leaves ``B_r``, i.e. hits the
    vertices at distance ``r + 1``; the resistance is taken to that set.
    """
    ball = bfs_ball(g, root, r, forbidden)
    if len(ball.exterior) == 0:
        raise DomainError("ball covers its whole component; exit time is infinite")
    sub_members = np.concatenate([ball.members, ball.exterior])
    from .graph_core import induced_subgraph

    h, old = induced_subgraph(g, sub_members)
    new_root = int(np.searchsorted(old, root))
    ext = np.searchsorted(old, ball.exterior)
    t = expected_exit_time(h, new_root, ext, tol)
    res = effective_resistance(h, new_root, ext, tol)
    return ExitTimeCheck(r, t, res, float(g.degrees[ball.members].sum()))


def ball_resistance(g: MultiGraph, root: int, r: int, tol: float = DEFAULT_TOL,
                    to: str = "boundary") -> tuple[float, float]:
    """Resistance from ``root`` to the inner boundary of ``B_r`` (or its exit set).

    Returns ``(resistance, residual)``.  Only the ball (plus the exit set) is
    solved on, which gives the same value as the whole graph.
    """
    ball = bfs_ball(g, root, r)
    target = ball.boundary if to == "boundary" else ball.exterior
    if len(target) == 0:
        raise DomainError(f"B_{r} has an empty {to}")
    keep = ball.members if to == "boundary" else np.concatenate([ball.members, ball.exterior])
    from .graph_core import induced_subgraph

    h, old = induced_subgraph(g, keep)
    pf = harmonic_solve(h, BoundaryCondition(int(np.searchsorted(old, root)), np.searchsorted(old, target)), tol)
    return 1.0 / dirichlet_energy(h, pf.values), pf.residual


# -- export -------------------------------------------------------------------------------


def write_resistance_table(rows, path) -> None:
    """Rows of ``(root, radius, value, residual)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["root", "radius", "value", "residual"])
        for row in rows:
            w.writerow([row[0], row[1], repr(float(row[2])), repr(float(row[3]))])


def write_potentials(pf: PotentialField, path, root=None, radius=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["root", "radius", "vertex", "value", "residual"])
        for v, val in enumerate(pf.values.tolist()):
            w.writerow([pf.bc.source if root is None else root, "" if radius is None else radius,
                        v, repr(val), repr(pf.residual)])


def write_flow(g: MultiGraph, theta: UnitFlow, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge", "tail", "head", "value"])
        for e, ((a, b), val) in enumerate(zip(g.edges.tolist(), theta.values.tolist())):
            w.writerow([e, a, b, repr(val)])
