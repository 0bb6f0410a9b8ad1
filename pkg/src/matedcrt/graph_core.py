"""Immutable multigraphs stored as edge-end CSR arrays.

Every unoriented edge instance gets an id.  The adjacency list of ``v``
holds one entry per edge-end at ``v``: an edge of multiplicity ``m`` appears
``m`` times and a self-loop appears twice.  With that layout the degree is
the row length, a uniform pick from the row is a simple-random-walk step,
and the Laplacian ``D - A`` ignores self-loops automatically.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ._accel import USE_NUMBA, njit
from .errors import DomainError, FormatError


class MultiGraph:
    __slots__ = ("n", "edges", "indptr", "nbr", "eid", "_degrees")

    def __init__(self, n: int, edges):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges) and (edges.min() < 0 or edges.max() >= n):
            raise DomainError("edge endpoint out of range")
        self.n = int(n)
        vtype = np.int32 if n < 2**31 - 1 else np.int64
        self.edges = np.ascontiguousarray(edges, dtype=vtype)
        m = len(edges)
        counts = np.bincount(self.edges[:, 0], minlength=n) + np.bincount(self.edges[:, 1], minlength=n)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.indptr[1:])
        etype = np.int32 if m < 2**31 - 1 else np.int64
        if USE_NUMBA:
            self.nbr = np.empty(2 * m, dtype=vtype)
            self.eid = np.empty(2 * m, dtype=etype)
            _fill_csr(self.edges, self.indptr, self.nbr, self.eid)
        else:
            src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
            order = np.argsort(src, kind="stable")
            self.nbr = np.concatenate([self.edges[:, 1], self.edges[:, 0]])[order].astype(vtype)
            self.eid = (order % max(m, 1)).astype(etype)
        self._degrees = counts.astype(np.int64)

    @classmethod
    def from_triples(cls, n: int, triples) -> "MultiGraph":
        """Build from ``(u, v, multiplicity)`` triples."""
        edges = []
        for u, v, mult in triples:
            edges.extend([(u, v)] * int(mult))
        return cls(n, edges)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees

    def degree(self, v: int) -> int:
        return degree(self, v)

    def neighbors(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Distinct neighbours of ``v`` with edge multiplicities (self-loops once)."""
        row = self.nbr[self.indptr[v] : self.indptr[v + 1]]
        ids = self.eid[self.indptr[v] : self.indptr[v + 1]]
        ids, first = np.unique(ids, return_index=True)
        u, mult = np.unique(row[first], return_counts=True)
        return u, mult

    def adjacency(self) -> sp.csr_matrix:
        """Edge-end count matrix; a self-loop adds 2 on the diagonal."""
        data = np.ones(len(self.nbr))
        return sp.csr_matrix((data, self.nbr, self.indptr), shape=(self.n, self.n))

    def laplacian(self) -> sp.csr_matrix:
        return (sp.diags(self._degrees.astype(float)) - self.adjacency()).tocsr()

    def transition_matrix(self) -> sp.csr_matrix:
        deg = self._degrees.astype(float)
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        return (sp.diags(inv) @ self.adjacency()).tocsr()

    def edge_multiset(self) -> list[tuple[int, int]]:
        e = np.sort(self.edges, axis=1)
        return sorted(map(tuple, e.tolist()))

    def __repr__(self):
        return f"MultiGraph(n={self.n}, edges={self.num_edges})"


@njit
def _fill_csr(edges, indptr, nbr, eid):
    # rows list edge-ends by edge id, endpoint 0 before endpoint 1; matches the argsort path
    pos = indptr[:-1].copy()
    for side in range(2):
        for i in range(len(edges)):
            u = edges[i, side]
            nbr[pos[u]] = edges[i, 1 - side]
            eid[pos[u]] = i
            pos[u] += 1


def degree(g: MultiGraph, v: int) -> int:
    if not (0 <= v < g.n):
        raise DomainError(f"vertex {v} out of range")
    return int(g.indptr[v + 1] - g.indptr[v])


@njit
def _bfs(indptr, nbr, root, limit, dist):
    # dist must be filled with -1; explores up to distance ``limit``
    n = len(indptr) - 1
    queue = np.empty(n, dtype=np.int64)
    head = 0
    tail = 1
    queue[0] = root
    dist[root] = 0
    while head < tail:
        v = queue[head]
        head += 1
        d = dist[v]
        if d >= limit:
            continue
        for j in range(indptr[v], indptr[v + 1]):
            u = nbr[j]
            if dist[u] < 0:
                dist[u] = d + 1
                queue[tail] = u
                tail += 1
    return queue[:tail]


def bfs_distances(g: MultiGraph, root: int, limit: int = -1, scratch: np.ndarray | None = None):
    """Hop distances from ``root`` up to ``limit`` (-1 = unbounded); -1 marks unreached."""
    if not (0 <= root < g.n):
        raise DomainError(f"root {root} out of range")
    if limit < 0:
        limit = g.n
    if scratch is None:
        dist = np.full(g.n, -1, dtype=np.int64)
    else:
        dist = scratch
        dist.fill(-1)
    order = _bfs(g.indptr, g.nbr, root, limit, dist)
    return dist, order


def multi_source_distances(g: MultiGraph, sources) -> np.ndarray:
    """Distance from every vertex to the nearest vertex of ``sources``."""
    sources = np.asarray(sources, dtype=np.int64)
    if len(sources) == 0:
        return np.full(g.n, -1, dtype=np.int64)
    # add a virtual root joined to all sources
    ind = np.concatenate([g.indptr, [g.indptr[-1] + len(sources)]])
    nb = np.concatenate([g.nbr.astype(np.int64), sources])
    dist = np.full(g.n + 1, -1, dtype=np.int64)
    _bfs(ind, nb, g.n, g.n + 1, dist)
    out = dist[: g.n]
    out[out > 0] -= 1
    return out


@dataclass
class Ball:
    root: int
    radius: int
    dist: np.ndarray = field(repr=False)
    members: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    exterior: np.ndarray = field(repr=False)
    valid: bool = True

    @property
    def size(self) -> int:
        return len(self.members)

    def contains(self, v: int) -> bool:
        return 0 <= self.dist[v] <= self.radius


def bfs_ball(g: MultiGraph, root: int, r: int, forbidden: np.ndarray | None = None,
             scratch: np.ndarray | None = None) -> Ball:
    """Metric ball ``B_r(root)``.

    ``boundary`` holds the members with a neighbour outside the ball and
    ``exterior`` the vertices at distance exactly ``r + 1``.  When a boolean
    ``forbidden`` mask is supplied (vertices whose neighbourhood is not fully
    known, e.g. near a window end) the ball is marked invalid if it contains
    one of them.
    """
    if r < 0:
        raise DomainError("radius must be non-negative")
    dist, order = bfs_distances(g, root, r + 1, scratch)
    d = dist[order]
    members = np.sort(order[d <= r])
    exterior = np.sort(order[d == r + 1])
    shell = order[d == r]
    if len(exterior):
        has_out = _has_neighbor_at(g.indptr, g.nbr, shell, dist, r + 1)
        boundary = np.sort(shell[has_out])
    else:
        boundary = np.empty(0, dtype=order.dtype)
    valid = True
    if forbidden is not None:
        valid = not bool(forbidden[members].any())
    return Ball(root, r, dist, members, boundary, exterior, valid)


@njit
def _has_neighbor_at(indptr, nbr, verts, dist, level):
    out = np.zeros(len(verts), dtype=np.bool_)
    for i in range(len(verts)):
        v = verts[i]
        for j in range(indptr[v], indptr[v + 1]):
            if dist[nbr[j]] == level:
                out[i] = True
                break
    return out


def induced_subgraph(g: MultiGraph, members) -> tuple[MultiGraph, np.ndarray]:
    """Subgraph on ``members`` keeping every edge instance inside it.

    Returns the subgraph and ``old_ids`` with ``old_ids[new] = old``.
    """
    old_ids = np.unique(np.asarray(members, dtype=np.int64))
    if len(old_ids) and (old_ids[0] < 0 or old_ids[-1] >= g.n):
        raise DomainError("members must be vertices of the graph")
    new_of = np.full(g.n, -1, dtype=np.int64)
    new_of[old_ids] = np.arange(len(old_ids))
    a = new_of[g.edges[:, 0]]
    b = new_of[g.edges[:, 1]]
    keep = (a >= 0) & (b >= 0)
    return MultiGraph(len(old_ids), np.stack([a[keep], b[keep]], axis=1)), old_ids


def is_connected(g: MultiGraph) -> bool:
    if g.n == 0:
        return True
    dist, _ = bfs_distances(g, 0)
    return bool((dist >= 0).all())


_VERTS_RE = re.compile(r"#\s*vertices\s*[:=]?\s*(\d+)", re.I)


def parse_edge_list(text: str) -> MultiGraph:
    """Parse ``u v multiplicity`` lines; ``#`` starts a comment.

    A comment of the form ``# vertices N`` fixes the vertex count (so isolated
    vertices can be declared); otherwise it is one more than the largest id.
    """
    n = None
    triples = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        m = _VERTS_RE.search(raw)
        if m:
            n = int(m.group(1))
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise FormatError(f"line {lineno}: expected 'u v multiplicity', got {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
            mult = int(parts[2]) if len(parts) == 3 else 1
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
        if u < 0 or v < 0 or mult < 0:
            raise FormatError(f"line {lineno}: negative value")
        triples.append((u, v, mult))
    top = max((max(u, v) for u, v, _ in triples), default=-1) + 1
    if n is None:
        n = top
    elif n < top:
        raise FormatError(f"declared {n} vertices but ids reach {top - 1}")
    return MultiGraph.from_triples(n, triples)


def load_edge_list(path) -> MultiGraph:
    return parse_edge_list(Path(path).read_text())


def format_edge_list(g: MultiGraph) -> str:
    lines = [f"# vertices {g.n}"]
    pairs, counts = np.unique(np.sort(g.edges, axis=1), axis=0, return_counts=True)
    for (u, v), c in zip(pairs.tolist(), counts.tolist()):
        lines.append(f"{u} {v} {c}")
    return "\n".join(lines) + "\n"


# -- small constructors ---------------------------------------------------------------


def path_graph(n: int) -> MultiGraph:
    return MultiGraph(n, np.stack([np.arange(n - 1), np.arange(1, n)], axis=1))


def cycle_graph(n: int) -> MultiGraph:
    a = np.arange(n)
    return MultiGraph(n, np.stack([a, (a + 1) % n], axis=1))


def complete_graph(n: int) -> MultiGraph:
    iu = np.triu_indices(n, 1)
    return MultiGraph(n, np.stack(iu, axis=1))


def grid_graph(width: int, height: int | None = None) -> MultiGraph:
    """Box of Z^2; vertex ``(x, y)`` has id ``y * width + x``."""
    height = width if height is None else height
    ids = np.arange(width * height).reshape(height, width)
    horiz = np.stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()], axis=1)
    vert = np.stack([ids[:-1, :].ravel(), ids[1:, :].ravel()], axis=1)
    return MultiGraph(width * height, np.concatenate([horiz, vert]))


def grid_border(width: int, height: int | None = None) -> np.ndarray:
    """Boolean mask of the vertices on the outer rim of :func:`grid_graph`."""
    height = width if height is None else height
    mask = np.zeros((height, width), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    return mask.ravel()


def random_multigraph(rng: np.random.Generator, n: int, m: int, loops: bool = True,
                      connected: bool = True) -> MultiGraph:
    """``m`` uniformly random edge instances on ``n`` vertices, plus a random spanning tree if ``connected``."""
    edges = []
    if connected and n > 1:
        perm = rng.permutation(n)
        for i in range(1, n):
            edges.append((int(perm[i]), int(perm[rng.integers(0, i)])))
    extra = max(0, m - len(edges))
    a = rng.integers(0, n, extra)
    b = rng.integers(0, n, extra)
    if not loops:
        b = np.where(a == b, (b + 1) % n, b) if n > 1 else b
    edges.extend(zip(a.tolist(), b.tolist()))
    return MultiGraph(n, edges if edges else np.empty((0, 2), dtype=np.int64))
