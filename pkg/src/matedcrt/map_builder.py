"""Mated-CRT multigraph from a correlated walk.

Vertex ``x`` is the unit cell ``[x - 1, x]``.  For ``x1 < x2`` there is an
L-chord when

    max(inf_{[x1-1, x1]} L, inf_{[x2-1, x2]} L) <= inf_{[x1, x2-1]} L

and likewise for R.  Consecutive cells always satisfy both conditions and get
exactly one edge; other pairs get one edge per coordinate that holds.

Because the cells strictly between ``x1`` and ``x2`` cover ``[x1, x2-1]``,
the condition says that ``x1`` and ``x2`` see each other over the sequence of
cell minima: every cell between them has a minimum at least as large as both
endpoints.  :func:`build_adjacency` finds all such pairs with a monotone
stack in time linear in the output; :func:`build_adjacency_bruteforce`
evaluates the inequality pair by pair straight from the samples.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._accel import USE_NUMBA, njit
from .errors import ConsistencyError, DomainError, FormatError
from .graph_core import MultiGraph, bfs_distances
from .walk_gen import CorrelatedWalk, WalkParams

CONSECUTIVE = 0
L_CHORD = 1
R_CHORD = 2
LABEL_NAMES = {CONSECUTIVE: "consecutive", L_CHORD: "L-chord", R_CHORD: "R-chord"}

BRUTEFORCE_CAP = 5000

GRAPH_MAGIC = b"MCRTGRAF"
GRAPH_VERSION = 1
_GHEADER = struct.Struct("<8sIQIdQQ")
_NEIGHBOR = np.dtype([("v", "<i8"), ("label", "u1")])


@dataclass
class CellMinima:
    """Per-cell infima; entry ``i`` belongs to time ``x_first + i``.

    ``s_l``/``s_r`` hold each cell's second-smallest sample.  Adjacent cells
    share an endpoint sample, so their minima tie whenever the walk has a
    local minimum on the mesh; the second key orders such cells the way the
    Brownian bridge between the samples would most likely order them (the
    cell whose other samples sit closer to the shared minimum dips deeper).
    """

    m_l: np.ndarray
    m_r: np.ndarray
    s_l: np.ndarray
    s_r: np.ndarray
    x_first: int

    @property
    def n_cells(self) -> int:
        return len(self.m_l)

    def ranks(self, ties: str = "refined") -> tuple[np.ndarray, np.ndarray]:
        """Dense ranks of the cell keys for each coordinate.

        ``ties="literal"`` compares the minima alone, exactly as the adjacency
        inequality is written; ``"refined"`` also uses the second key.
        """
        if ties == "refined":
            return dense_rank(self.m_l, self.s_l), dense_rank(self.m_r, self.s_r)
        if ties == "literal":
            zero = np.zeros(self.n_cells)
            return dense_rank(self.m_l, zero), dense_rank(self.m_r, zero)
        raise DomainError(f"unknown tie rule {ties!r}")


def dense_rank(primary: np.ndarray, secondary: np.ndarray) -> np.ndarray:
    """Rank of each ``(primary, secondary)`` key; equal keys share a rank."""
    n = len(primary)
    order = np.lexsort((secondary, primary))
    p, q = primary[order], secondary[order]
    new = np.ones(n, dtype=np.int64)
    if n:
        new[1:] = (p[1:] != p[:-1]) | (q[1:] != q[:-1])
        new[0] = 0
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.cumsum(new)
    return rank


def _cell_keys(samples: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    cells = np.lib.stride_tricks.sliding_window_view(samples, k + 1)[::k]
    part = np.partition(cells, 1, axis=1)
    return part[:, 0].copy(), part[:, 1].copy()


def cell_minima(walk: CorrelatedWalk) -> CellMinima:
    k = walk.mesh_k
    m_l, s_l = _cell_keys(walk.samples_l, k)
    m_r, s_r = _cell_keys(walk.samples_r, k)
    return CellMinima(m_l, m_r, s_l, s_r, walk.t_min + 1)


# -- monotone stack sweep ---------------------------------------------------


@njit
def _visible_pairs(m, out_a, out_b, fill):
    """All pairs i < j with max(m[i], m[j]) <= min(m[i+1:j]).

    With ``fill`` false only the count is returned.  The stack holds the
    cells not yet shadowed by a strictly lower later cell; its values are
    weakly increasing from bottom to top.
    """
    n = len(m)
    stack = np.empty(n, dtype=np.int64)
    top = 0
    count = 0
    for j in range(n):
        v = m[j]
        while top > 0 and m[stack[top - 1]] > v:
            top -= 1
            if fill:
                out_a[count] = stack[top]
                out_b[count] = j
            count += 1
        # cells with value <= v remain visible through runs of cells equal to v
        p = top - 1
        while p >= 0:
            if fill:
                out_a[count] = stack[p]
                out_b[count] = j
            count += 1
            if m[stack[p]] != v:
                break
            p -= 1
        stack[top] = j
        top += 1
    return count


def visible_pairs(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = np.ascontiguousarray(m)
    dummy = np.empty(0, dtype=np.int64)
    count = _visible_pairs(m, dummy, dummy, False)
    a = np.empty(count, dtype=np.int64)
    b = np.empty(count, dtype=np.int64)
    _visible_pairs(m, a, b, True)
    return a, b


# -- graph container ----------------------------------------------------------


@dataclass(eq=False)
class MatedCrtGraph:
    """Mated-CRT multigraph on a finite window of cells.

    ``edges`` uses vertex indices ``0..n_vertices-1``; the vertex id (the cell's
    integer time) of index ``i`` is ``x_first + i``.  Edges are kept in
    canonical order (by first endpoint, second endpoint, label).
    """

    x_first: int
    n_vertices: int
    edges: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    params: WalkParams | None = None
    minima: CellMinima | None = field(default=None, repr=False)
    ties: str = "refined"
    _graph: MultiGraph | None = field(default=None, repr=False)
    _exposed: np.ndarray | None = field(default=None, repr=False)

    @property
    def graph(self) -> MultiGraph:
        if self._graph is None:
            self._graph = MultiGraph(self.n_vertices, self.edges)
        return self._graph

    @property
    def x_last(self) -> int:
        return self.x_first + self.n_vertices - 1

    @property
    def root(self) -> int:
        """Index of vertex id 0."""
        return self.index_of(0)

    def index_of(self, x: int) -> int:
        if not (self.x_first <= x <= self.x_last):
            raise DomainError(f"vertex id {x} outside window [{self.x_first}, {self.x_last}]")
        return x - self.x_first

    def id_of(self, i):
        return np.asarray(i) + self.x_first

    def labeled_edges(self) -> list[tuple[int, int, int]]:
        """Edge multiset in vertex ids: sorted ``(x1, x2, label)`` triples."""
        e = self.edges + self.x_first
        return list(zip(e[:, 0].tolist(), e[:, 1].tolist(), self.labels.tolist()))

    @property
    def exposed(self) -> np.ndarray:
        """Vertices that may have edges leaving the window.

        A cell can be joined to a cell beyond the right end only if no cell
        after it (inside the window) has a smaller minimum, and symmetrically
        on the left.  Every path that leaves the window passes through one of
        these vertices, so distances shorter than the distance to this set are
        exact.
        """
        if self._exposed is None:
            if self.minima is None:
                raise DomainError("graph carries no cell minima; exposure unknown")
            mask = np.zeros(self.n_vertices, dtype=bool)
            for m in self.minima.ranks(self.ties):
                mask |= m <= np.minimum.accumulate(m)
                mask |= m <= np.minimum.accumulate(m[::-1])[::-1]
            self._exposed = mask
        return self._exposed

    def contamination_radius(self, root: int | None = None) -> int:
        """Graph distance from ``root`` (index) to the nearest exposed vertex.

        Balls ``B_r`` with ``r`` below this value coincide with the balls of
        the infinite map.
        """
        if root is None:
            root = self.root
        dist, order = bfs_distances(self.graph, root)
        d = dist[self.exposed]
        d = d[d >= 0]
        return int(d.min()) if len(d) else self.n_vertices

    def bulk_mean_degree(self, margin: int | None = None) -> float:
        """Mean degree over vertices farther than ``margin`` (time units) from the window ends."""
        if margin is None:
            margin = self.n_vertices // 8 if self.params is None else self.params.window_n // 4
        deg = self.graph.degrees
        lo, hi = margin, self.n_vertices - margin
        if hi <= lo:
            raise DomainError("margin leaves no bulk vertices")
        return float(deg[lo:hi].mean())


def _assemble(pairs_l, pairs_r, n: int, x_first: int, params, minima, ties) -> MatedCrtGraph:
    al, bl = pairs_l
    ar, br = pairs_r
    cons = np.arange(n - 1, dtype=np.int64)
    chord_l = (bl - al) > 1
    chord_r = (br - ar) > 1
    a = np.concatenate([cons, al[chord_l], ar[chord_r]])
    b = np.concatenate([cons + 1, bl[chord_l], br[chord_r]])
    lab = np.concatenate([
        np.full(n - 1, CONSECUTIVE, np.uint8),
        np.full(int(chord_l.sum()), L_CHORD, np.uint8),
        np.full(int(chord_r.sum()), R_CHORD, np.uint8),
    ])
    order = np.lexsort((lab, b, a))
    edges = np.stack([a[order], b[order]], axis=1)
    return MatedCrtGraph(x_first, n, edges.astype(_vertex_dtype(n)), lab[order], params, minima, ties)


def _vertex_dtype(n):
    return np.int32 if n < 2**31 - 1 else np.int64


def build_adjacency(walk: CorrelatedWalk, ties: str = "refined") -> MatedCrtGraph:
    """Mated-CRT graph of ``walk`` via one monotone-stack sweep per coordinate.

    Each sweep keeps a stack of cells whose minima are still visible from the
    right; a new cell pops the strictly higher ones, emitting one chord per
    pop and one chord to the first cell left standing.
    """
    if walk.params is not None and walk.params.window_n < 2:
        raise DomainError("window_n must be at least 2")
    mins = cell_minima(walk)
    n = mins.n_cells
    if n < 2:
        raise DomainError("walk spans fewer than two cells")
    rank_l, rank_r = mins.ranks(ties)
    pairs_l = visible_pairs(rank_l)
    pairs_r = visible_pairs(rank_r)
    return _assemble(pairs_l, pairs_r, n, mins.x_first, walk.params, mins, ties)


# -- brute force oracle ---------------------------------------------------------


@njit
def _bruteforce_coord(samples, k, n_cells, refined, out):
    # out[i, j]: inequality for cells i < j, with cell infima refined by the
    # second-smallest sample to order exact ties; scanned straight from samples
    lo = np.empty(n_cells)
    lo2 = np.empty(n_cells)
    for c in range(n_cells):
        a = np.inf
        b = np.inf
        for t in range(c * k, (c + 1) * k + 1):
            x = samples[t]
            if x < a:
                b = a
                a = x
            elif x < b:
                b = x
        lo[c] = a
        lo2[c] = b if refined else 0.0
    for i in range(n_cells):
        mid = np.inf
        mid2 = np.inf
        for j in range(i + 1, n_cells):
            # hi = larger of the two endpoint keys
            if lo[i] > lo[j] or (lo[i] == lo[j] and lo2[i] >= lo2[j]):
                hi, hi2 = lo[i], lo2[i]
            else:
                hi, hi2 = lo[j], lo2[j]
            out[i, j] = hi < mid or (hi == mid and hi2 <= mid2)
            # cell j now joins the middle interval [x1, x2 - 1] for later x2
            if lo[j] < mid or (lo[j] == mid and lo2[j] < mid2):
                mid = lo[j]
                mid2 = lo2[j]


def _bruteforce_coord_numpy(samples, k, n_cells, refined, out):
    m, s = _cell_keys(samples, k)
    key = dense_rank(m, s if refined else np.zeros_like(s))
    for i in range(n_cells - 1):
        rest = key[i + 1 :]
        mid = np.empty(len(rest), dtype=np.int64)
        mid[0] = np.iinfo(np.int64).max
        mid[1:] = np.minimum.accumulate(rest[:-1])
        out[i, i + 1 :] = np.maximum(key[i], rest) <= mid


def build_adjacency_bruteforce(walk: CorrelatedWalk, cap: int = BRUTEFORCE_CAP,
                               ties: str = "refined") -> MatedCrtGraph:
    """Reference builder: checks the adjacency inequality for every pair."""
    n = (len(walk.samples_l) - 1) // walk.mesh_k
    half = walk.params.window_n if walk.params is not None else (n + 1) // 2
    if half > cap:
        raise DomainError(f"brute-force builder refuses window_n={half} above cap {cap}")
    if ties not in ("refined", "literal"):
        raise DomainError(f"unknown tie rule {ties!r}")
    k = walk.mesh_k
    x_first = walk.t_min + 1
    refined = ties == "refined"
    if n < 2:
        return MatedCrtGraph(x_first, n, np.empty((0, 2), np.int32), np.empty(0, np.uint8),
                             walk.params, cell_minima(walk) if n else None, ties)
    pairs = []
    for samples in (walk.samples_l, walk.samples_r):
        ok = np.zeros((n, n), dtype=np.bool_)
        if USE_NUMBA:
            _bruteforce_coord(samples, k, n, refined, ok)
        else:
            _bruteforce_coord_numpy(samples, k, n, refined, ok)
        a, b = np.nonzero(ok)
        pairs.append((a.astype(np.int64), b.astype(np.int64)))
    return _assemble(pairs[0], pairs[1], n, x_first, walk.params, cell_minima(walk), ties)


# -- planar structure --------------------------------------------------------------


@dataclass
class FaceCensus:
    inner_degrees: dict[int, int]
    outer_degrees: list[int]
    n_faces: int
    euler_characteristic: int

    @property
    def triangulated(self) -> bool:
        return set(self.inner_degrees) <= {3}


@dataclass(eq=False)
class RotationSystem:
    """Counter-clockwise dart order around every vertex.

    Dart ``2e`` runs along edge ``e`` from its smaller to its larger endpoint,
    dart ``2e + 1`` the other way.  ``order[indptr[v]:indptr[v+1]]`` lists the
    darts leaving ``v`` counter-clockwise starting from the edge to ``v + 1``.
    """

    n_vertices: int
    edges: np.ndarray = field(repr=False)
    indptr: np.ndarray = field(repr=False)
    order: np.ndarray = field(repr=False)
    rot_next: np.ndarray = field(repr=False)

    def tail(self, d):
        return self.edges[np.asarray(d) // 2, np.asarray(d) % 2]

    def face_permutation(self) -> np.ndarray:
        darts = np.arange(2 * len(self.edges))
        return self.rot_next[darts ^ 1]

    def faces(self) -> np.ndarray:
        """Face label of every dart."""
        return _cycle_labels(self.face_permutation())

    def outer_darts(self) -> np.ndarray:
        """Darts leaving the west corner of the first vertex and the east corner of the last."""
        out = []
        for v in (0, self.n_vertices - 1):
            row = self.order[self.indptr[v] : self.indptr[v + 1]]
            if len(row) == 0:
                continue
            heads = self.edges[row // 2, 1 - row % 2]
            sector = _sectors(np.full(len(row), v), heads, self._labels_of(row))
            # the corner facing away from the line sits between the upper and lower darts
            if v == 0:
                upper = np.nonzero(sector <= 2)[0]
                pos = (upper[-1] + 1) % len(row)
            else:
                lower = np.nonzero(sector >= 3)[0]
                pos = (lower[-1] + 1) % len(row) if len(lower) else 0
            out.append(row[pos])
        return np.array(out, dtype=np.int64)

    _labels: np.ndarray | None = field(default=None, repr=False)

    def _labels_of(self, darts):
        return self._labels[np.asarray(darts) // 2]

    def census(self) -> FaceCensus:
        labels = self.faces()
        n_faces = int(labels.max()) + 1 if len(labels) else 1
        sizes = np.bincount(labels, minlength=n_faces) if len(labels) else np.array([0])
        outer = set(labels[self.outer_darts()].tolist()) if len(labels) else {0}
        inner = {}
        for f, s in enumerate(sizes.tolist()):
            if f not in outer:
                inner[s] = inner.get(s, 0) + 1
        chi = self.n_vertices - len(self.edges) + n_faces
        return FaceCensus(inner, sorted(int(sizes[f]) for f in outer), n_faces, chi)


@njit
def _cycle_labels(perm):
    n = len(perm)
    lab = np.full(n, -1, dtype=np.int64)
    c = 0
    for s in range(n):
        if lab[s] >= 0:
            continue
        d = s
        while lab[d] < 0:
            lab[d] = c
            d = perm[d]
        c += 1
    return lab


def _sectors(tails, heads, labels):
    # counter-clockwise sectors from east: 0 east, 1 R right, 2 R left, 3 west, 4 L left, 5 L right
    right = heads > tails
    sec = np.where(labels == CONSECUTIVE, np.where(right, 0, 3),
                   np.where(labels == R_CHORD, np.where(right, 1, 2), np.where(right, 5, 4)))
    return sec


def _check_laminar(a, b, side):
    order = np.lexsort((-b, a))
    stack = []
    for i in order.tolist():
        x1, x2 = int(a[i]), int(b[i])
        while stack and stack[-1] <= x1:
            stack.pop()
        if stack and stack[-1] < x2:
            raise ConsistencyError(f"{side}-chords cross at ({x1}, {x2}); adjacency is not laminar")
        stack.append(x2)


def planar_order(g: MatedCrtGraph) -> RotationSystem:
    """Rotation system with R-chords above the vertex line and L-chords below."""
    e = g.edges
    for lab, side in ((L_CHORD, "L"), (R_CHORD, "R")):
        sel = g.labels == lab
        _check_laminar(e[sel, 0], e[sel, 1], side)
    m = len(e)
    darts = np.arange(2 * m)
    tails = e[darts // 2, darts % 2]
    heads = e[darts // 2, 1 - darts % 2]
    labels = g.labels[darts // 2]
    sec = _sectors(tails, heads, labels)
    length = np.abs(heads - tails)
    # inner arcs first on the way out, outer arcs first on the way back
    sub = np.where((sec == 1) | (sec == 4), length, -length)
    order = np.lexsort((sub, sec, tails))
    counts = np.bincount(tails, minlength=g.n_vertices)
    indptr = np.zeros(g.n_vertices + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    rot_next = np.empty(2 * m, dtype=np.int64)
    pos = np.arange(2 * m)
    start = indptr[tails[order]]
    deg = counts[tails[order]]
    nxt = start + (pos - start + 1) % deg
    rot_next[order] = order[nxt]
    rs = RotationSystem(g.n_vertices, e, indptr, order.astype(np.int64), rot_next)
    rs._labels = g.labels
    return rs


def face_census(g: MatedCrtGraph) -> FaceCensus:
    return planar_order(g).census()


# -- persistence ---------------------------------------------------------------------


def save_graph(g: MatedCrtGraph, path) -> None:
    p = g.params
    if p is None or g.x_first != -p.window_n + 1 or g.n_vertices != 2 * p.window_n:
        raise DomainError("only graphs built from generated walks can be saved")
    n = g.n_vertices
    a, b = g.edges[:, 0], g.edges[:, 1]
    src = np.concatenate([a, b])
    dst = np.concatenate([b, a])
    lab = np.concatenate([g.labels, g.labels])
    order = np.lexsort((lab, dst, src))
    counts = np.bincount(src, minlength=n)
    offsets = np.zeros(n + 1, dtype="<u8")
    np.cumsum(counts, out=offsets[1:])
    rec = np.empty(len(src), dtype=_NEIGHBOR)
    rec["v"] = dst[order] + g.x_first
    rec["label"] = lab[order]
    with open(path, "wb") as fh:
        fh.write(_GHEADER.pack(GRAPH_MAGIC, GRAPH_VERSION, p.window_n, p.mesh_k, p.gamma, p.seed, n))
        fh.write(offsets.tobytes())
        fh.write(rec.tobytes())


def load_graph(path) -> MatedCrtGraph:
    data = Path(path).read_bytes()
    if len(data) < _GHEADER.size:
        raise FormatError("graph file truncated before end of header")
    magic, version, window_n, mesh_k, gamma, seed, n = _GHEADER.unpack_from(data, 0)
    if magic != GRAPH_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {GRAPH_MAGIC!r}")
    if version != GRAPH_VERSION:
        raise FormatError(f"unsupported graph format version {version}")
    try:
        params = WalkParams(gamma, window_n, mesh_k, seed)
    except DomainError as exc:
        raise FormatError(f"invalid header: {exc}") from exc
    if n != 2 * window_n:
        raise FormatError("vertex count does not match window")
    off_end = _GHEADER.size + 8 * (n + 1)
    if len(data) < off_end:
        raise FormatError("graph file truncated in offset array")
    offsets = np.frombuffer(data, "<u8", n + 1, _GHEADER.size).astype(np.int64)
    total = int(offsets[-1])
    if offsets[0] != 0 or np.any(np.diff(offsets) < 0) or len(data) != off_end + total * _NEIGHBOR.itemsize:
        raise FormatError("offset array inconsistent with neighbour records")
    rec = np.frombuffer(data, _NEIGHBOR, total, off_end)
    x_first = -window_n + 1
    src = np.repeat(np.arange(n), np.diff(offsets))
    dst = rec["v"].astype(np.int64) - x_first
    lab = rec["label"].astype(np.uint8)
    if dst.size and (dst.min() < 0 or dst.max() >= n or lab.max() > R_CHORD):
        raise FormatError("neighbour record out of range")
    keep = src < dst
    if 2 * int(keep.sum()) != total:
        raise FormatError("adjacency is not symmetric")
    a, b, lab = src[keep], dst[keep], lab[keep]
    order = np.lexsort((lab, b, a))
    edges = np.stack([a[order], b[order]], axis=1).astype(_vertex_dtype(n))
    return MatedCrtGraph(x_first, n, edges, lab[order], params)
