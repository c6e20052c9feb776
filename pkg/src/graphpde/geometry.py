"""Spatial discretization: Delaunay triangulation and the neighbour graph.

Neighbourhoods are the edges of the Delaunay triangulation of the
measurement positions.  Edge features are raw displacements ``x_j - x_i``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _backend
from ._kernels_py import incircle, orient
from .errors import DegenerateInput

DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class PointSet:
    """Measurement positions in a rectangular domain.

    ``domain_lo``/``domain_hi`` default to the bounding box of the points.
    """

    coords: np.ndarray
    domain_lo: np.ndarray = None
    domain_hi: np.ndarray = None

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise DegenerateInput(f"coords must have shape (N, 2), got {coords.shape}")
        if coords.shape[0] < 3:
            raise DegenerateInput(f"need at least 3 points, got {coords.shape[0]}")
        if not np.all(np.isfinite(coords)):
            raise DegenerateInput("coordinates must be finite")
        lo = coords.min(axis=0) if self.domain_lo is None else np.array(self.domain_lo, dtype=np.float64)
        hi = coords.max(axis=0) if self.domain_hi is None else np.array(self.domain_hi, dtype=np.float64)
        if np.any(coords < lo) or np.any(coords > hi):
            raise DegenerateInput("points outside the domain bounds")
        pairs = cKDTree(coords).query_pairs(DUPLICATE_TOL)
        if pairs:
            i, j = sorted(min(pairs))
            raise DegenerateInput(f"points {i} and {j} coincide within {DUPLICATE_TOL}")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "domain_lo", lo)
        object.__setattr__(self, "domain_hi", hi)

    def __len__(self):
        return self.coords.shape[0]


@dataclass(frozen=True)
class Triangulation:
    triangles: np.ndarray  # (T, 3) counterclockwise, smallest index first, rows sorted


def _tie_break(xs, ys, tris):
    """Flip cocircular diagonals so the kept diagonal has the smallest low endpoint.

    Each flip strictly lowers the sum over edges of the lower endpoint index,
    so the loop terminates.
    """
    tris = [list(t) for t in tris]
    owner = {}
    for ti, (a, b, c) in enumerate(tris):
        owner[(a, b)] = (ti, c)
        owner[(b, c)] = (ti, a)
        owner[(c, a)] = (ti, b)

    def pt(v):
        return xs[v], ys[v]

    changed = True
    while changed:
        changed = False
        for (a, b) in sorted(owner):
            if a > b or (a, b) not in owner or (b, a) not in owner:
                continue
            t1, c = owner[(a, b)]
            t2, d = owner[(b, a)]
            if min(c, d) >= a:
                continue
            if incircle(*pt(a), *pt(b), *pt(c), *pt(d)) != 0:
                continue
            if orient(*pt(a), *pt(d), *pt(c)) <= 0 or orient(*pt(d), *pt(b), *pt(c)) <= 0:
                continue
            for key in ((a, b), (b, c), (c, a), (b, a), (a, d), (d, b)):
                del owner[key]
            tris[t1] = [a, d, c]
            tris[t2] = [d, b, c]
            owner[(a, d)] = (t1, c)
            owner[(d, c)] = (t1, a)
            owner[(c, a)] = (t1, d)
            owner[(d, b)] = (t2, c)
            owner[(b, c)] = (t2, d)
            owner[(c, d)] = (t2, b)
            changed = True
    return tris


def _canonical(tris):
    out = []
    for t in tris:
        k = int(np.argmin(t))
        out.append((t[k], t[(k + 1) % 3], t[(k + 2) % 3]))
    out.sort()
    return np.asarray(out, dtype=np.int64).reshape(-1, 3)


def delaunay(points):
    """Delaunay triangulation of a :class:`PointSet` (or an ``(N, 2)`` array).

    Bowyer-Watson insertion in ascending index order, followed by the
    cocircular tie-break.  Raises :class:`DegenerateInput` for fewer than
    three points or a collinear set.
    """
    if not isinstance(points, PointSet):
        points = PointSet(points)
    raw = _backend.bowyer_watson(points.coords)
    xs = points.coords[:, 0].tolist()
    ys = points.coords[:, 1].tolist()
    tris = _tie_break(xs, ys, raw.tolist())
    return Triangulation(_canonical(tris))


@dataclass(eq=False)
class Graph:
    """Undirected neighbour graph in CSR form.

    ``indices[indptr[i]:indptr[i + 1]]`` lists the neighbours of node ``i`` in
    ascending order.
    """

    coords: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def n_edges(self):
        """Number of directed edges (twice the undirected count)."""
        return self.indices.shape[0]

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def degree(self):
        return np.diff(self.indptr)

    def edge_feature(self, i, j):
        return self.coords[j] - self.coords[i]

    def edges(self):
        """Directed edge list ``(src, dst)`` in CSR order."""
        src = np.repeat(np.arange(self.n_nodes, dtype=np.int64), self.degree())
        return src, self.indices.copy()

    def edge_features(self):
        src, dst = self.edges()
        return self.coords[dst] - self.coords[src]

    def undirected_edges(self):
        src, dst = self.edges()
        keep = src < dst
        return np.stack([src[keep], dst[keep]], axis=1)


def graph_from_adjacency(coords, neighbor_lists):
    coords = np.array(coords, dtype=np.float64)
    coords.setflags(write=False)
    lists = [np.unique(np.asarray(nb, dtype=np.int64)) for nb in neighbor_lists]
    indptr = np.zeros(len(lists) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(nb) for nb in lists])
    indices = np.concatenate(lists) if lists else np.zeros(0, dtype=np.int64)
    return Graph(coords, indptr, indices.astype(np.int64))


def build_graph(tri, points):
    """Neighbour graph: nodes ``i`` and ``j`` are adjacent iff they share a triangle edge."""
    if not isinstance(points, PointSet):
        points = PointSet(points)
    n = len(points)
    t = np.asarray(tri.triangles, dtype=np.int64)
    if t.size and (t.min() < 0 or t.max() >= n):
        raise DegenerateInput("triangle indices out of range")
    a = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
    b = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
    src = np.concatenate([a, b])
    dst = np.concatenate([b, a])
    key = np.unique(src * n + dst)
    src, dst = key // n, key % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    coords = points.coords
    return Graph(coords, indptr, dst.astype(np.int64))


def graph_from_coords(coords, domain_lo=None, domain_hi=None):
    points = PointSet(coords, domain_lo, domain_hi)
    return build_graph(delaunay(points), points)
