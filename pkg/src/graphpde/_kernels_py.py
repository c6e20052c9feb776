"""Pure-Python reference kernels.

These are the fallback implementations used when the compiled extension
``graphpde._kernels`` is unavailable.  Both backends must return bit-identical
results; ``tests/test_kernels.py`` checks this.
"""

import numpy as np

from .errors import DegenerateInput

INCIRCLE_TOL = 1e-9
ORIENT_TOL = 1e-12
GHOST = -1


def orient(ax, ay, bx, by, cx, cy):
    """Sign of the signed area of (a, b, c): +1 ccw, -1 cw, 0 collinear."""
    left = (bx - ax) * (cy - ay)
    right = (by - ay) * (cx - ax)
    det = left - right
    if abs(det) <= ORIENT_TOL * (abs(left) + abs(right)):
        return 0
    return 1 if det > 0 else -1


def incircle(ax, ay, bx, by, cx, cy, dx, dy):
    """+1 if d is strictly inside the circumcircle of ccw (a, b, c), -1 outside, 0 on.

    The determinant is evaluated on coordinates relative to ``d`` and compared
    against ``INCIRCLE_TOL`` times its permanent.
    """
    adx = ax - dx
    ady = ay - dy
    bdx = bx - dx
    bdy = by - dy
    cdx = cx - dx
    cdy = cy - dy
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    bc1 = bdx * cdy
    bc2 = cdx * bdy
    ca1 = cdx * ady
    ca2 = adx * cdy
    ab1 = adx * bdy
    ab2 = bdx * ady
    det = alift * (bc1 - bc2) + blift * (ca1 - ca2) + clift * (ab1 - ab2)
    perm = (alift * (abs(bc1) + abs(bc2)) + blift * (abs(ca1) + abs(ca2))
            + clift * (abs(ab1) + abs(ab2)))
    if abs(det) <= INCIRCLE_TOL * perm:
        return 0
    return 1 if det > 0 else -1


class _Mesh:
    """Triangle soup with opposite-vertex adjacency; vertex ``GHOST`` is the point at infinity."""

    def __init__(self, xs, ys):
        self.xs = xs
        self.ys = ys
        self.verts = []
        self.nbrs = []
        self.alive = []
        self.last = 0

    def add(self, a, b, c):
        self.verts.append([a, b, c])
        self.nbrs.append([-1, -1, -1])
        self.alive.append(True)
        return len(self.verts) - 1

    def inside(self, t, p):
        xs, ys = self.xs, self.ys
        a, b, c = self.verts[t]
        px, py = xs[p], ys[p]
        if c == GHOST:
            o = orient(xs[a], ys[a], xs[b], ys[b], px, py)
            if o > 0:
                return True
            if o < 0:
                return False
            ex = xs[b] - xs[a]
            ey = ys[b] - ys[a]
            return ((px - xs[a]) * ex + (py - ys[a]) * ey > 0
                    and (px - xs[b]) * ex + (py - ys[b]) * ey < 0)
        return incircle(xs[a], ys[a], xs[b], ys[b], xs[c], ys[c], px, py) > 0

    def locate(self, p):
        xs, ys = self.xs, self.ys
        px, py = xs[p], ys[p]
        t = self.last
        for _ in range(4 * len(self.verts) + 16):
            v = self.verts[t]
            if v[2] == GHOST:
                if self.inside(t, p):
                    return t
                break
            for k in range(3):
                a = v[(k + 1) % 3]
                b = v[(k + 2) % 3]
                if orient(xs[a], ys[a], xs[b], ys[b], px, py) < 0:
                    t = self.nbrs[t][k]
                    break
            else:
                if self.inside(t, p):
                    return t
                break
        for t in range(len(self.verts)):
            if self.alive[t] and self.inside(t, p):
                return t
        raise DegenerateInput(f"point {p} could not be inserted (duplicate?)")

    def insert(self, p):
        xs, ys = self.xs, self.ys
        px, py = xs[p], ys[p]
        seed = self.locate(p)
        cavity = {seed}
        stack = [seed]
        while stack:
            t = stack.pop()
            for n in self.nbrs[t]:
                if n not in cavity and self.inside(n, p):
                    cavity.add(n)
                    stack.append(n)
        while True:
            boundary = []
            grow = []
            for t in sorted(cavity):
                v = self.verts[t]
                for k in range(3):
                    n = self.nbrs[t][k]
                    if n in cavity:
                        continue
                    e0 = v[(k + 1) % 3]
                    e1 = v[(k + 2) % 3]
                    if (e0 != GHOST and e1 != GHOST
                            and orient(xs[e0], ys[e0], xs[e1], ys[e1], px, py) <= 0):
                        grow.append(n)
                    boundary.append((e0, e1, n, t))
            if not grow:
                break
            cavity.update(grow)

        starts = {}
        ends = {}
        created = []
        for e0, e1, n, old in boundary:
            if e0 == GHOST:
                tri = (e1, p, GHOST)
            elif e1 == GHOST:
                tri = (p, e0, GHOST)
            else:
                tri = (e0, e1, p)
            nt = self.add(*tri)
            self.nbrs[nt][tri.index(p)] = n
            nn = self.nbrs[n]
            nn[nn.index(old)] = nt
            starts[e0] = nt
            ends[e1] = nt
            created.append((nt, tri, e0, e1))
        for nt, tri, e0, e1 in created:
            self.nbrs[nt][tri.index(e0)] = starts[e1]
            self.nbrs[nt][tri.index(e1)] = ends[e0]
            if tri[2] != GHOST:
                self.last = nt
        for t in cavity:
            self.alive[t] = False


def bowyer_watson(coords):
    """Delaunay triangulation by incremental insertion in ascending index order.

    Returns an ``(T, 3)`` int64 array of counterclockwise triangles.  The
    cocircular tie-break is applied separately by :func:`graphpde.geometry.delaunay`.
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if n < 3:
        raise DegenerateInput("need at least 3 points")
    xs = coords[:, 0].tolist()
    ys = coords[:, 1].tolist()
    third = -1
    for k in range(2, n):
        if orient(xs[0], ys[0], xs[1], ys[1], xs[k], ys[k]) != 0:
            third = k
            break
    if third < 0:
        raise DegenerateInput("all points are collinear")

    mesh = _Mesh(xs, ys)
    if orient(xs[0], ys[0], xs[1], ys[1], xs[third], ys[third]) > 0:
        a, b, c = 0, 1, third
    else:
        a, b, c = 0, third, 1
    mesh.add(a, b, c)
    mesh.add(b, a, GHOST)
    mesh.add(c, b, GHOST)
    mesh.add(a, c, GHOST)
    edge_owner = {}
    for t, v in enumerate(mesh.verts):
        for k in range(3):
            edge_owner[(v[(k + 1) % 3], v[(k + 2) % 3])] = (t, k)
    for (e0, e1), (t, k) in edge_owner.items():
        mesh.nbrs[t][k] = edge_owner[(e1, e0)][0]

    for p in range(2, n):
        if p != third:
            mesh.insert(p)

    out = [v for v, live in zip(mesh.verts, mesh.alive) if live and v[2] != GHOST]
    return np.asarray(out, dtype=np.int64).reshape(-1, 3)


def segment_sum(indptr, values):
    """Row sums of ``values`` over consecutive segments, accumulated in row order.

    ``out[i] = values[indptr[i]] + values[indptr[i] + 1] + ...`` with the
    additions performed strictly left to right; empty segments give zeros.
    """
    indptr = np.asarray(indptr, dtype=np.int64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    n = indptr.shape[0] - 1
    out = np.zeros((n,) + values.shape[1:], dtype=np.float64)
    if values.shape[0] == 0:
        return out
    width = int(np.max(np.diff(indptr))) if n else 0
    counts = np.diff(indptr)
    # column k of the padded layout holds the k-th term of every segment
    for k in range(width):
        rows = np.nonzero(counts > k)[0]
        out[rows] += values[indptr[rows] + k]
    return out


def tanh_grad_inplace(g, a):
    """``g *= 1 - a * a`` elementwise, in place."""
    if g.shape != a.shape:
        raise ValueError("shape mismatch")
    t = a * a
    np.subtract(1.0, t, out=t)
    g *= t
    return g
