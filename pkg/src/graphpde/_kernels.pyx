# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled kernels.  Mirrors ``_kernels_py`` operation for operation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libcpp.vector cimport vector

from .errors import DegenerateInput

cnp.import_array()

cdef double INCIRCLE_TOL = 1e-9
cdef double ORIENT_TOL = 1e-12
cdef int GHOST = -1


cdef inline int _orient(double ax, double ay, double bx, double by,
                        double cx, double cy) nogil:
    cdef double left = (bx - ax) * (cy - ay)
    cdef double right = (by - ay) * (cx - ax)
    cdef double det = left - right
    if fabs(det) <= ORIENT_TOL * (fabs(left) + fabs(right)):
        return 0
    return 1 if det > 0 else -1


cdef inline int _incircle(double ax, double ay, double bx, double by,
                          double cx, double cy, double dx, double dy) nogil:
    cdef double adx = ax - dx
    cdef double ady = ay - dy
    cdef double bdx = bx - dx
    cdef double bdy = by - dy
    cdef double cdx = cx - dx
    cdef double cdy = cy - dy
    cdef double alift = adx * adx + ady * ady
    cdef double blift = bdx * bdx + bdy * bdy
    cdef double clift = cdx * cdx + cdy * cdy
    cdef double bc1 = bdx * cdy
    cdef double bc2 = cdx * bdy
    cdef double ca1 = cdx * ady
    cdef double ca2 = adx * cdy
    cdef double ab1 = adx * bdy
    cdef double ab2 = bdx * ady
    cdef double det = alift * (bc1 - bc2) + blift * (ca1 - ca2) + clift * (ab1 - ab2)
    cdef double perm = (alift * (fabs(bc1) + fabs(bc2)) + blift * (fabs(ca1) + fabs(ca2))
                        + clift * (fabs(ab1) + fabs(ab2)))
    if fabs(det) <= INCIRCLE_TOL * perm:
        return 0
    return 1 if det > 0 else -1


def orient(double ax, double ay, double bx, double by, double cx, double cy):
    return _orient(ax, ay, bx, by, cx, cy)


def incircle(double ax, double ay, double bx, double by, double cx, double cy,
             double dx, double dy):
    return _incircle(ax, ay, bx, by, cx, cy, dx, dy)


cdef class _Mesh:
    cdef const double[:] xs
    cdef const double[:] ys
    cdef vector[int] verts
    cdef vector[int] nbrs
    cdef vector[char] alive
    cdef vector[int] mark
    cdef int stamp
    cdef int last

    def __init__(self, const double[:] xs, const double[:] ys):
        self.xs = xs
        self.ys = ys
        self.stamp = 0
        self.last = 0

    cdef int add(self, int a, int b, int c):
        self.verts.push_back(a)
        self.verts.push_back(b)
        self.verts.push_back(c)
        self.nbrs.push_back(-1)
        self.nbrs.push_back(-1)
        self.nbrs.push_back(-1)
        self.alive.push_back(1)
        self.mark.push_back(0)
        return <int>self.alive.size() - 1

    cdef inline int local(self, int t, int v):
        if self.verts[3 * t] == v:
            return 0
        if self.verts[3 * t + 1] == v:
            return 1
        return 2

    cdef inline int nb_local(self, int t, int n):
        if self.nbrs[3 * t] == n:
            return 0
        if self.nbrs[3 * t + 1] == n:
            return 1
        return 2

    cdef bint inside(self, int t, int p):
        cdef int a = self.verts[3 * t]
        cdef int b = self.verts[3 * t + 1]
        cdef int c = self.verts[3 * t + 2]
        cdef double px = self.xs[p]
        cdef double py = self.ys[p]
        cdef int o
        cdef double ex, ey
        if c == GHOST:
            o = _orient(self.xs[a], self.ys[a], self.xs[b], self.ys[b], px, py)
            if o > 0:
                return True
            if o < 0:
                return False
            ex = self.xs[b] - self.xs[a]
            ey = self.ys[b] - self.ys[a]
            return ((px - self.xs[a]) * ex + (py - self.ys[a]) * ey > 0
                    and (px - self.xs[b]) * ex + (py - self.ys[b]) * ey < 0)
        return _incircle(self.xs[a], self.ys[a], self.xs[b], self.ys[b],
                         self.xs[c], self.ys[c], px, py) > 0

    cdef int locate(self, int p) except -2:
        cdef double px = self.xs[p]
        cdef double py = self.ys[p]
        cdef int t = self.last
        cdef int it, k, a, b, moved
        cdef int ntri = <int>self.alive.size()
        for it in range(4 * ntri + 16):
            if self.verts[3 * t + 2] == GHOST:
                if self.inside(t, p):
                    return t
                break
            moved = 0
            for k in range(3):
                a = self.verts[3 * t + (k + 1) % 3]
                b = self.verts[3 * t + (k + 2) % 3]
                if _orient(self.xs[a], self.ys[a], self.xs[b], self.ys[b], px, py) < 0:
                    t = self.nbrs[3 * t + k]
                    moved = 1
                    break
            if not moved:
                if self.inside(t, p):
                    return t
                break
        for t in range(ntri):
            if self.alive[t] and self.inside(t, p):
                return t
        raise DegenerateInput(f"point {p} could not be inserted (duplicate?)")

    cdef int insert(self, int p, int[:] starts, int[:] ends, int ghost_slot) except -1:
        cdef double px = self.xs[p]
        cdef double py = self.ys[p]
        cdef int seed = self.locate(p)
        cdef vector[int] cavity
        cdef vector[int] stack
        cdef vector[int] grow
        cdef vector[int] bnd
        cdef int t, n, k, i, e0, e1, old, nt, a, b, c, j
        cdef size_t q
        self.stamp += 1
        cdef int stamp = self.stamp
        self.mark[seed] = stamp
        cavity.push_back(seed)
        stack.push_back(seed)
        while stack.size() > 0:
            t = stack.back()
            stack.pop_back()
            for k in range(3):
                n = self.nbrs[3 * t + k]
                if self.mark[n] != stamp and self.inside(n, p):
                    self.mark[n] = stamp
                    cavity.push_back(n)
                    stack.push_back(n)
        while True:
            bnd.clear()
            grow.clear()
            _sort_ints(cavity)
            for q in range(cavity.size()):
                t = cavity[q]
                for k in range(3):
                    n = self.nbrs[3 * t + k]
                    if self.mark[n] == stamp:
                        continue
                    e0 = self.verts[3 * t + (k + 1) % 3]
                    e1 = self.verts[3 * t + (k + 2) % 3]
                    if (e0 != GHOST and e1 != GHOST
                            and _orient(self.xs[e0], self.ys[e0], self.xs[e1],
                                        self.ys[e1], px, py) <= 0):
                        grow.push_back(n)
                    bnd.push_back(e0)
                    bnd.push_back(e1)
                    bnd.push_back(n)
                    bnd.push_back(t)
            if grow.size() == 0:
                break
            for q in range(grow.size()):
                n = grow[q]
                if self.mark[n] != stamp:
                    self.mark[n] = stamp
                    cavity.push_back(n)

        cdef vector[int] created
        cdef int nb_count = <int>(bnd.size() // 4)
        for i in range(nb_count):
            e0 = bnd[4 * i]
            e1 = bnd[4 * i + 1]
            n = bnd[4 * i + 2]
            old = bnd[4 * i + 3]
            if e0 == GHOST:
                a, b, c = e1, p, GHOST
            elif e1 == GHOST:
                a, b, c = p, e0, GHOST
            else:
                a, b, c = e0, e1, p
            nt = self.add(a, b, c)
            self.nbrs[3 * nt + self.local(nt, p)] = n
            self.nbrs[3 * n + self.nb_local(n, old)] = nt
            starts[ghost_slot if e0 == GHOST else e0] = nt
            ends[ghost_slot if e1 == GHOST else e1] = nt
            created.push_back(nt)
        for i in range(nb_count):
            nt = created[i]
            e0 = bnd[4 * i]
            e1 = bnd[4 * i + 1]
            self.nbrs[3 * nt + self.local(nt, e0)] = starts[ghost_slot if e1 == GHOST else e1]
            self.nbrs[3 * nt + self.local(nt, e1)] = ends[ghost_slot if e0 == GHOST else e0]
            if self.verts[3 * nt + 2] != GHOST:
                self.last = nt
        for q in range(cavity.size()):
            self.alive[cavity[q]] = 0
        return 0


cdef void _sort_ints(vector[int]& v):
    # insertion sort; cavities hold a handful of triangles
    cdef size_t i, j
    cdef int key
    for i in range(1, v.size()):
        key = v[i]
        j = i
        while j > 0 and v[j - 1] > key:
            v[j] = v[j - 1]
            j -= 1
        v[j] = key


def bowyer_watson(coords):
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    cdef int n = coords.shape[0]
    if n < 3:
        raise DegenerateInput("need at least 3 points")
    xs_arr = np.ascontiguousarray(coords[:, 0])
    ys_arr = np.ascontiguousarray(coords[:, 1])
    cdef const double[:] xs = xs_arr
    cdef const double[:] ys = ys_arr
    cdef int third = -1
    cdef int k, t, a, b, c, p
    for k in range(2, n):
        if _orient(xs[0], ys[0], xs[1], ys[1], xs[k], ys[k]) != 0:
            third = k
            break
    if third < 0:
        raise DegenerateInput("all points are collinear")
    cdef _Mesh mesh = _Mesh(xs, ys)
    if _orient(xs[0], ys[0], xs[1], ys[1], xs[third], ys[third]) > 0:
        a, b, c = 0, 1, third
    else:
        a, b, c = 0, third, 1
    mesh.add(a, b, c)
    mesh.add(b, a, GHOST)
    mesh.add(c, b, GHOST)
    mesh.add(a, c, GHOST)
    edge_owner = {}
    for t in range(4):
        for k in range(3):
            edge_owner[(mesh.verts[3 * t + (k + 1) % 3], mesh.verts[3 * t + (k + 2) % 3])] = (t, k)
    for (e0, e1), (t, k) in edge_owner.items():
        mesh.nbrs[3 * t + k] = edge_owner[(e1, e0)][0]

    starts_arr = np.zeros(n + 1, dtype=np.intc)
    ends_arr = np.zeros(n + 1, dtype=np.intc)
    cdef int[:] starts = starts_arr
    cdef int[:] ends = ends_arr
    for p in range(2, n):
        if p != third:
            mesh.insert(p, starts, ends, n)

    out = []
    for t in range(<int>mesh.alive.size()):
        if mesh.alive[t] and mesh.verts[3 * t + 2] != GHOST:
            out.append((mesh.verts[3 * t], mesh.verts[3 * t + 1], mesh.verts[3 * t + 2]))
    return np.asarray(out, dtype=np.int64).reshape(-1, 3)


def segment_sum(indptr, values):
    cdef const cnp.int64_t[:] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = ip.shape[0] - 1
    out = np.zeros((n,) + vals.shape[1:], dtype=np.float64)
    if vals.shape[0] == 0 or n == 0:
        return out
    cdef Py_ssize_t width = vals.size // vals.shape[0]
    cdef const double[:, :] v = vals.reshape(vals.shape[0], width)
    cdef double[:, :] o = out.reshape(n, width)
    cdef Py_ssize_t i, e, c
    with nogil:
        for i in range(n):
            for e in range(ip[i], ip[i + 1]):
                for c in range(width):
                    o[i, c] = o[i, c] + v[e, c]
    return out


def tanh_grad_inplace(g, a):
    """``g *= 1 - a * a`` elementwise; both C-contiguous float64 of equal shape."""
    if g.shape != a.shape:
        raise ValueError("shape mismatch")
    cdef double[::1] gv = g.reshape(-1)
    cdef const double[::1] av = a.reshape(-1)
    cdef Py_ssize_t i, n = gv.shape[0]
    cdef double t
    with nogil:
        for i in range(n):
            t = av[i] * av[i]
            gv[i] = gv[i] * (1.0 - t)
    return g
