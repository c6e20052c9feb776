import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial import ConvexHull, Delaunay as ScipyDelaunay

from graphpde import geometry
from graphpde.errors import DegenerateInput

from oracles import incircle_matrix


def test_pointset_validation():
    with pytest.raises(DegenerateInput):
        geometry.PointSet(np.zeros((2, 2)))
    with pytest.raises(DegenerateInput):
        geometry.PointSet(np.zeros((4, 3)))
    with pytest.raises(DegenerateInput):
        geometry.PointSet([[0, 0], [1, 0], [np.nan, 1]])
    with pytest.raises(DegenerateInput):
        geometry.PointSet([[0, 0], [1, 0], [0, 1], [1, 0]])
    with pytest.raises(DegenerateInput):
        geometry.PointSet([[0, 0], [1, 0], [0, 2]], domain_lo=(0, 0), domain_hi=(1, 1))


def test_collinear_rejected():
    with pytest.raises(DegenerateInput):
        geometry.delaunay(np.stack([np.arange(5.0), 2 * np.arange(5.0)], axis=1))


def test_single_triangle_is_ccw():
    tri = geometry.delaunay([[0, 0], [0, 1], [1, 0]])
    assert tri.triangles.tolist() == [[0, 2, 1]]


def test_square_tie_break_keeps_lowest_diagonal():
    # corners of a square are cocircular; the diagonal through node 0 is kept
    pts = [[1, 1], [0, 0], [1, 0], [0, 1]]
    g = geometry.graph_from_coords(pts)
    edges = {tuple(e) for e in g.undirected_edges().tolist()}
    assert (0, 1) in edges and (2, 3) not in edges


@pytest.mark.parametrize("seed", range(10))
def test_matches_scipy_on_random_points(seed):
    pts = np.random.default_rng(seed).random((150, 2))
    ours = {tuple(t) for t in geometry.delaunay(pts).triangles.tolist()}
    ref = set()
    for t in ScipyDelaunay(pts).simplices:
        t = [int(v) for v in t]
        a, b, c = pts[t]
        if (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) < 0:
            t[1], t[2] = t[2], t[1]
        k = t.index(min(t))
        ref.add((t[k], t[(k + 1) % 3], t[(k + 2) % 3]))
    assert ours == ref


@given(st.integers(0, 2**32 - 1), st.integers(3, 60))
def test_triangle_count_and_orientation(seed, n):
    pts = np.random.default_rng(seed).random((n, 2))
    t = geometry.delaunay(pts).triangles
    hull = ConvexHull(pts).vertices.size
    assert t.shape[0] == 2 * n - 2 - hull
    a, b, c = (pts[t[:, k]] for k in range(3))
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    assert np.all(cross > 0)
    assert np.all(t[:, 0] < t[:, 1]) and np.all(t[:, 0] < t[:, 2])
    assert np.array_equal(t, t[np.lexsort(t.T[::-1])])


def test_lattice_is_valid_and_deterministic():
    g = np.stack(np.meshgrid(np.arange(8.0), np.arange(6.0)), axis=-1).reshape(-1, 2)
    t1 = geometry.delaunay(g).triangles
    t2 = geometry.delaunay(g.copy()).triangles
    assert np.array_equal(t1, t2)
    assert t1.shape[0] == 2 * 7 * 5
    assert incircle_matrix(g, t1).max() <= 1e-9


def test_graph_structure():
    pts = np.random.default_rng(3).random((40, 2))
    g = geometry.graph_from_coords(pts)
    assert g.n_nodes == 40
    assert g.indptr[-1] == g.n_edges
    src, dst = g.edges()
    pairs = set(zip(src.tolist(), dst.tolist()))
    assert all((j, i) in pairs for i, j in pairs)
    assert all(i != j for i, j in pairs)
    for i in range(g.n_nodes):
        nb = g.neighbors(i)
        assert np.all(np.diff(nb) > 0)
    assert np.array_equal(g.edge_features(), pts[dst] - pts[src])
    assert np.array_equal(g.edge_feature(0, g.neighbors(0)[0]), pts[g.neighbors(0)[0]] - pts[0])
    assert g.undirected_edges().shape[0] * 2 == g.n_edges


def test_graph_from_adjacency():
    g = geometry.graph_from_adjacency(np.zeros((3, 2)), [[2, 1, 1], [], [0]])
    assert g.indptr.tolist() == [0, 2, 2, 3]
    assert g.indices.tolist() == [1, 2, 0]


def test_build_graph_rejects_bad_indices():
    tri = geometry.Triangulation(np.array([[0, 1, 5]]))
    with pytest.raises(DegenerateInput):
        geometry.build_graph(tri, np.random.default_rng(0).random((4, 2)))
