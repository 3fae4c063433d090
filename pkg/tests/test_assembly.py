import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from meshfree_heat.assembly import (
    AssemblyError,
    Permutation,
    assemble_steady,
    bandwidth,
    laplacian_matrix,
    rcm_ordering,
    stencil_adjacency,
    write_matrix_market,
)
from meshfree_heat.linalg import bicgstab, ilu0
from meshfree_heat.neighbors import SpatialIndex, cloud_size, select_clouds
from meshfree_heat.pointcloud import DIRICHLET, INTERIOR, PointCloud, generate_annulus
from meshfree_heat.rbf_operator import stencil_weights


def path_graph(order):
    # path 0-1-2 with nodes stored in the given presentation order
    pos = {v: i for i, v in enumerate(order)}
    n = len(order)
    rows, cols = [], []
    for a in range(n - 1):
        rows += [pos[a], pos[a + 1]]
        cols += [pos[a + 1], pos[a]]
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def test_rcm_path_graph():
    g = path_graph([2, 0, 1])
    # presented order puts the two path ends next to each other: bandwidth 2
    assert bandwidth(g) == 2
    p = rcm_ordering(g)
    assert bandwidth(p.matrix(g)) == 1


def test_rcm_is_permutation_and_deterministic(rng):
    g = sp.random(50, 50, density=0.05, random_state=rng, format="csr")
    p = rcm_ordering(g)
    assert np.array_equal(np.sort(p.forward), np.arange(50))
    assert np.array_equal(p.inverse[p.forward], np.arange(50))
    assert np.array_equal(rcm_ordering(g).forward, p.forward)


def test_rcm_disconnected_components():
    g = sp.block_diag([path_graph([0, 1, 2]), path_graph([0, 1, 2, 3])]).tocsr()
    p = rcm_ordering(g)
    assert sorted(p.forward) == list(range(7))
    assert bandwidth(p.matrix(g)) == 1


@given(seed=st.integers(0, 2**31), n=st.integers(20, 200), q=st.integers(3, 12))
def test_rcm_never_widens_stencil_graphs(seed, n, q):
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    members = select_clouds(SpatialIndex(pts), np.arange(n), min(q, n))
    # present the nodes in a random order
    shuffle = rng.permutation(n)
    g = stencil_adjacency(n, np.arange(n), members)
    g = Permutation.from_order(shuffle).matrix(g)
    assert bandwidth(rcm_ordering(g).matrix(g)) <= bandwidth(g)


def test_rcm_200_node_stencil_graph(rng):
    pts = rng.random((200, 2))
    members = select_clouds(SpatialIndex(pts), np.arange(200), 12)
    g = stencil_adjacency(200, np.arange(200), members)
    assert bandwidth(rcm_ordering(g).matrix(g)) <= bandwidth(g)


@pytest.fixture(scope="module")
def small():
    cloud = generate_annulus(spacing=0.06)
    return cloud, stencil_weights(cloud, 3)


def test_structure(small):
    cloud, w = small
    system = assemble_steady(cloud, w)
    a = system.original_matrix()
    n = len(cloud)
    assert a.shape == (n, n) and len(system.rhs) == n
    nnz = np.diff(a.indptr)
    assert np.all(nnz[cloud.dirichlet] == 1)
    assert np.all(a.diagonal()[cloud.dirichlet] == 1.0)
    assert np.all(nnz[cloud.interior] == cloud_size(3, 2))
    assert np.allclose(system.original_rhs()[cloud.dirichlet], cloud.value[cloud.dirichlet])
    for r in range(n):
        cols = a.indices[a.indptr[r] : a.indptr[r + 1]]
        assert np.all(np.diff(cols) > 0)


def test_interior_rows_annihilate_constants(small):
    cloud, w = small
    a = assemble_steady(cloud, w).original_matrix()
    res = a @ np.ones(len(cloud))
    norms = np.sqrt(np.asarray(a.multiply(a).sum(axis=1)).ravel())
    it = cloud.interior
    assert np.all(np.abs(res[it]) <= 1e-8 * norms[it])


def test_source_sign(small):
    cloud, w = small
    s = assemble_steady(cloud, w, source=3.0)
    rhs = s.original_rhs()
    assert np.all(rhs[cloud.interior] == -3.0)


def test_rcm_reduces_global_bandwidth(small):
    cloud, w = small
    permuted = assemble_steady(cloud, w)
    plain = assemble_steady(cloud, w, perm=Permutation.identity(len(cloud)))
    assert bandwidth(permuted.matrix) <= bandwidth(plain.matrix)


def test_permutation_does_not_change_solution(small):
    cloud, w = small
    sols = []
    for perm in (None, Permutation.identity(len(cloud))):
        s = assemble_steady(cloud, w, perm=perm)
        x, st_ = bicgstab(s.matrix, s.rhs, ilu0(s.matrix), tol=1e-12)
        assert st_.converged
        sols.append(s.perm.to_original(x))
    assert np.allclose(sols[0], sols[1], atol=1e-8)


def test_all_dirichlet_chain():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    cloud = PointCloud(pts, [DIRICHLET] * 3, [1.0, -2.0, 5.0])
    from meshfree_heat.rbf_operator import StencilWeights, PhsKernel

    empty = StencilWeights(np.zeros(0, int), np.zeros((0, 1), int), np.zeros((0, 1)), np.zeros((0, 2, 1)), 2, PhsKernel())
    s = assemble_steady(cloud, empty)
    x, st_ = bicgstab(s.matrix, s.rhs, ilu0(s.matrix))
    assert np.array_equal(s.perm.to_original(x), [1.0, -2.0, 5.0])


def test_missing_weights_named(small):
    cloud, _ = small
    w = stencil_weights(cloud, 3, nodes=cloud.interior[1:])
    with pytest.raises(AssemblyError, match=str(int(cloud.interior[0]))):
        assemble_steady(cloud, w)


def test_laplacian_matrix_exact_on_quadratic():
    cloud = generate_annulus(spacing=0.05)
    w = stencil_weights(cloud, 2)
    lap = laplacian_matrix(cloud, w)
    x = cloud.points[:, 0]
    out = lap @ x**2
    assert np.allclose(out[cloud.interior], 2.0, atol=1e-6)
    assert np.all(out[cloud.boundary] == 0)
    assert np.allclose((lap @ np.ones(len(cloud)))[cloud.interior], 0.0, atol=1e-6)
    assert lap.nnz <= len(cloud) * w.q


def test_laplacian_matrix_permuted(small):
    cloud, w = small
    p = rcm_ordering(stencil_adjacency(len(cloud), w.nodes, w.members))
    a = laplacian_matrix(cloud, w)
    b = laplacian_matrix(cloud, w, p)
    x = np.random.default_rng(0).random(len(cloud))
    assert np.allclose(p.to_original(b @ p.to_permuted(x)), a @ x)


def test_matrix_market_dump(tmp_path, small):
    import scipy.io

    cloud, w = small
    s = assemble_steady(cloud, w)
    path = tmp_path / "a.mtx"
    write_matrix_market(path, s)
    back = scipy.io.mmread(str(path)).tocsr()
    assert abs(back - s.matrix).max() == 0
