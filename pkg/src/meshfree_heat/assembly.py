"""Global sparse system: PDE rows, boundary rows, RCM ordering."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.io
import scipy.sparse as sp

from .pointcloud import DIRICHLET, INTERIOR, NEUMANN, PointCloud
from .rbf_operator import StencilWeights


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class Permutation:
    """``forward[new] = old`` and ``inverse[old] = new``."""

    forward: np.ndarray
    inverse: np.ndarray

    @classmethod
    def from_order(cls, order) -> "Permutation":
        order = np.asarray(order, dtype=np.intp)
        inv = np.empty_like(order)
        inv[order] = np.arange(len(order))
        return cls(order, inv)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls.from_order(np.arange(n))

    def __len__(self) -> int:
        return len(self.forward)

    def to_permuted(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self.forward]

    def to_original(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self.inverse]

    def matrix(self, a) -> sp.csr_matrix:
        """P A P^T in the permuted numbering."""
        a = sp.csr_matrix(a)
        out = a[self.forward][:, self.forward].tocsr()
        out.sort_indices()
        return out


def bandwidth(a) -> int:
    a = sp.coo_matrix(a)
    if a.nnz == 0:
        return 0
    return int(np.abs(a.row.astype(np.int64) - a.col).max())


def stencil_adjacency(n: int, nodes: np.ndarray, members: np.ndarray) -> sp.csr_matrix:
    """Symmetrized stencil graph (pattern only, no self loops)."""
    rows = np.repeat(np.asarray(nodes), members.shape[1])
    cols = members.ravel()
    keep = rows != cols
    g = sp.coo_matrix((np.ones(keep.sum(), dtype=np.int8), (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    g = (g + g.T).tocsr()
    g.data[:] = 1
    g.sort_indices()
    return g


@numba.njit(cache=True)
def _cuthill_mckee(n, indptr, indices, degree, start_order):
    order = np.empty(n, dtype=np.int64)
    visited = np.zeros(n, dtype=np.bool_)
    head = 0
    tail = 0
    for s in start_order:
        if visited[s]:
            continue
        visited[s] = True
        order[tail] = s
        tail += 1
        while head < tail:
            v = order[head]
            head += 1
            # indices within a row are pre-sorted by (degree, index)
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if not visited[w]:
                    visited[w] = True
                    order[tail] = w
                    tail += 1
    return order


def rcm_ordering(adjacency) -> Permutation:
    """Reverse Cuthill-McKee on an undirected graph given as a sparse pattern.

    Each component starts at its lowest-degree node (ties: lowest index) and
    neighbours are visited in (degree, index) order, so the result is fully
    deterministic.
    """
    g = sp.csr_matrix(adjacency)
    g = ((g + g.T) != 0).astype(np.int8).tocsr()
    g.setdiag(0)
    g.eliminate_zeros()
    n = g.shape[0]
    degree = np.diff(g.indptr).astype(np.int64)
    rows = np.repeat(np.arange(n), degree)
    cols = g.indices.astype(np.int64)
    key = np.lexsort((cols, degree[cols], rows))
    indices = cols[key]
    start_order = np.lexsort((np.arange(n), degree)).astype(np.int64)
    order = _cuthill_mckee(n, g.indptr.astype(np.int64), indices, degree, start_order)
    return Permutation.from_order(order[::-1].copy())


@dataclass
class AssembledSystem:
    matrix: sp.csr_matrix  # permuted numbering
    rhs: np.ndarray  # permuted numbering
    perm: Permutation
    cloud: PointCloud

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def original_matrix(self) -> sp.csr_matrix:
        return Permutation.from_order(self.perm.inverse).matrix(self.matrix)

    def original_rhs(self) -> np.ndarray:
        return self.perm.to_original(self.rhs)


def _rows(cloud: PointCloud, weights: StencilWeights, source):
    n = len(cloud)
    kind = cloud.kind
    need = np.flatnonzero(kind != DIRICHLET)
    have = np.zeros(n, dtype=bool)
    have[weights.nodes] = True
    missing = need[~have[need]]
    if missing.size:
        raise AssemblyError(f"no stencil weights for node {int(missing[0])} ({int(missing.size)} missing)")
    wk = kind[weights.nodes]
    rows, cols, vals = [], [], []
    q = weights.q
    sel = wk == INTERIOR
    rows.append(np.repeat(weights.nodes[sel], q))
    cols.append(weights.members[sel].ravel())
    vals.append(weights.laplacian[sel].ravel())
    sel = wk == NEUMANN
    if np.any(sel):
        nrm = cloud.normals[weights.nodes[sel]]
        rows.append(np.repeat(weights.nodes[sel], q))
        cols.append(weights.members[sel].ravel())
        vals.append(np.einsum("nd,ndq->nq", nrm, weights.gradient[sel]).ravel())
    dn = cloud.dirichlet
    rows.append(dn)
    cols.append(dn)
    vals.append(np.ones(len(dn)))
    rhs = np.zeros(n)
    if source is not None:
        src = np.broadcast_to(np.asarray(source, dtype=float), (n,))
        rhs[kind == INTERIOR] = -src[kind == INTERIOR]
    rhs[kind != INTERIOR] = cloud.value[kind != INTERIOR]
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), rhs


def assemble_steady(
    cloud: PointCloud, weights: StencilWeights, source=None, perm: Permutation | None = None
) -> AssembledSystem:
    """Discrete  lap T = -source  with Dirichlet/Neumann boundary rows.

    If ``perm`` is omitted an RCM ordering of the stencil graph is computed.
    """
    n = len(cloud)
    rows, cols, vals, rhs = _rows(cloud, weights, source)
    if perm is None:
        perm = rcm_ordering(stencil_adjacency(n, rows, cols[:, None]))
    inv = perm.inverse
    a = sp.csr_matrix((vals, (inv[rows], inv[cols])), shape=(n, n))
    a.sort_indices()
    return AssembledSystem(a, perm.to_permuted(rhs), perm, cloud)


def laplacian_matrix(
    cloud: PointCloud, weights: StencilWeights, perm: Permutation | None = None
) -> sp.csr_matrix:
    """Laplacian weights on interior rows, empty rows elsewhere."""
    n = len(cloud)
    sel = cloud.kind[weights.nodes] == INTERIOR
    need = cloud.interior
    have = np.zeros(n, dtype=bool)
    have[weights.nodes[sel]] = True
    if not np.all(have[need]):
        raise AssemblyError(f"no stencil weights for node {int(need[~have[need]][0])}")
    rows = np.repeat(weights.nodes[sel], weights.q)
    cols = weights.members[sel].ravel()
    vals = weights.laplacian[sel].ravel()
    if perm is not None:
        rows, cols = perm.inverse[rows], perm.inverse[cols]
    a = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    a.sort_indices()
    return a


def write_matrix_market(path, system: AssembledSystem) -> None:
    scipy.io.mmwrite(str(path), system.matrix, comment="permuted (RCM) numbering")
