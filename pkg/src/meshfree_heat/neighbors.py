"""Stencil (cloud) selection and local coordinate conditioning."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.spatial import cKDTree

# extra candidates fetched from the tree so ties at the q-th distance can be
# resolved by node index
_TIE_SLACK = 8


@dataclass(frozen=True)
class Cloud:
    center: int
    members: np.ndarray  # center first, then ascending distance

    @property
    def q(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class ScaleShift:
    offset: np.ndarray
    scale: float

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.offset) / self.scale


class SpatialIndex:
    """k-d tree over node coordinates with deterministic tie-breaking."""

    def __init__(self, points):
        self.points = np.ascontiguousarray(getattr(points, "points", points), dtype=float)
        if self.points.shape[0] < 1:
            raise ValueError("cannot index an empty point set")
        self._tree = cKDTree(self.points)

    def __len__(self) -> int:
        return self.points.shape[0]

    def nearest(self, x) -> int:
        return int(self.k_nearest(np.atleast_2d(x), 1)[0, 0])

    def k_nearest(self, queries: np.ndarray, k: int) -> np.ndarray:
        """Indices of the k nearest nodes for each query row, sorted by (distance, index)."""
        n = len(self)
        if k > n:
            raise ValueError(f"requested {k} neighbours but only {n} nodes are available")
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        kk = min(n, k + _TIE_SLACK)
        out = np.empty((len(queries), k), dtype=np.intp)
        for s in range(0, len(queries), 8192):
            qs = queries[s : s + 8192]
            _, idx = self._tree.query(qs, k=kk)
            idx = idx.reshape(len(qs), kk)
            # recompute distances from coordinates so equal distances compare equal
            diff = self.points[idx] - qs[:, None, :]
            dist = np.einsum("ijk,ijk->ij", diff, diff)
            order = np.lexsort((idx, dist), axis=-1)
            out[s : s + 8192] = np.take_along_axis(idx, order, axis=1)[:, :k]
        return out


def build_index(cloud) -> SpatialIndex:
    return SpatialIndex(cloud)


def cloud_size(degree: int, dim: int) -> int:
    """Stencil size: twice the number of monomials of total degree <= ``degree``."""
    if degree < 0 or dim not in (2, 3):
        raise ValueError("need degree >= 0 and dim in {2, 3}")
    return 2 * comb(degree + dim, degree)


def select_clouds(index: SpatialIndex, centers, q: int) -> np.ndarray:
    """(len(centers), q) member table; each row starts with its centre."""
    centers = np.asarray(centers, dtype=np.intp).reshape(-1)
    members = index.k_nearest(index.points[centers], q)
    # a coincident-distance tie could in principle put another node ahead of the centre
    first = members[:, 0] != centers
    if np.any(first):
        for row in np.flatnonzero(first):
            m = members[row]
            pos = np.flatnonzero(m == centers[row])
            m = np.concatenate([[centers[row]], np.delete(m, pos)])[:q]
            members[row] = m
    return members


def select_cloud(index: SpatialIndex, cloud, center: int, q: int) -> Cloud:
    n = len(index)
    if q > n:
        raise ValueError(f"cloud needs {q} nodes but only {n} are available")
    return Cloud(int(center), select_clouds(index, [center], q)[0])


def scale_shift(coords: np.ndarray) -> tuple[np.ndarray, ScaleShift]:
    """Map a cloud into [0, 1]^d with one common scale for all axes."""
    coords = np.asarray(coords, dtype=float)
    lo = coords.min(axis=0)
    extent = coords.max(axis=0) - lo
    scale = float(extent.max())
    if not scale > 0:
        raise ValueError("cannot scale a cloud whose points all coincide")
    t = ScaleShift(lo, scale)
    return t.apply(coords), t


def scale_shift_batch(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`scale_shift` over a (n, q, d) stack of clouds."""
    lo = coords.min(axis=1)
    scale = (coords.max(axis=1) - lo).max(axis=1)
    if np.any(scale <= 0):
        bad = int(np.flatnonzero(scale <= 0)[0])
        raise ValueError(f"cloud {bad} has all points coincident")
    return (coords - lo[:, None, :]) / scale[:, None, None], lo, scale
