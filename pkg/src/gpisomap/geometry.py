"""Neighborhood graphs, geodesic distances and double centering.

Everything downstream (spectral embedding, the geodesic kernel, stream
mapping) consumes the :class:`GeodesicSet` produced here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial import cKDTree

# Edge weights must stay strictly positive; duplicate points would give 0.
MIN_EDGE_WEIGHT = 1e-12


class DisconnectedGraphError(ValueError):
    """Raised when the kNN graph has more than one connected component."""

    def __init__(self, n_components: int, k_graph: int):
        super().__init__(
            f"kNN graph with k_graph={k_graph} has {n_components} connected "
            "components; raise k_graph or pass largest_component=True"
        )
        self.n_components = n_components


@dataclass(frozen=True, eq=False)
class PointCloud:
    """n x D observed points with identifiers and optional labels."""

    points: np.ndarray
    ids: np.ndarray = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be a non-empty n x D matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite entries")
        ids = np.arange(pts.shape[0]) if self.ids is None else np.asarray(self.ids)
        if ids.shape != (pts.shape[0],):
            raise ValueError("ids must have one entry per point")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("ids must be unique")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (pts.shape[0],):
                raise ValueError("labels must have one entry per point")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    def subset(self, index) -> "PointCloud":
        index = np.asarray(index)
        labels = None if self.labels is None else self.labels[index]
        return PointCloud(self.points[index], self.ids[index], labels)

    @staticmethod
    def concat(clouds: Sequence["PointCloud"]) -> "PointCloud":
        labels = None
        if all(c.labels is not None for c in clouds):
            labels = np.concatenate([c.labels for c in clouds])
        return PointCloud(
            np.vstack([c.points for c in clouds]),
            np.concatenate([c.ids for c in clouds]),
            labels,
        )


@dataclass(frozen=True, eq=False)
class NeighborhoodGraph:
    """Symmetric sparse kNN graph with Euclidean edge weights.

    ``index`` maps graph vertices back to rows of the source cloud; it is the
    identity unless the largest component was extracted.
    """

    adjacency: csr_matrix
    k_graph: int
    index: np.ndarray

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)


@dataclass(frozen=True, eq=False)
class GeodesicSet:
    """Geodesic matrix ``G``, its elementwise square ``Gsq`` and ``B = -H Gsq H / 2``."""

    G: np.ndarray
    Gsq: np.ndarray
    B: np.ndarray
    index: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.G.shape[0]

    def median_distance(self) -> float:
        iu = np.triu_indices(self.n, k=1)
        if len(iu[0]) == 0:
            return 0.0
        return float(np.median(self.G[iu]))


def build_knn_graph(cloud: PointCloud, k_graph: int, largest_component: bool = False) -> NeighborhoodGraph:
    """Connect each point to its ``k_graph`` nearest neighbors, symmetrized by union."""
    n = cloud.n
    if k_graph < 1 or k_graph >= n:
        raise ValueError(f"k_graph must satisfy 1 <= k_graph < n (k_graph={k_graph}, n={n})")
    dist, nbr = cloud.tree.query(cloud.points, k=k_graph + 1)
    # Column 0 is normally the point itself; with duplicates it may be a twin,
    # so drop self-matches explicitly rather than by position.
    rows = np.repeat(np.arange(n), k_graph + 1)
    cols = nbr.ravel()
    w = dist.ravel()
    keep = rows != cols
    rows, cols, w = rows[keep], cols[keep], np.maximum(w[keep], MIN_EDGE_WEIGHT)
    # Points whose self-match was not returned have k_graph+1 non-self hits;
    # trim to the k_graph nearest per row.
    order = np.lexsort((w, rows))
    rows, cols, w = rows[order], cols[order], w[order]
    rank = np.arange(len(rows)) - np.searchsorted(rows, rows)
    sel = rank < k_graph
    rows, cols, w = rows[sel], cols[sel], w[sel]

    directed = csr_matrix((w, (rows, cols)), shape=(n, n))
    adjacency = directed.maximum(directed.T).tocsr()

    n_comp, comp = connected_components(adjacency, directed=False)
    index = np.arange(n)
    if n_comp > 1:
        if not largest_component:
            raise DisconnectedGraphError(n_comp, k_graph)
        biggest = np.argmax(np.bincount(comp))
        index = np.flatnonzero(comp == biggest)
        adjacency = adjacency[index][:, index].tocsr()
    return NeighborhoodGraph(adjacency=adjacency, k_graph=k_graph, index=index)


def center(M: np.ndarray) -> np.ndarray:
    """Return ``H M H`` with ``H = I - 11^T/n`` without forming ``H``."""
    M = np.asarray(M, dtype=float)
    row = M.mean(axis=1, keepdims=True)
    col = M.mean(axis=0, keepdims=True)
    return M - row - col + M.mean()


def double_center(Gsq: np.ndarray) -> np.ndarray:
    """Inner-product matrix ``B = -H Gsq H / 2`` from squared distances."""
    B = -0.5 * center(Gsq)
    return 0.5 * (B + B.T)


def geodesic_set_from_distances(G: np.ndarray, index=None) -> GeodesicSet:
    G = np.asarray(G, dtype=float)
    Gsq = G * G
    return GeodesicSet(G=G, Gsq=Gsq, B=double_center(Gsq),
                       index=np.arange(G.shape[0]) if index is None else index)


def geodesic_distances(graph: NeighborhoodGraph) -> GeodesicSet:
    """All-pairs shortest paths over the sparse graph (repeated Dijkstra)."""
    G = shortest_path(graph.adjacency, method="D", directed=False)
    if not np.all(np.isfinite(G)):
        raise ValueError("graph is disconnected: some geodesic distances are infinite")
    # Both triangles hold valid path lengths; take the shorter so G is exactly symmetric.
    G = np.minimum(G, G.T)
    np.fill_diagonal(G, 0.0)
    return geodesic_set_from_distances(G, index=graph.index)


def stream_geodesics(point, cloud: PointCloud, geo: GeodesicSet, k_graph: int) -> np.ndarray:
    """Squared geodesic distances from an out-of-batch point to every batch point.

    The point is attached to its ``k_graph`` nearest batch neighbors ``j``;
    ``g_i = min_j (|point - y_j| + G[i, j])``.
    """
    point = np.asarray(point, dtype=float).ravel()
    if point.shape[0] != cloud.dim:
        raise ValueError(f"point has dimension {point.shape[0]}, cloud has {cloud.dim}")
    if geo.n != cloud.n:
        raise ValueError("geodesic set was not built from this cloud")
    k = min(k_graph, cloud.n)
    dist, nbr = cloud.tree.query(point, k=k)
    dist = np.atleast_1d(dist)
    nbr = np.atleast_1d(nbr)
    g = (geo.G[:, nbr] + dist[None, :]).min(axis=1)
    return g * g
