"""Batch phase: clustering, per-cluster Isomap + GP, and stitching into a global space."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .geometry import DisconnectedGraphError, GeodesicSet, PointCloud, build_knn_graph, geodesic_distances
from .gp import GpModel, default_grid, fit_hyperparams
from .spectral import Embedding, classical_mds, isomap_embed

log = logging.getLogger(__name__)


class ClusteringError(ValueError):
    pass


class UnderdeterminedTransformError(ValueError):
    def __init__(self, cluster: int, have: int, need: int):
        super().__init__(f"cluster {cluster} has {have} support point(s); at least {need} needed")
        self.cluster = cluster


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    p: int

    def members(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.labels == i)


@dataclass(frozen=True)
class GridSpec:
    """Hyperparameter grid, log-spaced and relative to each cluster's median geodesic."""

    ell_range: tuple = (0.1, 100.0)
    noise_range: tuple = (1e-4, 1.0)
    n_ell: int = 16
    n_noise: int = 8

    def build(self, geo: GeodesicSet):
        return default_grid(geo, self.n_ell, self.n_noise, self.ell_range, self.noise_range)


@dataclass(frozen=True)
class BatchParams:
    eps: float
    d: int = 2
    k_graph: int = 8
    k: int = 16
    l: int = 1
    ridge: float = 0.005
    grid: GridSpec = field(default_factory=GridSpec)
    min_cluster_size: int = 10
    max_clusters: int = 10


@dataclass(frozen=True, eq=False)
class ClusterModel:
    cloud: PointCloud
    geo: GeodesicSet
    embedding: Embedding
    gp: GpModel


@dataclass(frozen=True, eq=False)
class ManifoldAtlas:
    """Per-cluster models plus affine maps ``y = R x + t`` into the global space."""

    clusters: List[ClusterModel]
    R: List[np.ndarray]  # each (global_dim, d_i)
    t: List[np.ndarray]  # each (global_dim,)
    global_dim: int
    ridge: float
    support: np.ndarray  # ids of support points
    batch: PointCloud
    assignment: ClusterAssignment
    params: Optional[BatchParams] = None

    @property
    def p(self) -> int:
        return len(self.clusters)

    def to_global(self, i: int, x) -> np.ndarray:
        return self.R[i] @ np.asarray(x) + self.t[i]

    def global_coords(self) -> np.ndarray:
        """Global coordinates of every batch point, in batch order, (n, global_dim)."""
        out = np.empty((self.batch.n, self.global_dim))
        for i, cm in enumerate(self.clusters):
            out[self.assignment.members(i)] = (self.R[i] @ cm.embedding.coords + self.t[i][:, None]).T
        return out


def cluster_batch(cloud: PointCloud, eps: float, min_cluster_size: int = 10) -> ClusterAssignment:
    """Density clustering: connected components of the ``eps``-radius graph.

    Components smaller than ``min_cluster_size`` count as noise and are
    attached to the cluster of their nearest non-noise point, so the result
    partitions the batch.
    """
    if cloud.n < 2:
        raise ValueError("need at least two points to cluster")
    if eps <= 0:
        raise ValueError("eps must be positive")
    adj = cloud.tree.sparse_distance_matrix(cloud.tree, eps, output_type="coo_matrix")
    _, comp = connected_components(adj.tocsr(), directed=False)
    sizes = np.bincount(comp)
    big = np.flatnonzero(sizes >= min_cluster_size)
    if len(big) == 0:
        raise ClusteringError(
            f"every point is noise at eps={eps} (min_cluster_size={min_cluster_size}); increase eps"
        )
    # relabel by first member so labels are deterministic
    first = np.array([np.flatnonzero(comp == c)[0] for c in big])
    big = big[np.argsort(first)]
    labels = np.full(cloud.n, -1)
    for new, c in enumerate(big):
        labels[comp == c] = new
    noise = np.flatnonzero(labels < 0)
    if len(noise):
        core = np.flatnonzero(labels >= 0)
        _, nn = cloud.subset(core).tree.query(cloud.points[noise])
        labels[noise] = labels[core[nn]]
    return ClusterAssignment(labels, len(big))


def _extreme_pairs(D, count, largest):
    flat = D.ravel()
    count = min(count, flat.size)
    if count == 0:
        return np.empty(0, dtype=int)
    if largest:
        part = np.argpartition(-flat, count - 1)[:count]
    else:
        part = np.argpartition(flat, count - 1)[:count]
    return part


def build_support_set(clouds: Sequence[PointCloud], k: int, l: int) -> np.ndarray:
    """Ids of the ``k`` nearest and ``l`` farthest cross-cluster pairs, over all cluster pairs."""
    ids = []
    for i in range(len(clouds)):
        for j in range(i + 1, len(clouds)):
            a, b = clouds[i], clouds[j]
            n_pairs = a.n * b.n
            if k > n_pairs or l > n_pairs:
                warnings.warn(f"clusters {i},{j} have only {n_pairs} cross pairs; k={k}, l={l} clipped")
            D = cdist(a.points, b.points)
            for flat in (_extreme_pairs(D, k, False), _extreme_pairs(D, l, True)):
                r, c = np.unravel_index(flat, D.shape)
                ids.append(a.ids[r])
                ids.append(b.ids[c])
    if not ids:
        return np.empty(0, dtype=int)
    return np.unique(np.concatenate(ids))


def learn_transforms(GE, LDE, ridge: float, cluster: int = 0):
    """Ridge least squares for ``GE ~ R LDE + t``.

    ``GE`` is (dg, m) global support coordinates, ``LDE`` (d, m) the cluster's
    own coordinates for the same points. Returns ``(R, t)``.
    """
    GE = np.atleast_2d(np.asarray(GE, dtype=float))
    LDE = np.atleast_2d(np.asarray(LDE, dtype=float))
    d, m = LDE.shape
    if m < d + 1:
        raise UnderdeterminedTransformError(cluster, m, d + 1)
    A = np.vstack([LDE, np.ones((1, m))])
    W = np.linalg.solve(A @ A.T + ridge * np.eye(d + 1), A @ GE.T).T
    return W[:, :d], W[:, d]


def ridge_objective(GE, LDE, R, t, ridge: float) -> float:
    W = np.column_stack([R, t])
    resid = GE - (R @ LDE + t[:, None])
    return float(np.sum(resid * resid) + ridge * np.sum(W * W))


def fit_cluster(cloud: PointCloud, params: BatchParams) -> ClusterModel:
    """Isomap + GP fit for one cluster.

    Sparse clusters (typically freshly buffered drift points) may have a
    disconnected kNN graph; k_graph is then doubled until the graph connects.
    """
    k_graph = min(params.k_graph, cloud.n - 1)
    while True:
        try:
            graph = build_knn_graph(cloud, k_graph)
            break
        except DisconnectedGraphError:
            if k_graph >= cloud.n - 1:
                raise
            k_graph = min(2 * k_graph, cloud.n - 1)
            log.warning("cluster of %d points disconnected; retrying with k_graph=%d", cloud.n, k_graph)
    geo = geodesic_distances(graph)
    emb = isomap_embed(geo, params.d)
    gp = fit_hyperparams(emb, params.grid.build(geo))
    return ClusterModel(cloud, geo, emb, gp)


def batch_phase(cloud: PointCloud, params: BatchParams,
                clusterer: Optional[Callable[[PointCloud], ClusterAssignment]] = None) -> ManifoldAtlas:
    """Cluster, embed and fit each cluster, then learn the stitching transforms."""
    if clusterer is None:
        assignment = cluster_batch(cloud, params.eps, params.min_cluster_size)
    else:
        assignment = clusterer(cloud)
    if assignment.p > params.max_clusters:
        warnings.warn(f"{assignment.p} clusters exceed the cap of {params.max_clusters}; consider a larger eps")

    clusters = [fit_cluster(cloud.subset(assignment.members(i)), params) for i in range(assignment.p)]
    dg = max(cm.embedding.dim for cm in clusters)

    if assignment.p == 1:
        d = clusters[0].embedding.dim
        return ManifoldAtlas(clusters, [np.eye(d)], [np.zeros(d)], d, params.ridge,
                             np.empty(0, dtype=cloud.ids.dtype), cloud, assignment, params)

    support = build_support_set([cm.cloud for cm in clusters], params.k, params.l)
    row_of = {pid: r for r, pid in enumerate(cloud.ids)}
    sup_rows = np.array([row_of[s] for s in support])
    sup_pts = cloud.points[sup_rows]
    sq = cdist(sup_pts, sup_pts, "sqeuclidean")
    np.fill_diagonal(sq, 0.0)
    GE = classical_mds(sq, dg).T  # (dg, m)

    R, t = [], []
    for i, cm in enumerate(clusters):
        local = {pid: r for r, pid in enumerate(cm.cloud.ids)}
        mask = np.array([s in local for s in support])
        cols = np.array([local[s] for s in support[mask]], dtype=int)
        Ri, ti = learn_transforms(GE[:, mask], cm.embedding.coords[:, cols], params.ridge, cluster=i)
        R.append(Ri)
        t.append(ti)
    return ManifoldAtlas(clusters, R, t, dg, params.ridge, support, cloud, assignment, params)
