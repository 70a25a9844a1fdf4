"""Procrustes error, GP/S-Isomap equivalence, kernel baseline, convergence and batch-size bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .data import LabeledDataset, SwissRollParams, gen_swiss_roll
from .geometry import (GeodesicSet, PointCloud, build_knn_graph, geodesic_distances,
                       geodesic_set_from_distances, stream_geodesics)
from .gp import default_grid, fit_hyperparams, make_model, noise_alpha, stream_kernel
from .spectral import Embedding, isomap_embed
from .streaming import s_isomap_projection


class DegenerateConfigurationError(ValueError):
    pass


def procrustes_error(A, B) -> float:
    """Residual of the best similarity fit ``s R B + t`` to ``A``, relative to ``|A - mean(A)|_F``.

    ``A`` and ``B`` are (d, m) with points as columns. ``R`` is any orthogonal
    matrix, so reflections are allowed.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    if A.shape[1] < 2:
        raise ValueError("need at least two points")
    Ac = A - A.mean(axis=1, keepdims=True)
    Bc = B - B.mean(axis=1, keepdims=True)
    na = np.sum(Ac * Ac)
    nb = np.sum(Bc * Bc)
    if na == 0 or nb == 0:
        raise DegenerateConfigurationError("all points coincide in one of the configurations")
    U, S, Vt = np.linalg.svd(Ac @ Bc.T)
    # residual formed explicitly; |A|^2 - (sum S)^2/|B|^2 cancels catastrophically near zero
    resid = Ac - (S.sum() / nb) * (U @ Vt) @ Bc
    return math.sqrt(np.sum(resid * resid) / na)


def procrustes_align(A, B):
    """Return ``(s, R, t)`` minimizing ``|s R B + t - A|_F``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    ma, mb = A.mean(axis=1, keepdims=True), B.mean(axis=1, keepdims=True)
    Ac, Bc = A - ma, B - mb
    U, S, Vt = np.linalg.svd(Ac @ Bc.T)
    R = U @ Vt
    s = S.sum() / np.sum(Bc * Bc)
    t = (ma - s * R @ mb).ravel()
    return s, R, t


# -- GP / S-Isomap equivalence ------------------------------------------------

def gp_means(embedding: Embedding, gsq_stream, ell: float, sigma_n_sq: float) -> np.ndarray:
    """GP predictive means for many stream points at once; (d, m).

    ``ell = inf`` returns the leading-order direction ``-beta^T g^2 / 2`` of
    the mean, which itself shrinks like ``1/ell^2`` because ``beta^T 1 = 0``.
    """
    gsq_stream = np.atleast_2d(np.asarray(gsq_stream, dtype=float))
    if np.isinf(ell):
        beta = embedding.eigvecs * (noise_alpha(sigma_n_sq) * np.sqrt(embedding.eigvals))[None, :]
        return -0.5 * beta.T @ gsq_stream.T
    model = make_model(embedding, ell, sigma_n_sq)
    return model.beta.T @ stream_kernel(gsq_stream, ell).T


def isomap_projections(embedding: Embedding, Gsq, gsq_stream) -> np.ndarray:
    """``sqrt(lambda_i) q_i^T f`` for each stream point; (d, m)."""
    return np.column_stack([s_isomap_projection(embedding, Gsq, g) for g in np.atleast_2d(gsq_stream)])


def equivalence_test(embedding: Embedding, Gsq, gsq_stream, ell_series,
                     sigma_n_sq: float = 0.01) -> np.ndarray:
    """Procrustes error between GP means and S-Isomap projections at each length scale.

    ``Gsq`` is the batch squared-geodesic matrix the embedding came from and
    ``gsq_stream`` an (m, n) stack of stream-point squared geodesics.
    """
    tau_iso = isomap_projections(embedding, Gsq, gsq_stream)
    return np.array([procrustes_error(tau_iso, gp_means(embedding, gsq_stream, ell, sigma_n_sq))
                     for ell in ell_series])


def axis_ratios(embedding: Embedding, Gsq, gsq_stream, ell: float,
                sigma_n_sq: float = 0.01) -> np.ndarray:
    """Per-point ratio of GP mean to S-Isomap projection; (d, m)."""
    return gp_means(embedding, gsq_stream, ell, sigma_n_sq) / isomap_projections(embedding, Gsq, gsq_stream)


# -- kernel baseline ----------------------------------------------------------

def _fit_and_predict(geo: GeodesicSet, d: int, gsq_stream, grid=None) -> np.ndarray:
    emb = isomap_embed(geo, d)
    model = fit_hyperparams(emb, grid if grid is not None else default_grid(geo))
    return model.beta.T @ stream_kernel(gsq_stream, model.ell).T


def geodesic_kernel_error(cloud: PointCloud, stream: PointCloud, stream_truth, d: int = 2,
                          k_graph: int = 8, grid=None) -> float:
    """Stream-point Procrustes error against ground truth, geodesic kernel."""
    geo = geodesic_distances(build_knn_graph(cloud, k_graph))
    gsq = np.vstack([stream_geodesics(p, cloud, geo, k_graph) for p in stream.points])
    pred = _fit_and_predict(geo, d, gsq, grid)
    return procrustes_error(np.asarray(stream_truth).T, pred)


def euclidean_kernel_baseline(cloud: PointCloud, stream: PointCloud, stream_truth, d: int = 2,
                              grid=None) -> float:
    """Same GP pipeline with straight-line distances in the observed space."""
    geo = geodesic_set_from_distances(cdist(cloud.points, cloud.points))
    gsq = cdist(stream.points, cloud.points, "sqeuclidean")
    pred = _fit_and_predict(geo, d, gsq, grid)
    return procrustes_error(np.asarray(stream_truth).T, pred)


def batch_fraction_sweep(dataset: LabeledDataset, fractions: Sequence[float], seed: int = 0,
                         d: int = 2, k_graph: int = 8) -> dict:
    """Geodesic vs Euclidean kernel error as the batch share of ``dataset`` grows."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(dataset.n)
    geo_err, euc_err = [], []
    for f in fractions:
        n_b = int(round(f * dataset.n))
        b, s = order[:n_b], order[n_b:]
        batch, stream = dataset.subset(b), dataset.subset(s)
        geo_err.append(geodesic_kernel_error(batch.cloud, stream.cloud, stream.truth, d, k_graph))
        euc_err.append(euclidean_kernel_baseline(batch.cloud, stream.cloud, stream.truth, d))
    return {"fraction": np.asarray(fractions, float), "geodesic": np.array(geo_err),
            "euclidean": np.array(euc_err)}


# -- convergence --------------------------------------------------------------

def isomap_error(dataset: LabeledDataset, d: int = 2, k_graph: int = 8) -> float:
    """Procrustes error of a full Isomap run against the dataset's ground truth."""
    graph = build_knn_graph(dataset.cloud, k_graph, largest_component=True)
    emb = isomap_embed(geodesic_distances(graph), d)
    return procrustes_error(dataset.truth[graph.index].T, emb.coords)


def convergence_curve(params: SwissRollParams, sizes: Sequence[int], seeds: Sequence[int] = (0,),
                      d: int = 2, k_graph: int = 8) -> np.ndarray:
    """Isomap error vs batch size; returns a (len(sizes), len(seeds)) array.

    ``params.n_per_mode`` is overridden by each size; with several modes the
    size is split evenly between them.
    """
    out = np.empty((len(sizes), len(seeds)))
    for i, n in enumerate(sizes):
        per_mode = max(1, int(n) // len(params.modes))
        for j, seed in enumerate(seeds):
            ds = gen_swiss_roll(SwissRollParams(params.modes, per_mode, seed, params.a, params.theta0))
            out[i, j] = isomap_error(ds, d, k_graph)
    return out


# -- theoretical batch-size threshold ----------------------------------------

@dataclass(frozen=True)
class ThresholdParams:
    """Inputs of the delta-sampling batch-size bound.

    ``delta`` may be omitted and derived as ``lambda2 * epsilon / 4``;
    ``ball_count`` (V / V~(delta/4)) may be replaced by the manifold ``volume``.
    """

    alpha_tilde: float = 1.0
    mu: float = 1.0
    delta: Optional[float] = None
    eta_d: float = 4.0 * math.pi / 3.0
    ball_count: Optional[float] = None
    dim: int = 3
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    epsilon: Optional[float] = None
    volume: Optional[float] = None

    def resolved_delta(self) -> float:
        if self.delta is not None:
            return float(self.delta)
        if self.lambda2 is None or self.epsilon is None:
            raise ValueError("give delta, or both lambda2 and epsilon")
        return self.lambda2 * self.epsilon / 4.0


def min_ball_volume(radius: float, eta_d: float, dim: int) -> float:
    return eta_d * radius ** dim


def theoretical_threshold(params: ThresholdParams) -> float:
    """``n0 = (1/alpha) log(ball_count / mu) / V~(delta/2)`` with natural log."""
    delta = params.resolved_delta()
    for name in ("alpha_tilde", "mu", "eta_d"):
        if getattr(params, name) <= 0:
            raise ValueError(f"{name} must be positive")
    if not 0 < params.alpha_tilde <= 1 or not 0 < params.mu <= 1:
        raise ValueError("alpha_tilde and mu must lie in (0, 1]")
    if delta <= 0:
        raise ValueError("delta must be positive")
    half = min_ball_volume(delta / 2.0, params.eta_d, params.dim)
    quarter = min_ball_volume(delta / 4.0, params.eta_d, params.dim)
    if half <= 0 or quarter <= 0:
        raise ValueError("non-positive metric-ball volume")
    if params.ball_count is not None:
        balls = float(params.ball_count)
    elif params.volume is not None:
        balls = params.volume / quarter
    else:
        raise ValueError("give ball_count or volume")
    if balls < 1:
        raise ValueError("ball_count must be at least 1")
    return math.log(balls / params.mu) / half / params.alpha_tilde


def estimate_ball_count(points, radius: float) -> int:
    """Greedy covering: how many ``radius``-balls centred on sample points cover the sample."""
    points = np.asarray(points, dtype=float)
    tree = PointCloud(points).tree
    covered = np.zeros(len(points), dtype=bool)
    count = 0
    for i in range(len(points)):
        if covered[i]:
            continue
        covered[tree.query_ball_point(points[i], radius)] = True
        count += 1
    return count
