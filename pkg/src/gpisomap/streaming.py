"""Streaming phase: per-point GP scoring, variance gating and re-learning.

Also holds the baseline S-Isomap least-squares mapping used for comparison.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .geometry import PointCloud, stream_geodesics
from .gp import gp_predict
from .manifold import BatchParams, ManifoldAtlas, batch_phase
from .spectral import Embedding

log = logging.getLogger(__name__)

UNASSIGNED = -1


def s_isomap_f(Gsq, gsq_star, variant: str = "simple") -> np.ndarray:
    """Right-hand side ``f`` of ``X^T x = f`` for a stream point.

    ``simple``: ``f_i = (mean_j g_ij^2 - g_i*^2) / 2``. ``incremental`` adds the
    two centering terms ``(mean g_*^2 - mean G^2) / 2``; they shift every entry
    equally, so they vanish against eigenvectors orthogonal to ones.
    """
    row_mean = Gsq.mean(axis=1)
    gsq_star = np.asarray(gsq_star, dtype=float)
    if variant == "simple":
        return 0.5 * (row_mean - gsq_star)
    if variant == "incremental":
        return 0.5 * (row_mean - Gsq.mean()) + 0.5 * (gsq_star.mean() - gsq_star)
    raise ValueError(f"unknown variant {variant!r}")


def stationarity_gap(Gsq, gsq_star) -> float:
    """Difference between the stream point's mean squared geodesic and the batch mean.

    The simple and incremental right-hand sides differ by exactly half of this.
    """
    return float(np.mean(gsq_star) - np.mean(Gsq))


def s_isomap_map(embedding: Embedding, Gsq, gsq_star, variant: str = "simple") -> np.ndarray:
    """Least-squares solution of ``X^T x = f``; since ``X X^T = Lambda`` this is ``Lambda^-1 X f``."""
    if np.any(embedding.eigvals <= 0):
        raise ValueError("embedding has non-positive eigenvalues")
    f = s_isomap_f(Gsq, gsq_star, variant)
    return (embedding.coords @ f) / embedding.eigvals


def s_isomap_projection(embedding: Embedding, Gsq, gsq_star) -> np.ndarray:
    """The unnormalized prediction ``sqrt(lambda_i) q_i^T f`` (per-axis scaled by ``lambda_i``)."""
    return embedding.coords @ s_isomap_f(Gsq, gsq_star, "simple")


@dataclass
class StreamVerdict:
    index: int
    point_id: object
    mu: List[np.ndarray]
    variances: np.ndarray
    cluster: int  # chosen cluster j, even when unassigned
    assigned: bool
    coords: Optional[np.ndarray]
    reemitted: bool = False

    @property
    def variance(self) -> float:
        return float(self.variances[self.cluster])


@dataclass
class StreamState:
    n_s: int
    buffer: List[int] = field(default_factory=list)  # stream indices of unassigned points
    events: List[dict] = field(default_factory=list)


class StreamAborted(RuntimeError):
    """A re-learn failed; carries the verdicts and events produced so far."""

    def __init__(self, message, verdicts, events):
        super().__init__(message)
        self.verdicts = verdicts
        self.events = events


def score_point(atlas: ManifoldAtlas, point, index: int, point_id, sigma_t: float) -> StreamVerdict:
    """Predict with every cluster's GP and keep the lowest-variance one."""
    k_graph = atlas.params.k_graph if atlas.params is not None else 8
    mus, vars_ = [], np.empty(atlas.p)
    for i, cm in enumerate(atlas.clusters):
        gsq = stream_geodesics(point, cm.cloud, cm.geo, min(k_graph, cm.cloud.n - 1))
        mu, var = gp_predict(cm.gp, gsq)
        mus.append(mu)
        vars_[i] = var
    j = int(np.argmin(np.abs(vars_)))
    ok = bool(vars_[j] <= sigma_t)
    coords = atlas.to_global(j, mus[j]) if ok else None
    return StreamVerdict(index, point_id, mus, vars_, j, ok, coords)


def process_stream(atlas: ManifoldAtlas, stream: PointCloud, sigma_t: float, n_s: int,
                   params: Optional[BatchParams] = None):
    """Run the streaming phase over ``stream`` in arrival order.

    Returns ``(verdicts, atlas, events)``. When the unassigned buffer reaches
    ``n_s`` points the batch phase is re-run on batch + buffer; the buffered
    points are then re-scored against the new atlas and emitted again with
    ``reemitted=True``.
    """
    if n_s < 1:
        raise ValueError("n_s must be a positive integer")
    params = params or atlas.params
    if params is None:
        raise ValueError("atlas carries no batch parameters; pass params explicitly")
    state = StreamState(n_s)
    verdicts: List[StreamVerdict] = []
    for idx in range(stream.n):
        v = score_point(atlas, stream.points[idx], idx, stream.ids[idx], sigma_t)
        verdicts.append(v)
        if v.assigned:
            continue
        state.buffer.append(idx)
        if len(state.buffer) >= n_s:
            buffered = stream.subset(state.buffer)
            new_batch = PointCloud.concat([atlas.batch, buffered])
            try:
                new_atlas = batch_phase(new_batch, params)
            except Exception as exc:
                state.events.append({"event": "relearn_failed", "index": idx, "error": str(exc)})
                raise StreamAborted(f"re-learn at stream index {idx} failed: {exc}", verdicts, state.events) from exc
            state.events.append({
                "event": "relearn",
                "index": idx,
                "buffer_size": len(state.buffer),
                "batch_size_before": atlas.batch.n,
                "batch_size_after": new_batch.n,
                "clusters_before": atlas.p,
                "clusters_after": new_atlas.p,
            })
            log.info("relearn at stream index %d: %d -> %d clusters", idx, atlas.p, new_atlas.p)
            atlas = new_atlas
            for b in state.buffer:
                rv = score_point(atlas, stream.points[b], b, stream.ids[b], sigma_t)
                rv.reemitted = True
                verdicts.append(rv)
            state.buffer = []
    return verdicts, atlas, state.events


def primary_verdicts(verdicts) -> List[StreamVerdict]:
    """Verdicts in arrival order, without the post-relearn re-emissions."""
    return [v for v in verdicts if not v.reemitted]


def variance_trace(verdicts, window: int) -> np.ndarray:
    """Trailing running mean of the chosen-cluster variance over ``window`` points."""
    if window < 1:
        raise ValueError("window must be >= 1")
    vals = np.array([v.variance if isinstance(v, StreamVerdict) else float(v) for v in verdicts])
    # direct window means: a cumulative-sum difference would not reproduce window=1 exactly
    return np.array([vals[max(0, i + 1 - window):i + 1].mean() for i in range(len(vals))])


def calibrate_threshold(atlas: ManifoldAtlas, validation: PointCloud, percentile: float = 99.0) -> float:
    """``percentile`` of the chosen-cluster variance over in-distribution validation points."""
    if validation.n == 0:
        raise ValueError("validation set is empty")
    vars_ = [score_point(atlas, p, i, pid, np.inf).variance
             for i, (p, pid) in enumerate(zip(validation.points, validation.ids))]
    return float(np.percentile(vars_, percentile))
