"""Streaming manifold learning: Isomap batch embedding, Gaussian-process stream mapping with a
geodesic kernel, multi-manifold stitching and drift detection from predictive variance."""

from .data import (DataFormatError, LabeledDataset, Mode, SwissRollParams, default_modes, gen_drift_stream,
                   gen_swiss_roll, gen_uniform_drift, gen_uniform_patch, load_csv, mean_normalize)
from .evaluation import (ThresholdParams, convergence_curve, equivalence_test, estimate_ball_count,
                         euclidean_kernel_baseline, procrustes_align, procrustes_error, theoretical_threshold)
from .geometry import (DisconnectedGraphError, GeodesicSet, NeighborhoodGraph, PointCloud, build_knn_graph,
                       double_center, geodesic_distances, stream_geodesics)
from .gp import GpModel, default_grid, fit_hyperparams, gp_predict, log_marginal_likelihood, make_model
from .manifold import BatchParams, GridSpec, ManifoldAtlas, batch_phase, cluster_batch
from .spectral import DimensionError, Embedding, classical_mds, isomap_embed, top_eigen
from .streaming import (StreamAborted, StreamVerdict, calibrate_threshold, process_stream, s_isomap_map,
                        score_point, variance_trace)

__version__ = "0.1.0"
