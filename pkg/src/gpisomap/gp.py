"""Gaussian-process regression with the geodesic (matrix-exponential) kernel.

The kernel over batch points is ``K = exp(-B / 2 ell^2)`` taken as a matrix
exponential of the rank-d eigen-expansion of ``B``::

    K = I + sum_i c_i q_i q_i^T,    c_i = exp(-lambda_i / 2 ell^2) - 1

so ``K + sigma_n^2 I`` has eigenvalues ``exp(-lambda_i/2ell^2) + sigma_n^2`` on
span(q_i) and ``1 + sigma_n^2`` elsewhere. Every solve below uses that
structure and never forms a dense inverse. Cross-covariances to a stream point
are elementwise, ``k*_i = exp(-g_i^2 / 2 ell^2)``.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .geometry import GeodesicSet
from .spectral import Embedding

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
SIGMA_S_SQ = 1.0


@dataclass(frozen=True, eq=False)
class GpModel:
    ell: float
    sigma_n_sq: float
    embedding: Embedding
    alpha: float
    c: np.ndarray
    beta: np.ndarray  # (n, d), column i solves (K + sigma_n^2 I) beta_i = sqrt(lambda_i) q_i
    sigma_s_sq: float = SIGMA_S_SQ
    log_likelihood: float = float("nan")
    diagnostics: Counter = field(default_factory=Counter)

    @property
    def n(self) -> int:
        return self.embedding.n

    @property
    def dim(self) -> int:
        return self.embedding.dim


def kernel_coeffs(eigvals, ell: float) -> np.ndarray:
    """``c_i = exp(-lambda_i / 2 ell^2) - 1`` computed without cancellation."""
    return np.expm1(-np.asarray(eigvals, dtype=float) / (2.0 * ell * ell))


def noise_alpha(sigma_n_sq: float) -> float:
    return 1.0 / (1.0 + sigma_n_sq)


def kernel_matrix(embedding: Embedding, ell: float) -> np.ndarray:
    """Dense ``K = I + Q diag(c) Q^T`` (diagnostics and oracles only)."""
    if ell <= 0:
        raise ValueError("ell must be positive")
    Q = embedding.eigvecs
    c = kernel_coeffs(embedding.eigvals, ell)
    return np.eye(embedding.n) + (Q * c[None, :]) @ Q.T


def elementwise_kernel_matrix(B, ell: float) -> np.ndarray:
    """The literal entrywise reading ``exp(-b_ij / 2 ell^2)``; diagnostic only."""
    return np.exp(-np.asarray(B, dtype=float) / (2.0 * ell * ell))


def closed_form_beta(eigvals, eigvecs, alpha: float, c) -> np.ndarray:
    """``beta_i = alpha sqrt(lambda_i) q_i / (1 + alpha c_i)`` as an (n, d) matrix."""
    scale = alpha * np.sqrt(eigvals) / (1.0 + alpha * np.asarray(c))
    return eigvecs * scale[None, :]


def lowrank_solve(embedding: Embedding, sigma_n_sq: float, ell: float,
                  targets: Optional[np.ndarray] = None) -> np.ndarray:
    """Solve ``(K + sigma_n^2 I) beta = X^T`` for the embedding's own coordinates.

    ``ell = inf`` gives the ``K = I`` limit. ``targets`` may be passed for
    symmetry with a generic solver but must be the embedding coordinates.
    """
    if targets is not None and not np.allclose(targets, embedding.coords, rtol=1e-12, atol=1e-12):
        raise ValueError("closed-form solve only applies to the embedding coordinates")
    alpha = noise_alpha(sigma_n_sq)
    c = kernel_coeffs(embedding.eigvals, ell) if np.isfinite(ell) else np.zeros(embedding.dim)
    return closed_form_beta(embedding.eigvals, embedding.eigvecs, alpha, c)


def lowrank_inverse(embedding: Embedding, sigma_n_sq: float, ell: float) -> np.ndarray:
    """Dense ``(K + sigma_n^2 I)^{-1} = alpha I - alpha^2 sum c_i q_i q_i^T / (1 + alpha c_i)``.

    Verification helper; production paths use :func:`apply_inverse`.
    """
    alpha = noise_alpha(sigma_n_sq)
    Q = embedding.eigvecs
    c = kernel_coeffs(embedding.eigvals, ell) if np.isfinite(ell) else np.zeros(embedding.dim)
    w = alpha * alpha * c / (1.0 + alpha * c)
    return alpha * np.eye(embedding.n) - (Q * w[None, :]) @ Q.T


def apply_inverse(Q, alpha: float, c, v) -> np.ndarray:
    """``(K + sigma_n^2 I)^{-1} v`` in O(n d)."""
    w = alpha * alpha * c / (1.0 + alpha * c)
    return alpha * v - Q @ (w * (Q.T @ v))


def logdet_closed_form(eigvals, n: int, ell: float, sigma_n_sq: float) -> float:
    """``log det(K + sigma_n^2 I)`` from the kernel spectrum."""
    d = len(eigvals)
    e = np.exp(-np.asarray(eigvals) / (2.0 * ell * ell))
    return (n - d) * np.log1p(sigma_n_sq) + float(np.sum(np.log(e + sigma_n_sq)))


def log_marginal_likelihood(embedding: Embedding, ell: float, sigma_n_sq: float) -> float:
    """Summed per-dimension GP evidence of the embedding coordinates.

    Each output dimension is an independent GP with targets
    ``sqrt(lambda_i) q_i``, whose quadratic form collapses to
    ``alpha lambda_i / (1 + alpha c_i)``.
    """
    n, d = embedding.n, embedding.dim
    alpha = noise_alpha(sigma_n_sq)
    c = kernel_coeffs(embedding.eigvals, ell)
    quad = alpha * embedding.eigvals / (1.0 + alpha * c)
    logdet = logdet_closed_form(embedding.eigvals, n, ell, sigma_n_sq)
    return float(np.sum(-0.5 * quad) - d * 0.5 * logdet - d * 0.5 * n * LOG_2PI)


def default_grid(geo: GeodesicSet, n_ell: int = 16, n_noise: int = 8,
                 ell_range=(0.1, 100.0), noise_range=(1e-4, 1.0)) -> list:
    """Log-spaced (ell, sigma_n^2) candidates; ell relative to the median geodesic."""
    med = geo.median_distance()
    if med <= 0:
        med = 1.0
    ells = med * np.geomspace(ell_range[0], ell_range[1], n_ell)
    noises = np.geomspace(noise_range[0], noise_range[1], n_noise)
    return [(float(l), float(s)) for l in ells for s in noises]


def make_model(embedding: Embedding, ell: float, sigma_n_sq: float,
               log_likelihood: float = float("nan")) -> GpModel:
    if ell <= 0:
        raise ValueError("ell must be positive")
    if sigma_n_sq < 0:
        raise ValueError("sigma_n_sq must be non-negative")
    alpha = noise_alpha(sigma_n_sq)
    c = kernel_coeffs(embedding.eigvals, ell)
    beta = closed_form_beta(embedding.eigvals, embedding.eigvecs, alpha, c)
    return GpModel(ell=float(ell), sigma_n_sq=float(sigma_n_sq), embedding=embedding,
                   alpha=alpha, c=c, beta=beta, log_likelihood=log_likelihood)


def fit_hyperparams(embedding: Embedding, grid: Iterable[Tuple[float, float]]) -> GpModel:
    """Grid search for the (ell, sigma_n^2) maximizing the marginal likelihood.

    Ties go to the larger ell, then the smaller sigma_n^2.
    """
    cands = sorted({(float(l), float(s)) for l, s in grid}, key=lambda p: (-p[0], p[1]))
    if not cands:
        raise ValueError("hyperparameter grid is empty")
    best, best_ll = None, -np.inf
    for ell, s in cands:
        if ell <= 0 or s < 0:
            raise ValueError(f"invalid grid candidate ell={ell}, sigma_n_sq={s}")
        ll = log_marginal_likelihood(embedding, ell, s)
        if best is None or ll > best_ll:
            best, best_ll = (ell, s), ll
    return make_model(embedding, best[0], best[1], log_likelihood=best_ll)


def stream_kernel(gsq_star, ell: float) -> np.ndarray:
    return np.exp(-np.asarray(gsq_star, dtype=float) / (2.0 * ell * ell))


def predict_from_kstar(model: GpModel, kstar) -> Tuple[np.ndarray, float]:
    """Predictive mean and variance given the cross-covariance vector."""
    kstar = np.asarray(kstar, dtype=float)
    if kstar.shape != (model.n,):
        raise ValueError(f"expected a length-{model.n} vector, got shape {kstar.shape}")
    mu = model.beta.T @ kstar
    Q = model.embedding.eigvecs
    proj = Q.T @ kstar
    w = model.alpha * model.alpha * model.c / (1.0 + model.alpha * model.c)
    quad = model.alpha * float(kstar @ kstar) - float(np.sum(w * proj * proj))
    latent = model.sigma_s_sq - quad
    if latent < 0:
        model.diagnostics["clamped_variance"] += 1
        latent = 0.0
    return mu, latent + model.sigma_n_sq


def gp_predict(model: GpModel, gsq_star) -> Tuple[np.ndarray, float]:
    """GP mean (d-vector) and variance for a stream point given its squared geodesics."""
    gsq_star = np.asarray(gsq_star, dtype=float)
    if gsq_star.shape != (model.n,):
        raise ValueError(f"gsq_star must have length {model.n}, got shape {gsq_star.shape}")
    if not np.all(np.isfinite(gsq_star)) or np.any(gsq_star < 0):
        raise ValueError("gsq_star must be finite and non-negative")
    return predict_from_kstar(model, stream_kernel(gsq_star, model.ell))


def dense_predict(K, X, kstar, sigma_n_sq: float, sigma_s_sq: float = SIGMA_S_SQ):
    """Textbook GPR via dense solves; used as an oracle.

    ``X`` is (d, n). Returns the mean and the unclamped latent variance plus noise.
    """
    A = K + sigma_n_sq * np.eye(K.shape[0])
    mu = kstar @ np.linalg.solve(A, X.T)
    var = sigma_s_sq - kstar @ np.linalg.solve(A, kstar) + sigma_n_sq
    return mu, var


def dense_log_likelihood(K, X, sigma_n_sq: float) -> float:
    """Summed per-dimension evidence with dense linear algebra; oracle only."""
    n = K.shape[0]
    A = K + sigma_n_sq * np.eye(n)
    sign, logdet = np.linalg.slogdet(A)
    if sign <= 0:
        raise np.linalg.LinAlgError("kernel matrix is not positive definite")
    total = 0.0
    for x in np.atleast_2d(X):
        total += -0.5 * x @ np.linalg.solve(A, x) - 0.5 * logdet - 0.5 * n * LOG_2PI
    return float(total)
