"""Symmetric eigensolvers, classical MDS and the Isomap embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .geometry import GeodesicSet, double_center

# Eigenvalues below this fraction of max |lambda| are treated as zero.
EIG_FLOOR = 1e-10


class DimensionError(ValueError):
    """Requested embedding dimension exceeds the number of positive eigenvalues."""


@dataclass(frozen=True, eq=False)
class Embedding:
    """Top-d eigenpairs of a centered matrix and the resulting coordinates.

    Attributes
    ----------
    eigvals : (d,) array
        Descending, strictly positive eigenvalues.
    eigvecs : (n, d) array
        Orthonormal eigenvectors, one per column.
    coords : (d, n) array
        Row ``i`` is ``sqrt(eigvals[i]) * eigvecs[:, i]``.
    min_eigval : float
        Smallest eigenvalue of the source matrix (negative when it is not PSD).
    """

    eigvals: np.ndarray
    eigvecs: np.ndarray
    coords: np.ndarray
    min_eigval: float = 0.0

    @property
    def dim(self) -> int:
        return self.eigvals.shape[0]

    @property
    def n(self) -> int:
        return self.eigvecs.shape[0]

    @classmethod
    def from_eigenpairs(cls, eigvals, eigvecs, min_eigval=0.0) -> "Embedding":
        eigvals = np.asarray(eigvals, dtype=float)
        eigvecs = np.asarray(eigvecs, dtype=float)
        coords = (eigvecs * np.sqrt(eigvals)[None, :]).T
        return cls(eigvals, eigvecs, coords, float(min_eigval))


def jacobi_eigh(A, tol=1e-10, max_sweeps=100):
    """Cyclic Jacobi rotations for a dense symmetric matrix.

    Portable fallback and test oracle; O(n^3) per sweep, so keep n small.
    Returns ascending eigenvalues and the matching eigenvector columns.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    else:
        raise RuntimeError("Jacobi eigensolver did not converge")
    w = np.diag(A)
    order = np.argsort(w)
    return w[order], V[:, order]


def _fix_signs(vecs):
    # Largest-magnitude entry of each eigenvector made positive.
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs[None, :]


def top_eigen(B, d: int, backend: str = "lapack", return_min: bool = False):
    """Return the ``d`` largest eigenvalues (descending) and eigenvectors of ``B``.

    Raises :class:`DimensionError` if fewer than ``d`` eigenvalues exceed
    ``1e-10 * max|lambda|``.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    if B.shape != (n, n):
        raise ValueError("B must be square")
    if not np.allclose(B, B.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(B).max(initial=0.0))):
        raise ValueError("B must be symmetric")
    if d < 1 or d > n:
        raise ValueError(f"d must satisfy 1 <= d <= n (d={d}, n={n})")

    if backend == "jacobi":
        w, V = jacobi_eigh(B)
        vals, vecs = w[::-1][:d], V[:, ::-1][:, :d]
        lo = w[0]
    elif backend == "lapack":
        if n <= 64 or d > n // 2:
            w, V = np.linalg.eigh(B)
            vals, vecs = w[::-1][:d], V[:, ::-1][:, :d]
            lo = w[0]
        else:
            w, V = scipy.linalg.eigh(B, subset_by_index=[n - d, n - 1])
            vals, vecs = w[::-1], V[:, ::-1]
            lo = scipy.linalg.eigh(B, eigvals_only=True, subset_by_index=[0, 0])[0]
    else:
        raise ValueError(f"unknown eigen backend {backend!r}")

    floor = EIG_FLOOR * max(abs(vals[0]), abs(lo))
    n_pos = int(np.sum(vals > floor))
    if n_pos < d:
        raise DimensionError(
            f"only {n_pos} eigenvalue(s) exceed the positivity floor; requested d={d}"
        )
    vecs = _fix_signs(vecs)
    if return_min:
        return vals, vecs, float(lo)
    return vals, vecs


def embed_centered(B, d: int, backend: str = "lapack") -> Embedding:
    vals, vecs, lo = top_eigen(B, d, backend=backend, return_min=True)
    return Embedding.from_eigenpairs(vals, vecs, min_eigval=lo)


def isomap_embed(geo: GeodesicSet, d: int, backend: str = "lapack") -> Embedding:
    """Isomap coordinates from the centered geodesic matrix of ``geo``."""
    return embed_centered(geo.B, d, backend=backend)


def classical_mds(sq_dists, d: int, backend: str = "lapack") -> np.ndarray:
    """Classical MDS; returns an ``m x d`` coordinate matrix."""
    sq = np.asarray(sq_dists, dtype=float)
    if sq.ndim != 2 or sq.shape[0] != sq.shape[1]:
        raise ValueError("sq_dists must be square")
    if np.any(sq < 0) or np.any(np.abs(np.diag(sq)) > 0):
        raise ValueError("sq_dists must be non-negative with a zero diagonal")
    return embed_centered(double_center(sq), d, backend=backend).coords.T
