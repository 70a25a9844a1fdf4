"""Synthetic datasets with ground truth, drift streams and CSV ingestion."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .geometry import PointCloud

log = logging.getLogger(__name__)

MISSING_TOKENS = {"", "na", "nan", "null", "none", "?"}


class DataFormatError(ValueError):
    """Input file cannot be parsed under the given schema."""


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    cloud: PointCloud
    truth: Optional[np.ndarray] = None  # (n, d) ground-truth low-dimensional coordinates
    mode: Optional[np.ndarray] = None
    split: Optional[np.ndarray] = None  # "train" / "test" per point
    dropped: int = 0

    @property
    def n(self) -> int:
        return self.cloud.n

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index)
        pick = lambda a: None if a is None else a[index]
        return LabeledDataset(self.cloud.subset(index), pick(self.truth), pick(self.mode), pick(self.split))

    def select(self, modes=None, split=None) -> "LabeledDataset":
        mask = np.ones(self.n, dtype=bool)
        if modes is not None:
            mask &= np.isin(self.mode, list(modes))
        if split is not None:
            mask &= self.split == split
        return self.subset(np.flatnonzero(mask))


@dataclass
class Mode:
    mean: Sequence[float]
    cov: Sequence[Sequence[float]]

    @classmethod
    def isotropic(cls, mean, sigma):
        return cls(list(mean), [[sigma * sigma, 0.0], [0.0, sigma * sigma]])


@dataclass
class SwissRollParams:
    """Gaussian modes in the (arc length, height) plane plus roll geometry.

    The roll is the Archimedean spiral ``r = a * theta`` swept along the height
    axis; ``u`` is arc length measured from ``theta0``.
    """

    modes: List[Mode]
    n_per_mode: int
    seed: int = 0
    a: float = 1.0
    theta0: float = 1.5 * math.pi
    test_fraction: float = 0.5


def _spiral_arclength(theta, a):
    return 0.5 * a * (theta * np.sqrt(1.0 + theta * theta) + np.arcsinh(theta))


def roll_angle(u, a: float = 1.0, theta0: float = 1.5 * math.pi) -> np.ndarray:
    """Invert the spiral arc length: angle ``theta`` at arc length ``u`` past ``theta0``."""
    u = np.asarray(u, dtype=float)
    target = u + _spiral_arclength(theta0, a)
    theta = np.sqrt(np.maximum(theta0 * theta0 + 2.0 * u / a, 1e-12))
    for _ in range(100):
        step = (_spiral_arclength(theta, a) - target) / (a * np.sqrt(1.0 + theta * theta))
        theta = theta - step
        if np.max(np.abs(step), initial=0.0) < 1e-13:
            break
    return theta


def swiss_roll_map(uv, a: float = 1.0, theta0: float = 1.5 * math.pi) -> np.ndarray:
    """Isometric map (u, v) -> R^3 onto the roll."""
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    theta = roll_angle(uv[:, 0], a, theta0)
    r = a * theta
    return np.column_stack([r * np.cos(theta), uv[:, 1], r * np.sin(theta)])


def _cov_factor(cov) -> np.ndarray:
    """Cholesky factor, or a symmetric square root when ``cov`` is only semi-definite."""
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (cov + cov.T))
        if w.min() < -1e-12 * max(1.0, abs(w).max()):
            raise ValueError("mode covariance is not positive semi-definite")
        return V * np.sqrt(np.clip(w, 0.0, None))


def gen_swiss_roll(params: SwissRollParams) -> LabeledDataset:
    """Sample each mode in 2-D, roll into R^3, split train/test per mode."""
    if not params.modes:
        raise ValueError("at least one mode is required")
    rng = np.random.default_rng(params.seed)
    truth, modes, split = [], [], []
    for m, mode in enumerate(params.modes):
        z = rng.standard_normal((params.n_per_mode, 2))
        uv = np.asarray(mode.mean, float) + z @ _cov_factor(mode.cov).T
        tags = np.full(params.n_per_mode, "train", dtype=object)
        n_test = int(round(params.test_fraction * params.n_per_mode))
        tags[rng.permutation(params.n_per_mode)[:n_test]] = "test"
        truth.append(uv)
        modes.append(np.full(params.n_per_mode, m))
        split.append(tags)
    truth = np.vstack(truth)
    mode = np.concatenate(modes)
    points = swiss_roll_map(truth, params.a, params.theta0)
    cloud = PointCloud(points, np.arange(len(points)), mode)
    return LabeledDataset(cloud, truth, mode, np.concatenate(split).astype(str))


def default_modes(n_modes: int = 4, sigma: float = 2.0) -> List[Mode]:
    """Well-separated isotropic patches on a 2 x 2 (arc length, height) grid."""
    centers = [(30.0, 12.0), (70.0, 12.0), (30.0, 40.0), (70.0, 40.0)]
    if not 1 <= n_modes <= len(centers):
        raise ValueError(f"n_modes must be between 1 and {len(centers)}")
    return [Mode.isotropic(c, sigma) for c in centers[:n_modes]]


def gen_drift_stream(dataset: LabeledDataset, schedule, seed: int = 0) -> LabeledDataset:
    """Arrival-ordered stream drawn from the test split.

    ``schedule`` is a list of ``(modes, count)`` entries; each entry draws
    ``count`` points without replacement, uniformly from the test points of
    ``modes`` (an int or a list of ints), in random order. A third element
    ``(modes, count, split)`` draws from another split instead.
    """
    rng = np.random.default_rng(seed)
    used = np.zeros(dataset.n, dtype=bool)
    known = set(np.unique(dataset.mode).tolist()) if dataset.mode is not None else set()
    picks = []
    for entry in schedule:
        modes, count = entry[0], int(entry[1])
        split = entry[2] if len(entry) > 2 else "test"
        modes = [modes] if np.isscalar(modes) else list(modes)
        unknown = set(modes) - known
        if unknown:
            raise ValueError(f"schedule refers to unknown mode(s) {sorted(unknown)}")
        in_split = dataset.split == split if dataset.split is not None else np.ones(dataset.n, bool)
        pool = np.flatnonzero(in_split & ~used & np.isin(dataset.mode, modes))
        if count > len(pool):
            raise ValueError(f"schedule asks for {count} {split} points from modes {modes}, only {len(pool)} left")
        chosen = rng.choice(pool, size=count, replace=False)
        used[chosen] = True
        picks.append(chosen)
    order = np.concatenate(picks) if picks else np.array([], dtype=int)
    return dataset.subset(order)


def gen_uniform_patch(center, half_width, n: int, seed: int = 0, a: float = 1.0,
                      theta0: float = 1.5 * math.pi, id_offset: int = 0) -> LabeledDataset:
    """Uniform samples on a (u, v) square rolled into R^3, in sampling order."""
    rng = np.random.default_rng(seed)
    uv = np.asarray(center, dtype=float) + rng.uniform(-half_width, half_width, size=(n, 2))
    cloud = PointCloud(swiss_roll_map(uv, a, theta0), np.arange(id_offset, id_offset + n))
    return LabeledDataset(cloud, uv, np.full(n, -1), np.full(n, "test"))


def gen_uniform_drift(center, half_width, n: int, seed: int = 0, a: float = 1.0,
                      theta0: float = 1.5 * math.pi, id_offset: int = 0) -> LabeledDataset:
    """Uniform samples on a (u, v) square, streamed in order of distance from ``center``.

    Models incremental drift: early points sit on the batch patch, later ones
    move steadily away from it.
    """
    patch = gen_uniform_patch(center, half_width, n, seed, a, theta0, id_offset)
    order = np.argsort(np.linalg.norm(patch.truth - np.asarray(center, float), axis=1), kind="stable")
    return patch.subset(order)


def _parse_float(tok):
    try:
        return float(tok)
    except ValueError:
        return None


def load_csv(path, feature_columns=None, label_column=None, normalize: str = "mean",
             header: bool = False, max_bad_fraction: float = 0.1) -> LabeledDataset:
    """Read one point per row.

    Columns may be given as integer positions, or as names when ``header`` is
    set. Rows with empty/NA feature entries are dropped and counted. Rows with
    the wrong field count or non-numeric features are unparseable; more than
    ``max_bad_fraction`` of them is a hard error.
    """
    if normalize not in ("mean", "none"):
        raise ValueError("normalize must be 'mean' or 'none'")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(t.strip() for t in r)]
    names = None
    if header:
        if not rows:
            raise DataFormatError(f"{path}: empty file")
        names, rows = [t.strip() for t in rows[0]], rows[1:]

    def resolve(col):
        if isinstance(col, str):
            if names is None or col not in names:
                raise DataFormatError(f"{path}: unknown column {col!r}")
            return names.index(col)
        return int(col)

    width = len(names) if names is not None else (len(rows[0]) if rows else 0)
    label_idx = None if label_column is None else resolve(label_column)
    if feature_columns is None:
        feat_idx = [i for i in range(width) if i != label_idx]
    else:
        feat_idx = [resolve(c) for c in feature_columns]

    feats, labels, n_missing, bad_rows = [], [], 0, []
    for lineno, row in enumerate(rows, start=2 if header else 1):
        if len(row) != width:
            bad_rows.append(lineno)
            continue
        toks = [row[i].strip() for i in feat_idx]
        if any(t.lower() in MISSING_TOKENS for t in toks):
            n_missing += 1
            continue
        vals = [_parse_float(t) for t in toks]
        if any(v is None or not math.isfinite(v) for v in vals):
            bad_rows.append(lineno)
            continue
        feats.append(vals)
        labels.append(row[label_idx].strip() if label_idx is not None else None)

    total = len(rows)
    if total and len(bad_rows) / total > max_bad_fraction:
        raise DataFormatError(
            f"{path}: {len(bad_rows)} of {total} rows unparseable (first at line {bad_rows[0]})"
        )
    if not feats:
        raise DataFormatError(f"{path}: no valid rows")
    dropped = n_missing + len(bad_rows)
    if dropped:
        log.info("%s: dropped %d invalid row(s)", path, dropped)

    X = np.asarray(feats, dtype=float)
    if normalize == "mean":
        X = mean_normalize(X)
    lab = np.asarray(labels, dtype=object) if label_idx is not None else None
    mode = None
    if lab is not None:
        classes = sorted(set(lab.tolist()))
        mode = np.array([classes.index(v) for v in lab])
    cloud = PointCloud(X, np.arange(len(X)), lab)
    return LabeledDataset(cloud, None, mode, None, dropped=dropped)


def mean_normalize(X) -> np.ndarray:
    """Per-feature standardization; zero-variance features are dropped.

    A single row has no defined spread, so it is only centered.
    """
    X = np.asarray(X, dtype=float)
    Xc = X - X.mean(axis=0)
    if X.shape[0] < 2:
        return Xc
    std = X.std(axis=0)
    keep = std > 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0))
    if not np.all(keep):
        log.warning("dropping %d zero-variance feature(s)", int(np.sum(~keep)))
    Xc = Xc[:, keep] / std[keep]
    # second pass removes the rounding residue left by the division
    return Xc - Xc.mean(axis=0)


def split_by_mode(dataset: LabeledDataset, test_fraction: float = 0.5, seed: int = 0) -> LabeledDataset:
    """Tag a random ``test_fraction`` of each mode as test, the rest as train."""
    rng = np.random.default_rng(seed)
    split = np.full(dataset.n, "train", dtype=object)
    for m in np.unique(dataset.mode):
        idx = np.flatnonzero(dataset.mode == m)
        n_test = int(round(test_fraction * len(idx)))
        split[rng.permutation(idx)[:n_test]] = "test"
    return LabeledDataset(dataset.cloud, dataset.truth, dataset.mode, split.astype(str), dataset.dropped)
