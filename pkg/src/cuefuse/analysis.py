"""Metrics and dataset analyses.

Classification metrics and expected calibration error, a two-sample
Kolmogorov-Smirnov test, nearest-surface distance statistics, per-joint
pose distances, the gesture-induced object confusion matrix, and
silhouette-guided agglomerative clustering of that matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from .data import Compat
from .errors import EmptyCloud, EmptyInput, EmptySample, LengthMismatch, MatrixIncomplete
from .geometry import HandPose


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    recall: float
    precision: float
    ece: float
    threshold: float
    bin_count: int
    n_samples: int
    recall_defined: bool = True
    precision_defined: bool = True


def classification_metrics(
    preds, labels, threshold: float = 0.5
) -> tuple[float, float, float, dict]:
    """Accuracy, recall, precision over hard predictions (pred >= threshold).

    Recall and precision fall back to 0 when their denominator is empty;
    the returned flags record whether each was actually defined.
    """
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise LengthMismatch(f"{preds.shape} predictions vs {labels.shape} labels")
    if preds.size == 0:
        raise LengthMismatch("need at least one sample")
    hard = preds >= threshold
    truth = labels.astype(bool)
    tp = int(np.sum(hard & truth))
    fp = int(np.sum(hard & ~truth))
    fn = int(np.sum(~hard & truth))
    accuracy = float(np.mean(hard == truth))
    recall_defined = (tp + fn) > 0
    precision_defined = (tp + fp) > 0
    recall = tp / (tp + fn) if recall_defined else 0.0
    precision = tp / (tp + fp) if precision_defined else 0.0
    flags = {"recall_defined": recall_defined, "precision_defined": precision_defined}
    return accuracy, recall, precision, flags


def ece(preds, labels, bins: int = 10) -> float:
    """Expected calibration error over equal-width probability bins.

    Bin b covers [b/bins, (b+1)/bins); the top bin is closed at 1. Per
    bin, confidence is the mean predicted probability and accuracy is the
    empirical positive rate, the usual reliability-diagram convention for
    binary probabilities.
    """
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape:
        raise LengthMismatch(f"{preds.shape} predictions vs {labels.shape} labels")
    if bins < 1:
        raise ValueError("need at least one bin")
    idx = np.minimum((preds * bins).astype(int), bins - 1)
    total = preds.size
    out = 0.0
    for b in range(bins):
        mask = idx == b
        n_b = int(mask.sum())
        if n_b == 0:
            continue
        confidence = preds[mask].mean()
        accuracy = labels[mask].mean()
        out += (n_b / total) * abs(confidence - accuracy)
    return float(out)


def metric_report(
    preds, labels, threshold: float = 0.5, bins: int = 10
) -> MetricReport:
    accuracy, recall, precision, flags = classification_metrics(preds, labels, threshold)
    return MetricReport(
        accuracy=accuracy,
        recall=recall,
        precision=precision,
        ece=ece(preds, labels, bins),
        threshold=threshold,
        bin_count=bins,
        n_samples=int(np.asarray(preds).size),
        recall_defined=flags["recall_defined"],
        precision_defined=flags["precision_defined"],
    )


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    D is the supremum over the pooled sample of the gap between the step
    empirical CDFs. The p-value uses the Kolmogorov series with effective
    n = n_a n_b / (n_a + n_b), truncated at 100 terms; when the series has
    not converged by then (tiny lambda) the p-value is 1.
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    effective_n = a.size * b.size / (a.size + b.size)
    lam = np.sqrt(effective_n) * d
    total = 0.0
    converged = False
    for k in range(1, 101):
        term = 2.0 * (-1.0) ** (k - 1) * np.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < 1e-12:
            converged = True
            break
    p = total if converged else 1.0
    return d, float(min(max(p, 0.0), 1.0))


def nearest_surface_distances(hand: HandPose, cloud) -> np.ndarray:
    """Distance from each of the 21 joints to its nearest cloud point.

    Unsigned: with bare point clouds inside/outside is ill-defined, so
    this approximates the magnitude of the signed distance field.
    """
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.ndim != 2 or cloud.shape[1] != 3 or cloud.shape[0] == 0:
        raise EmptyCloud("cloud must be a non-empty (N, 3) array")
    deltas = hand.joints[:, None, :] - cloud[None, :, :]
    return np.sqrt((deltas**2).sum(axis=2)).min(axis=1)


def per_joint_distance(pairs: list[tuple[HandPose, HandPose]]) -> np.ndarray:
    """Per joint: mean and population sd of the in/out pose deviation.

    Returns a (21, 2) array of (mean, sd) over the Euclidean distances
    between corresponding joints of each pose pair.
    """
    if not pairs:
        raise EmptyInput("need at least one pose pair")
    dists = np.stack(
        [
            np.linalg.norm(in_pose.joints - out_pose.joints, axis=1)
            for in_pose, out_pose in pairs
        ]
    )
    return np.stack([dists.mean(axis=0), dists.std(axis=0)], axis=1)


# -- confusion matrix and clustering ------------------------------------------

_SCORE = {Compat.YES: 1.0, Compat.UNSURE: 0.5, Compat.NO: 0.0}


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Mean compatibility score per (gesture-source, probed) object pair.

    Unobserved cells are NaN, deliberately distinct from an observed 0.
    """

    values: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("similarity matrix must be square")
        if values.shape[0] != len(self.ids):
            raise ValueError("index size does not match matrix")
        observed = values[~np.isnan(values)]
        if observed.size and (observed.min() < 0 or observed.max() > 1):
            raise ValueError("similarities must lie in [0, 1]")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def n(self) -> int:
        return len(self.ids)

    def observed_fraction(self) -> float:
        return float(np.mean(~np.isnan(self.values)))


def confusion_matrix(
    judgments: list[tuple[str, str, Compat]], ids: list[str] | None = None
) -> SimilarityMatrix:
    """Aggregate stage-3 style judgments into an object-object matrix.

    Entry (i, j) is the mean score (yes=1, unsure=0.5, no=0) over
    judgments whose gesture came from object i probing object j.
    """
    if ids is None:
        seen: dict[str, None] = {}
        for source, probe, _ in judgments:
            seen.setdefault(source)
            seen.setdefault(probe)
        ids = sorted(seen)
    index = {obj: k for k, obj in enumerate(ids)}
    n = len(ids)
    total = np.zeros((n, n))
    count = np.zeros((n, n))
    for source, probe, response in judgments:
        i, j = index[source], index[probe]
        total[i, j] += _SCORE[response]
        count[i, j] += 1
    with np.errstate(invalid="ignore"):
        values = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return SimilarityMatrix(values=values, ids=tuple(ids))


@dataclass
class Clustering:
    assignment: dict[str, int]
    k: int
    mean_silhouette: float
    imputed_cells: int = 0
    silhouette_by_k: dict[int, float] = field(default_factory=dict)


def impute_missing(sim: SimilarityMatrix) -> tuple[np.ndarray, int]:
    """Fill NaN cells with the mean of their observed row and column values."""
    values = sim.values.copy()
    missing = np.isnan(values)
    n_missing = int(missing.sum())
    if n_missing == 0:
        return values, 0
    overall = np.nanmean(values) if not np.all(missing) else 0.5
    filled = values.copy()
    for i, j in zip(*np.where(missing)):
        row = values[i, :]
        col = values[:, j]
        pool = np.concatenate([row[~np.isnan(row)], col[~np.isnan(col)]])
        filled[i, j] = pool.mean() if pool.size else overall
    return filled, n_missing


def silhouette_values(dist: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-point silhouette s = (b - a) / max(a, b) from a distance matrix.

    Singleton clusters score 0 by convention.
    """
    n = dist.shape[0]
    out = np.zeros(n)
    unique = np.unique(labels)
    for i in range(n):
        own = labels[i]
        mask_own = (labels == own) & (np.arange(n) != i)
        if not np.any(mask_own):
            out[i] = 0.0
            continue
        a = dist[i, mask_own].mean()
        b = np.inf
        for other in unique:
            if other == own:
                continue
            mask = labels == other
            b = min(b, dist[i, mask].mean())
        out[i] = 0.0 if max(a, b) == 0 else (b - a) / max(a, b)
    return out


def silhouette_cluster(
    sim: SimilarityMatrix,
    k_min: int = 2,
    k_max: int | None = None,
    impute: bool = True,
) -> Clustering:
    """Average-linkage clustering of 1 - symmetrized similarity, with the
    cut chosen by the best mean silhouette over k in [k_min, k_max].

    Ties go to the smaller k. Missing cells are imputed (row/column mean)
    unless `impute` is disabled, in which case they are an error.
    """
    n = sim.n
    if k_max is None:
        k_max = n - 1
    if not 2 <= k_min <= k_max <= n - 1:
        raise ValueError(f"need 2 <= k_min <= k_max <= {n - 1}")
    if impute:
        values, n_imputed = impute_missing(sim)
    else:
        if np.any(np.isnan(sim.values)):
            raise MatrixIncomplete("similarity matrix has unobserved cells")
        values, n_imputed = sim.values.copy(), 0
    symmetric = (values + values.T) / 2.0
    dist = 1.0 - symmetric
    np.fill_diagonal(dist, 0.0)
    dist = np.clip(dist, 0.0, None)
    link = linkage(squareform(dist, checks=False), method="average")
    best = None
    by_k = {}
    for k in range(k_min, k_max + 1):
        labels = fcluster(link, t=k, criterion="maxclust")
        if np.unique(labels).size != k:
            continue
        score = float(silhouette_values(dist, labels).mean())
        by_k[k] = score
        if best is None or score > best[0] + 1e-12:
            best = (score, k, labels)
    if best is None:
        raise ValueError("no valid cut produced the requested cluster counts")
    score, k, labels = best
    assignment = {obj: int(labels[i]) for i, obj in enumerate(sim.ids)}
    return Clustering(
        assignment=assignment,
        k=k,
        mean_silhouette=score,
        imputed_cells=n_imputed,
        silhouette_by_k=by_k,
    )
