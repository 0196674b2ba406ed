"""Evaluation metrics: edge-prediction scores on posterior marginals and
distributional distances for interventional inference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.metrics import auc, precision_recall_curve, roc_auc_score

from .core import Dag
from .errors import TooFewSamplesError, WeightMismatchError


@dataclass(frozen=True)
class MmdKernelConfig:
    """Gaussian kernel k(x, y) = scale * exp(-||x - y||^2 / (2 * lengthscale))."""

    scale: float = 1000.0
    lengthscale: float = 0.2


@dataclass(frozen=True)
class WeightedSampleSet:
    """n x d samples with nonnegative weights summing to one."""

    samples: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "samples", np.atleast_2d(np.asarray(self.samples, dtype=float)))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if len(self.weights) != len(self.samples):
            raise WeightMismatchError("one weight per sample required")
        if np.any(self.weights < -1e-12):
            raise WeightMismatchError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise WeightMismatchError(f"weights sum to {self.weights.sum()}, expected 1")

    @staticmethod
    def uniform(samples: np.ndarray) -> "WeightedSampleSet":
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        n = len(samples)
        return WeightedSampleSet(samples=samples, weights=np.full(n, 1.0 / n))

    def mean(self) -> np.ndarray:
        return self.weights @ self.samples


@dataclass(frozen=True)
class StructureMetrics:
    """Edge-prediction bundle; auroc/auprc are None when the reference is degenerate."""

    auroc: float | None
    auprc: float | None
    tpr: float
    tnr: float
    shd_thresholded: float
    expected_edges: float

    def as_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "auprc": self.auprc,
            "tpr": self.tpr,
            "tnr": self.tnr,
            "shd_thresholded": self.shd_thresholded,
            "expected_edges": self.expected_edges,
        }


def _off_diagonal(matrix: np.ndarray) -> np.ndarray:
    d = matrix.shape[0]
    mask = ~np.eye(d, dtype=bool)
    return matrix[mask]


def structure_metrics(
    edge_marginals: np.ndarray,
    reference: Dag | np.ndarray,
    threshold: float = 0.5,
) -> StructureMetrics:
    """Score posterior edge marginals against a reference adjacency.

    Scores are computed over directed ordered pairs (i != j), not skeletons.
    TPR/TNR (and the SHD cross-check) come from thresholding the marginals.
    """
    adj = reference.adjacency() if isinstance(reference, Dag) else np.asarray(reference, float)
    marg = np.asarray(edge_marginals, dtype=float)
    labels = _off_diagonal(adj) > 0.5
    scores = _off_diagonal(marg)
    if labels.all() or not labels.any():
        auroc = auprc = None
    else:
        auroc = float(roc_auc_score(labels, scores))
        precision, recall, _ = precision_recall_curve(labels, scores)
        auprc = float(auc(recall, precision))
    predicted = scores >= threshold
    positives = labels.sum()
    negatives = (~labels).sum()
    tpr = float((predicted & labels).sum() / positives) if positives else 1.0
    tnr = float((~predicted & ~labels).sum() / negatives) if negatives else 1.0
    shd = float(np.abs(predicted.astype(float) - labels.astype(float)).sum())
    return StructureMetrics(
        auroc=auroc,
        auprc=auprc,
        tpr=tpr,
        tnr=tnr,
        shd_thresholded=shd,
        expected_edges=float(_off_diagonal(marg).sum()),
    )


def gaussian_kernel_gram(
    x: np.ndarray, y: np.ndarray, kernel: MmdKernelConfig
) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    sq = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=-1)
    return kernel.scale * np.exp(-sq / (2.0 * kernel.lengthscale))


def mmd_squared(
    left: WeightedSampleSet,
    right: np.ndarray,
    kernel: MmdKernelConfig = MmdKernelConfig(),
) -> float:
    """Weighted-vs-plain empirical squared maximum mean discrepancy.

    First term: sum_i sum_{j != i} w_i w_j / (sum_{k != i} w_k) k(x_i, x_j);
    cross term: -(2/M) sum_i sum_j w_i k(x_i, y_j); last term the plain
    unbiased within-sample average. Can be negative at finite sample sizes.
    """
    y = np.atleast_2d(np.asarray(right, dtype=float))
    m = len(y)
    if m < 2 or len(left.samples) < 2:
        raise TooFewSamplesError("need at least two samples on each side")
    w = left.weights
    kxx = gaussian_kernel_gram(left.samples, left.samples, kernel)
    denom = w.sum() - w
    row = (kxx * w[None, :]).sum(axis=1) - np.diag(kxx) * w
    term1 = float((w * row / denom).sum())
    kxy = gaussian_kernel_gram(left.samples, y, kernel)
    term2 = -2.0 / m * float((w[:, None] * kxy).sum())
    kyy = gaussian_kernel_gram(y, y, kernel)
    term3 = float((kyy.sum() - np.trace(kyy)) / (m * (m - 1)))
    return term1 + term2 + term3


def mmd(
    left: WeightedSampleSet,
    right: np.ndarray,
    kernel: MmdKernelConfig = MmdKernelConfig(),
) -> float:
    """sqrt of the clamped squared discrepancy."""
    return float(np.sqrt(max(0.0, mmd_squared(left, right, kernel))))


def mean_distance(left: WeightedSampleSet, right: np.ndarray, p: int) -> float:
    """L_p norm between the weighted mean of `left` and the plain mean of `right`."""
    if p not in (1, 2):
        raise WeightMismatchError("p must be 1 or 2")
    diff = left.mean() - np.atleast_2d(np.asarray(right, dtype=float)).mean(axis=0)
    return float(np.linalg.norm(diff, ord=p))


def kde(
    samples: WeightedSampleSet,
    bandwidth: float = 0.2,
    eval_points: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted Gaussian kernel density estimate for one-dimensional samples."""
    if bandwidth <= 0:
        raise WeightMismatchError("bandwidth must be positive")
    x = samples.samples.reshape(len(samples.samples), -1)
    if x.shape[1] != 1:
        raise WeightMismatchError("kde expects one-dimensional samples")
    if eval_points is None:
        lo, hi = x.min() - 8 * bandwidth, x.max() + 8 * bandwidth
        eval_points = np.linspace(lo, hi, 512)
    grid = np.asarray(eval_points, dtype=float)
    z = (grid[:, None] - x[None, :, 0]) / bandwidth
    dens = np.exp(-0.5 * z * z) / (bandwidth * np.sqrt(2.0 * np.pi))
    return dens @ samples.weights
