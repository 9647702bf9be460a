"""Diagnostics on trained heads: separability, histograms, bound, gradient norms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data_io import Dataset
from .losses import LossKind, LossSpec, loss_arrays, sample_weights
from .metrics import ThresholdPolicy, as_arrays
from .oracle import OracleHead, dz_dx, forward

SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class GaussianFit:
    mu: float
    sigma: float
    n: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def fit_gaussian(values) -> GaussianFit:
    """Mean and unbiased standard deviation, floored at ``SIGMA_FLOOR``."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.shape[0] < 2:
        raise ValueError("a Gaussian fit needs at least 2 values")
    return GaussianFit(float(v.mean()), max(float(v.std(ddof=1)), SIGMA_FLOOR), v.shape[0])


def kl_gaussian(n1: GaussianFit, n2: GaussianFit) -> float:
    """KL(n1 || n2) between univariate normals, in nats."""
    return (math.log(n2.sigma / n1.sigma)
            + (n1.sigma**2 + (n1.mu - n2.mu) ** 2) / (2.0 * n2.sigma**2) - 0.5)


def avg_kl(n1: GaussianFit, n2: GaussianFit) -> float:
    return (kl_gaussian(n1, n2) + kl_gaussian(n2, n1)) / 2.0


def bhattacharyya(n1: GaussianFit, n2: GaussianFit) -> float:
    v1, v2 = n1.sigma**2, n2.sigma**2
    return (0.25 * math.log(0.25 * (v1 / v2 + v2 / v1 + 2.0))
            + 0.25 * ((n1.mu - n2.mu) ** 2 / (v1 + v2)))


def separability(confidence, o) -> dict:
    """Gaussian fits of correct (pos) and incorrect (neg) confidences and their distances."""
    c, y = as_arrays(confidence, o)
    pos, neg = fit_gaussian(c[y == 1]), fit_gaussian(c[y == 0])
    return {
        "mu_pos": pos.mu,
        "sigma_pos": pos.sigma,
        "mu_neg": neg.mu,
        "sigma_neg": neg.sigma,
        "avg_kl": avg_kl(pos, neg),
        "bhattacharyya": bhattacharyya(pos, neg),
    }


@dataclass(frozen=True)
class BoundInput:
    loss_max: float
    hypothesis_count: float
    delta: float
    sample_count: int

    def __post_init__(self):
        if not self.loss_max >= 0:
            raise ValueError("loss_max must be >= 0")
        if not self.hypothesis_count > 0:
            raise ValueError("hypothesis_count must be > 0")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if int(self.sample_count) != self.sample_count or self.sample_count < 1:
            raise ValueError("sample_count must be a positive integer")


def generalization_bound(inp: BoundInput) -> float:
    """Uniform deviation bound for a finite hypothesis set and a loss in [0, loss_max]."""
    radicand = (math.log(inp.hypothesis_count) + math.log(2.0 / inp.delta)) / (
        2.0 * inp.sample_count)
    if radicand < 0:
        raise ValueError("log|F| + log(2/delta) is negative; |F| is too small")
    return inp.loss_max * math.sqrt(radicand)


HISTOGRAM_GROUPS = ("tp", "fp", "tn", "fn", "abstain")


@dataclass(frozen=True)
class HistogramSummary:
    edges: np.ndarray
    counts: dict  # group -> per-bin counts

    def totals(self) -> dict:
        return {g: int(v.sum()) for g, v in self.counts.items()}

    def rows(self):
        for i in range(self.edges.shape[0] - 1):
            yield (float(self.edges[i]), float(self.edges[i + 1]),
                   *(int(self.counts[g][i]) for g in HISTOGRAM_GROUPS))


def histogram(confidence, o, policy: ThresholdPolicy = ThresholdPolicy(),
              bins: int = 50) -> HistogramSummary:
    """Per-bin counts of TP/FP/TN/FN and records between the two thresholds."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    c, y = as_arrays(confidence, o)
    edges = np.linspace(0.0, 1.0, bins + 1)
    idx = np.clip(np.floor(c * bins).astype(np.int64), 0, bins - 1)
    above = c > policy.positive_threshold
    below = c <= policy.negative_threshold
    masks = {
        "tp": above & (y == 1),
        "fp": above & (y == 0),
        "tn": below & (y == 0),
        "fn": below & (y == 1),
        "abstain": ~above & ~below,
    }
    counts = {g: np.bincount(idx[m], minlength=bins) for g, m in masks.items()}
    return HistogramSummary(edges, counts)


def input_gradients(dataset: Dataset, head: OracleHead, spec: LossSpec) -> np.ndarray:
    """Per-sample gradient of the (wrapper-weighted) loss w.r.t. each feature vector."""
    x = dataset.features.astype(np.float64)
    z = forward(head, x)
    p = dataset.p_star if spec.kind is LossKind.TCP else None
    _, g = loss_arrays(spec, z, dataset.o, p)
    g = g * sample_weights(spec, dataset.o, dataset.class_counts)
    return g[:, None] * dz_dx(head)[None, :]


def grad_norm_stats(dataset: Dataset, head: OracleHead, spec: LossSpec) -> float:
    """Mean Euclidean norm of d(loss)/d(features) over the dataset."""
    if dataset.n == 0:
        raise ValueError("empty dataset")
    grads = input_gradients(dataset, head, spec)
    return float(np.mean(np.linalg.norm(grads, axis=1)))
