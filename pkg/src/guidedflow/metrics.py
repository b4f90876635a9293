"""Two-sample discrepancies and chain summary statistics.

``mmd_rbf`` quantifies how far a method's sample cloud sits from the
oracle's; ``mean_iterations_to_threshold`` summarizes how fast chains
first reach a reward level; ``mode_proportions`` measures mixture-mode
coverage of generated points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MMDResult",
    "ThresholdStats",
    "mmd_rbf",
    "median_bandwidth",
    "mean_iterations_to_threshold",
    "mode_proportions",
]


@dataclass(frozen=True)
class MMDResult:
    """Unbiased squared-MMD estimate; ``value`` is the raw estimate floored
    at 0 (the unbiased statistic can dip below zero for close sets)."""

    value: float
    raw: float
    bandwidth: float


@dataclass(frozen=True)
class ThresholdStats:
    """First-hit summaries over a set of chains.

    ``hits`` holds one evaluation count per chain (None if censored).
    Censored chains are excluded from ``mean_nfe`` but count in the
    ``success_rate`` denominator; with no successes ``mean_nfe`` is None.
    """

    hits: tuple
    mean_nfe: float | None
    success_rate: float


def _sqdists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (np.sum(x * x, axis=1)[:, None] + np.sum(y * y, axis=1)[None, :]
            - 2.0 * x @ y.T)


def median_bandwidth(x: np.ndarray, y: np.ndarray) -> float:
    """Median pairwise distance over the pooled sample."""
    pool = np.concatenate([x, y], axis=0)
    d2 = _sqdists(pool, pool)
    iu = np.triu_indices(len(pool), k=1)
    return float(np.sqrt(np.maximum(np.median(d2[iu]), 1e-300)))


def mmd_rbf(x: np.ndarray, y: np.ndarray,
            bandwidth: float | None = None) -> MMDResult:
    """Unbiased squared MMD with Gaussian kernel exp(-||a-b||^2 / (2 bw^2)).

    Defaults the bandwidth to the median pairwise distance of the pooled
    sample. Symmetric in (x, y) and invariant to point order.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2 or len(y) < 2:
        raise ValueError("both sets need at least 2 points")
    bw = median_bandwidth(x, y) if bandwidth is None else float(bandwidth)
    if bw <= 0:
        raise ValueError("bandwidth must be positive")
    m, n = len(x), len(y)
    kxx = np.exp(_sqdists(x, x) / (-2.0 * bw * bw))
    kyy = np.exp(_sqdists(y, y) / (-2.0 * bw * bw))
    kxy = np.exp(_sqdists(x, y) / (-2.0 * bw * bw))
    term_x = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    term_y = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    raw = float(term_x + term_y - 2.0 * kxy.mean())
    return MMDResult(value=max(raw, 0.0), raw=raw, bandwidth=bw)


def _first_hits(records, threshold: float) -> list[int | None]:
    """Evaluation count of the first reward >= threshold, per chain."""
    hits: list[int | None] = []
    history = getattr(records, "reward_history", None)
    if isinstance(history, np.ndarray):
        reached = history >= threshold
        first = reached.argmax(axis=1)
        for any_hit, idx in zip(reached.any(axis=1), first):
            hits.append(int(idx) + 1 if any_hit else None)
        return hits
    for rec in records:
        hit = None
        for i, r in enumerate(rec.chain.reward_history):
            if r >= threshold:
                hit = i + 1
                break
        hits.append(hit)
    return hits


def mean_iterations_to_threshold(records, threshold: float) -> ThresholdStats:
    """First-hit statistics over chains.

    ``records`` is a sequence of RunRecord or a BatchRunResult; hits are
    recomputed from the reward histories at the given threshold.
    """
    hits = _first_hits(records, threshold)
    if not hits:
        raise ValueError("no records given")
    successes = [h for h in hits if h is not None]
    mean_nfe = float(np.mean(successes)) if successes else None
    return ThresholdStats(hits=tuple(hits), mean_nfe=mean_nfe,
                          success_rate=len(successes) / len(hits))


def mode_proportions(points: np.ndarray, centers: np.ndarray,
                     radius: float) -> tuple[np.ndarray, float]:
    """Fraction of points within ``radius`` of each center, plus leftover.

    Each point is assigned to its nearest center, counted only if within
    the radius; the leftover fraction covers points near no center.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    d2 = _sqdists(points, centers)
    nearest = d2.argmin(axis=1)
    within = d2[np.arange(len(points)), nearest] <= radius * radius
    fractions = np.array([np.mean(within & (nearest == k))
                          for k in range(len(centers))])
    return fractions, float(1.0 - within.mean())
