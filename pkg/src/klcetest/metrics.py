"""Conventional calibration metrics: Brier, ECE, MCE, accuracy, reliability bins.

Bins are equal-width on [0, 1]; bin b covers [b/m, (b+1)/m) and the top bin
also includes 1.0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Bin:
    lower: float
    upper: float
    count: int
    mean_score: float | None
    frequency: float | None

    @property
    def gap(self) -> float | None:
        if self.count == 0:
            return None
        return abs(self.mean_score - self.frequency)


@dataclass(frozen=True)
class ReliabilityBins:
    bins: tuple[Bin, ...]
    n: int

    def to_csv(self, stream) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["lower", "upper", "count", "mean_score", "frequency"])
        for b in self.bins:
            w.writerow([repr(b.lower), repr(b.upper), b.count,
                        "" if b.mean_score is None else repr(b.mean_score),
                        "" if b.frequency is None else repr(b.frequency)])


def _check_bins(n_bins: int) -> None:
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")


def bin_index(fhat, n_bins: int) -> np.ndarray:
    idx = np.floor(np.asarray(fhat) * n_bins).astype(np.int64)
    return np.clip(idx, 0, n_bins - 1)


def reliability(d, n_bins: int = 10) -> ReliabilityBins:
    _check_bins(n_bins)
    idx = bin_index(d.fhat, n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    score_sum = np.bincount(idx, weights=d.fhat, minlength=n_bins)
    label_sum = np.bincount(idx, weights=d.y, minlength=n_bins)
    bins = []
    for b in range(n_bins):
        c = int(counts[b])
        bins.append(Bin(b / n_bins, (b + 1) / n_bins, c,
                        float(score_sum[b] / c) if c else None,
                        float(label_sum[b] / c) if c else None))
    return ReliabilityBins(tuple(bins), d.n)


def brier(d) -> float:
    return float(np.mean((d.fhat - d.y) ** 2))


def ece(d, n_bins: int = 10) -> float:
    """Count-weighted mean of |mean score - label frequency| over bins."""
    rel = reliability(d, n_bins)
    return float(sum(b.count / rel.n * b.gap for b in rel.bins if b.count))


def mce(d, n_bins: int = 10) -> float:
    """Largest |mean score - label frequency| over nonempty bins."""
    rel = reliability(d, n_bins)
    return float(max(b.gap for b in rel.bins if b.count))


def accuracy(d, threshold: float = 0.5) -> float:
    pred = (d.fhat >= threshold).astype(np.float64)
    return float(np.mean(pred == d.y))


def summary(d, n_bins: int = 10) -> dict:
    return {"brier": brier(d), "ece": ece(d, n_bins), "mce": mce(d, n_bins),
            "accuracy": accuracy(d), "n_bins": n_bins}
