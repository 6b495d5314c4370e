"""Unbiased KLCE^2 estimator, its KCE reduction, and the analytic bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .data import SizeError
from .kernels import GramPair, KernelSpec, gram_pair


@dataclass(frozen=True)
class KlceEstimate:
    """Signed U-statistic value; negative values are legitimate."""

    value: float
    n: int
    k_spec: KernelSpec
    l_spec: KernelSpec


@dataclass(frozen=True)
class ThresholdConfig:
    """Level ``alpha_p`` and the per-pair bound ``bound_B``.

    ``bound_B = 1`` holds for RBF/constant kernels with binary labels, since
    every summand ``|e_i K_ij L_ij e_j|`` is at most 1.
    """

    alpha_p: float = 0.05
    bound_B: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.alpha_p <= 1.0):
            raise ValueError(f"alpha_p must be in (0, 1], got {self.alpha_p}")
        if not (self.bound_B > 0):
            raise ValueError(f"bound_B must be positive, got {self.bound_B}")


def offdiag_sum(e: np.ndarray, M: np.ndarray) -> float:
    """sum_{i != j} e_i M_ij e_j for a symmetric weight matrix."""
    return float(_backend.offdiag_quadratic(np.ascontiguousarray(e, dtype=np.float64),
                                            np.ascontiguousarray(M, dtype=np.float64)))


def klce2_unbiased(d, g: GramPair) -> KlceEstimate:
    """Unbiased estimate of the squared kernel local calibration error.

    Computes ``sum_{i != j} e_i K_ij L_ij e_j / (n (n - 1))`` with residuals
    ``e = y - fhat``. The diagonal is excluded; a V-statistic is not offered.
    """
    n = d.n
    if n < 2:
        raise SizeError(f"need at least 2 records, got {n}")
    if g.K.shape != (n, n):
        raise ValueError(f"Gram matrices are {g.K.shape}, dataset has n={n}")
    value = offdiag_sum(d.residuals, g.product) / (n * (n - 1))
    return KlceEstimate(value, n, g.k_spec, g.l_spec)


def klce2(d, k_spec: KernelSpec | None = None, l_spec: KernelSpec | None = None
          ) -> KlceEstimate:
    """Convenience wrapper building the Gram pair (median bandwidths by default)."""
    k_spec = k_spec or KernelSpec.median()
    l_spec = l_spec or KernelSpec.median()
    return klce2_unbiased(d, gram_pair(d, k_spec, l_spec))


def kce2(d, k_spec: KernelSpec | None = None) -> KlceEstimate:
    """Global calibration error: KLCE^2 with a constant feature kernel."""
    return klce2(d, k_spec, KernelSpec.constant())


def acceptance_threshold(cfg: ThresholdConfig, n: int) -> float:
    """Estimate below ``B / sqrt(n) * sqrt(ln(alpha_p^-2))`` retains the null."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return cfg.bound_B / math.sqrt(n) * math.sqrt(math.log(1.0 / cfg.alpha_p ** 2))


def hoeffding_tail(cfg: ThresholdConfig, n: int, eps: float) -> float:
    """Two-sided deviation bound ``2 exp(-eps^2 n / (2 B^2))``, clamped to [0, 1]."""
    if not (eps > 0):
        raise ValueError(f"eps must be positive, got {eps}")
    bound = 2.0 * math.exp(-eps * eps * n / (2.0 * cfg.bound_B ** 2))
    return min(1.0, bound)
