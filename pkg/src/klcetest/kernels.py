"""Kernels on scores (k) and audit features (l), and their Gram matrices.

The RBF convention is ``exp(-||u - v||^2 / (2 sigma^2))`` with ``sigma`` in
distance units. The default bandwidth is the median pairwise distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import pdist

from . import _backend

RBF = "rbf"
CONSTANT = "constant"
FIXED = "fixed"
MEDIAN = "median"


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and bandwidth rule.

    ``bandwidth`` is used when ``rule == "fixed"``. With ``rule == "median"``
    the bandwidth is ``scale`` times the median pairwise distance of the data
    the kernel is resolved against; ``scale`` lets width sweeps stay relative to
    the data.
    """

    family: str = RBF
    bandwidth: float | None = None
    rule: str = MEDIAN
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in (RBF, CONSTANT):
            raise KernelError(f"unknown kernel family {self.family!r}")
        if self.rule not in (FIXED, MEDIAN):
            raise KernelError(f"unknown bandwidth rule {self.rule!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise KernelError(f"bandwidth scale must be positive, got {self.scale}")
        if self.family == RBF and self.rule == FIXED:
            if self.bandwidth is None or not (self.bandwidth > 0) or not math.isfinite(
                    self.bandwidth):
                raise KernelError(f"RBF bandwidth must be positive, got {self.bandwidth}")

    @classmethod
    def rbf(cls, bandwidth: float) -> "KernelSpec":
        return cls(RBF, float(bandwidth), FIXED)

    @classmethod
    def median(cls, scale: float = 1.0) -> "KernelSpec":
        return cls(RBF, None, MEDIAN, float(scale))

    @classmethod
    def constant(cls) -> "KernelSpec":
        return cls(CONSTANT, None, FIXED)

    @classmethod
    def parse(cls, family: str = RBF, bandwidth: str | float = MEDIAN,
              scale: float = 1.0) -> "KernelSpec":
        """Build from config values; ``bandwidth`` is ``"median"`` or a number."""
        family = str(family).lower()
        if family == CONSTANT:
            return cls.constant()
        if isinstance(bandwidth, str) and bandwidth.strip().lower() == MEDIAN:
            return cls.median(scale)
        try:
            value = float(bandwidth)
        except (TypeError, ValueError):
            raise KernelError(f"bandwidth must be 'median' or a number, got {bandwidth!r}")
        return cls(family, value * scale, FIXED)

    @property
    def resolved(self) -> bool:
        return self.family == CONSTANT or self.rule == FIXED

    def resolve(self, points) -> "KernelSpec":
        """Fix the bandwidth from ``points`` (no-op unless the rule is median)."""
        if self.resolved:
            return self
        p = _as_points(points)
        if p.shape[0] >= 2 and np.all(p == p[0]):
            # every pairwise distance is 0, so any bandwidth gives the same Gram
            return replace(self, bandwidth=1.0, rule=FIXED, scale=1.0)
        sigma = self.scale * median_heuristic(p)
        return replace(self, bandwidth=sigma, rule=FIXED, scale=1.0)

    def describe(self) -> dict:
        return {"family": self.family, "bandwidth": self.bandwidth,
                "rule": self.rule, "scale": self.scale}


def _as_points(points) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    return np.ascontiguousarray(p)


def kernel_eval(spec: KernelSpec, u, v) -> float:
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if u.shape != v.shape:
        raise KernelError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if spec.family == CONSTANT:
        return 1.0
    if not spec.resolved:
        raise KernelError("median-rule kernel must be resolved before evaluation")
    sq = 0.0
    for a, b in zip(u.tolist(), v.tolist()):
        sq += (a - b) * (a - b)
    return math.exp(-sq / (2.0 * spec.bandwidth * spec.bandwidth))


def median_heuristic(points) -> float:
    """Median of the n(n-1)/2 pairwise Euclidean distances.

    When more than half of the pairs coincide (binary or heavily tied
    features) the plain median is 0; the median over the nonzero distances is
    returned instead.

    Raises:
        KernelError: fewer than two points, or every point identical.
    """
    p = _as_points(points)
    if p.shape[0] < 2:
        raise KernelError("median heuristic needs at least 2 points")
    dist = pdist(p)
    med = float(np.median(dist))
    if med > 0:
        return med
    nonzero = dist[dist > 0]
    if nonzero.size == 0:
        raise KernelError("all points identical: degenerate bandwidth")
    return float(np.median(nonzero))


def gram(spec: KernelSpec, points) -> np.ndarray:
    p = _as_points(points)
    if spec.family == CONSTANT:
        return np.ones((p.shape[0], p.shape[0]))
    if not spec.resolved:
        spec = spec.resolve(p)
    return _backend.rbf_gram(p, spec.bandwidth)


def cross_gram(spec: KernelSpec, queries, points) -> np.ndarray:
    """Kernel values between each query (rows) and each data point (columns)."""
    q, p = _as_points(queries), _as_points(points)
    if q.shape[1] != p.shape[1]:
        raise KernelError(f"dimension mismatch: {q.shape[1]} vs {p.shape[1]}")
    if spec.family == CONSTANT:
        return np.ones((q.shape[0], p.shape[0]))
    if not spec.resolved:
        raise KernelError("median-rule kernel must be resolved before evaluation")
    return _backend.rbf_cross(q, p, spec.bandwidth)


@dataclass(frozen=True)
class GramPair:
    """Score-space Gram ``K`` and feature-space Gram ``L``, with resolved specs."""

    K: np.ndarray
    L: np.ndarray
    k_spec: KernelSpec
    l_spec: KernelSpec

    @property
    def product(self) -> np.ndarray:
        """Tensor-product kernel matrix K * L (elementwise)."""
        return self.K * self.L


def resolve_specs(d, k_spec: KernelSpec, l_spec: KernelSpec) -> tuple[KernelSpec, KernelSpec]:
    return k_spec.resolve(d.fhat), l_spec.resolve(d.x)


def gram_pair(d, k_spec: KernelSpec, l_spec: KernelSpec) -> GramPair:
    k_spec, l_spec = resolve_specs(d, k_spec, l_spec)
    K = gram(k_spec, d.fhat)
    L = gram(l_spec, d.x)
    K.setflags(write=False)
    L.setflags(write=False)
    return GramPair(K, L, k_spec, l_spec)
