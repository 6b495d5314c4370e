"""Local calibration bias: kernel-weighted residual averages around query points."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Hashable, Sequence

import numpy as np

from .kernels import KernelSpec, cross_gram, resolve_specs

QUERY_BLOCK = 512


class NoSupportError(ValueError):
    """Every kernel weight at the query underflowed to zero."""


@dataclass(frozen=True)
class LcbEstimate:
    query_x: tuple[float, ...]
    query_fhat: float
    bias: float
    debiased_fhat: float
    effective_weight: float


@dataclass(frozen=True)
class LcbProfile:
    """Per-query estimates; ``None`` where the query had no kernel support."""

    estimates: tuple[LcbEstimate | None, ...]
    failures: tuple[tuple[int, str], ...]

    @property
    def ok(self) -> list[LcbEstimate]:
        return [e for e in self.estimates if e is not None]


def _make(qx, qf, num, den) -> LcbEstimate:
    bias = num / den
    # weighted mean of values in [-1, 1]; guard rounding
    bias = min(1.0, max(-1.0, bias))
    return LcbEstimate(tuple(float(v) for v in qx), float(qf), float(bias),
                       float(min(1.0, max(0.0, qf + bias))), float(den))


def lcb_at(d, kernels: tuple[KernelSpec, KernelSpec], query) -> LcbEstimate:
    """Bias at one query ``(x', fhat')``.

    ``sum_i e_i k(fhat_i, fhat') l(x_i, x') / sum_i k(fhat_i, fhat') l(x_i, x')``,
    summing over every record (no self-exclusion). Median-rule kernels are
    resolved on ``d``.

    Raises:
        NoSupportError: the denominator is zero.
    """
    profile = lcb_profile(d, kernels, [query])
    if profile.failures:
        raise NoSupportError(profile.failures[0][1])
    return profile.estimates[0]


def lcb_profile(d, kernels: tuple[KernelSpec, KernelSpec], queries: Sequence | None = None
                ) -> LcbProfile:
    """``lcb_at`` for many queries; defaults to the dataset's own records.

    No-support queries are collected in ``failures`` instead of raising.
    """
    k_spec, l_spec = resolve_specs(d, *kernels)
    if queries is None:
        qx, qf = np.asarray(d.x), np.asarray(d.fhat)
    else:
        queries = list(queries)
        qx = np.array([np.atleast_1d(np.asarray(q[0], dtype=np.float64)) for q in queries])
        qf = np.array([float(q[1]) for q in queries])
        if qx.size == 0:
            return LcbProfile((), ())
        if qx.ndim != 2 or qx.shape[1] != d.d_x:
            raise ValueError(f"queries must have {d.d_x} features")
    e = d.residuals
    estimates: list[LcbEstimate | None] = []
    failures: list[tuple[int, str]] = []
    for start in range(0, qf.shape[0], QUERY_BLOCK):
        stop = min(start + QUERY_BLOCK, qf.shape[0])
        W = cross_gram(k_spec, qf[start:stop], d.fhat) * cross_gram(l_spec, qx[start:stop], d.x)
        # row-wise reduction: identical queries give bit-identical results
        num = (W * e).sum(axis=1)
        den = W.sum(axis=1)
        for j in range(stop - start):
            i = start + j
            if not den[j] > 0:
                estimates.append(None)
                failures.append((i, f"query {i}: no kernel support (all weights are zero)"))
            else:
                estimates.append(_make(qx[i], qf[i], num[j], den[j]))
    return LcbProfile(tuple(estimates), tuple(failures))


def polyfit(t, values, degree: int) -> np.ndarray:
    """Least-squares polynomial coefficients, lowest order first."""
    V = np.vander(np.asarray(t, dtype=np.float64), degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, np.asarray(values, dtype=np.float64), rcond=None)
    return coef


def group_trend(estimates: Sequence[LcbEstimate],
                group_key: int | Callable[[LcbEstimate], Hashable],
                axis: int, degree: int = 3) -> dict[Hashable, np.ndarray]:
    """Per-group polynomial fit of bias against feature ``axis``.

    ``group_key`` is a feature index (group by its distinct values) or a
    function of the estimate. Groups with fewer than ``degree + 1`` points are
    skipped with a warning.
    """
    if isinstance(group_key, int):
        idx = group_key
        key = lambda est: est.query_x[idx]  # noqa: E731
    else:
        key = group_key
    groups: dict[Hashable, list[LcbEstimate]] = {}
    for est in estimates:
        groups.setdefault(key(est), []).append(est)
    out = {}
    for name in sorted(groups, key=repr):
        members = groups[name]
        t = [m.query_x[axis] for m in members]
        if len(members) < degree + 1 or len(set(t)) < degree + 1:
            warnings.warn(f"group {name!r}: {len(members)} points cannot fit degree "
                          f"{degree}; skipped", stacklevel=2)
            continue
        out[name] = polyfit(t, [m.bias for m in members], degree)
    return out
