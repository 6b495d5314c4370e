"""Synthetic audit data and Type-I / Type-II error experiments.

Features are i.i.d. standard normal, labels ~ Bernoulli(sigmoid(sum x)).
The ``bayes`` model scores with the true probability; ``droplast`` omits the
last feature, so it is calibrated on x_1..x_{d-1} but not on x_d.

Normals are drawn by the Box-Muller transform from Philox uniforms: pairs
``(u1, u2)`` with ``u1`` in (0, 1] give ``sqrt(-2 ln u1) * (cos, sin)(2 pi u2)``,
consumed row-major.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import beta

from .bootstrap import STREAM_DATA, TestConfig, run_test
from .data import AuditDataset
from .kernels import KernelSpec

BAYES = "bayes"
DROPLAST = "droplast"

CSV_COLUMNS = ("mode", "d", "N", "bandwidth_scale", "replicates", "rejections",
               "rejection_rate", "ci_lo", "ci_hi")


@dataclass(frozen=True)
class SimConfig:
    d: int = 2
    N: int = 500
    replicates: int = 1000
    alpha_p: float = 0.05
    n_bootstrap: int = 500
    seed: int = 0
    model: str = BAYES
    bandwidth_scale: float = 1.0
    recenter: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.model not in (BAYES, DROPLAST):
            raise ValueError(f"unknown model {self.model!r}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.model == DROPLAST and self.d < 2:
            raise ValueError("droplast model needs d >= 2")
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")

    def test_config(self, replicate: int) -> TestConfig:
        return TestConfig(
            n_bootstrap=self.n_bootstrap,
            alpha_p=self.alpha_p,
            seed=derive_seed(self.seed, 0xB007, replicate),
            k_spec=KernelSpec.median(self.bandwidth_scale),
            l_spec=KernelSpec.median(self.bandwidth_scale),
            recenter=self.recenter,
        )


def derive_seed(seed: int, *keys: int) -> int:
    """64-bit child seed determined by ``seed`` and ``keys``."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def data_stream(cfg: SimConfig, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(
        key=cfg.seed, counter=[0, replicate, (cfg.d << 32) | cfg.N, STREAM_DATA]))


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    pairs = (size + 1) // 2
    u1 = 1.0 - rng.random(pairs)
    u2 = rng.random(pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return z[:size]


def gen_synthetic(cfg: SimConfig, replicate: int) -> AuditDataset:
    rng = data_stream(cfg, replicate)
    x = box_muller(rng, cfg.N * cfg.d).reshape(cfg.N, cfg.d)
    p = expit(x.sum(axis=1))
    y = (rng.random(cfg.N) < p).astype(np.float64)
    fhat = p if cfg.model == BAYES else expit(x[:, :-1].sum(axis=1))
    return AuditDataset(x, y, fhat, [f"x{i + 1}" for i in range(cfg.d)])


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval for k successes in n trials."""
    a = (1.0 - level) / 2.0
    lo = 0.0 if k == 0 else float(beta.ppf(a, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1.0 - a, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class SimRow:
    d: int
    N: int
    bandwidth_scale: float
    replicates: int
    rejections: int
    ci_level: float = 0.95
    p_values: tuple[float, ...] = field(default=(), repr=False)

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.replicates

    @property
    def type2_error(self) -> float:
        return 1.0 - self.rejection_rate

    @property
    def ci(self) -> tuple[float, float]:
        return clopper_pearson(self.rejections, self.replicates, self.ci_level)


@dataclass(frozen=True)
class SimReport:
    mode: str
    rows: tuple[SimRow, ...]

    def cell(self, d: int, N: int, bandwidth_scale: float = 1.0) -> SimRow:
        for row in self.rows:
            if (row.d, row.N, row.bandwidth_scale) == (d, N, bandwidth_scale):
                return row
        raise KeyError((d, N, bandwidth_scale))

    def write_csv(self, stream) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            lo, hi = r.ci
            w.writerow([self.mode, r.d, r.N, repr(r.bandwidth_scale), r.replicates,
                        r.rejections, repr(r.rejection_rate), repr(lo), repr(hi)])


def _replicate_p(cfg: SimConfig, replicate: int) -> float:
    return run_test(gen_synthetic(cfg, replicate), cfg.test_config(replicate)).p_value


def run_cell(cfg: SimConfig, ci_level: float = 0.95) -> SimRow:
    """Run every replicate of one configuration and count rejections."""
    reps = range(cfg.replicates)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            ps = list(pool.map(lambda r: _replicate_p(cfg, r), reps))
    else:
        ps = [_replicate_p(cfg, r) for r in reps]
    rejections = sum(p < cfg.alpha_p for p in ps)
    return SimRow(cfg.d, cfg.N, cfg.bandwidth_scale, cfg.replicates, rejections,
                  ci_level, tuple(ps))


def _grid(cfg: SimConfig, model: str, ds: Iterable[int], Ns: Iterable[int],
          scales: Iterable[float]) -> list[SimConfig]:
    cells = []
    for d in ds:
        for N in Ns:
            for scale in scales:
                cell_no = len(cells)
                cells.append(replace(cfg, model=model, d=int(d), N=int(N),
                                     bandwidth_scale=float(scale),
                                     seed=derive_seed(cfg.seed, cell_no)))
    return cells


def type1_experiment(cfg: SimConfig, bandwidth_scales: Sequence[float] = (1.0,),
                     n_values: Sequence[int] | None = None,
                     d_values: Sequence[int] | None = None) -> SimReport:
    """Rejection rate of the calibrated (Bayes) model per (d, N, width).

    Every cell draws from its own seed, so cells are independent.
    """
    cells = _grid(cfg, BAYES, d_values or (cfg.d,), n_values or (cfg.N,), bandwidth_scales)
    return SimReport("type1", tuple(run_cell(c) for c in cells))


def type2_experiment(cfg: SimConfig, d_grid: Sequence[int] = tuple(range(2, 11)),
                     n_grid: Sequence[int] = (500, 1000)) -> SimReport:
    """Rejection rate of the drop-last model per (d, N); Type-II error is 1 - rate."""
    cells = _grid(cfg, DROPLAST, d_grid, n_grid, (cfg.bandwidth_scale,))
    return SimReport("type2", tuple(run_cell(c) for c in cells))


def inference_estimate(d: AuditDataset, I_values) -> float:
    """Score-weighted mean sum_i I(x_i) fhat_i / sum_i fhat_i, estimating E[I(x) | y=1]."""
    I_values = np.asarray(I_values, dtype=np.float64)
    if I_values.shape != (d.n,):
        raise ValueError(f"need one value per record ({d.n}), got {I_values.shape}")
    total = float(np.sum(d.fhat))
    if not total > 0:
        raise ValueError("zero total score weight")
    return float(np.dot(I_values, d.fhat) / total)
