"""Post-hoc recalibrators: Platt, temperature, and isotonic (PAVA)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from . import _backend

CLIP = 1e-6
PLATT = "platt"
TEMPERATURE = "temperature"
ISOTONIC = "isotonic"


class RecalibrationError(ValueError):
    pass


class ConvergenceError(RecalibrationError):
    def __init__(self, message: str, grad_norm: float):
        super().__init__(message)
        self.grad_norm = grad_norm


@dataclass(frozen=True)
class Recalibrator:
    """A fitted score map. ``params`` holds a, b / T / breakpoints, values."""

    kind: str
    params: dict
    fitted: bool = True

    def __call__(self, scores) -> np.ndarray:
        return self.transform(scores)

    def transform(self, scores) -> np.ndarray:
        if not self.fitted:
            raise RecalibrationError("recalibrator is not fitted")
        s = np.asarray(scores, dtype=np.float64)
        if self.kind == PLATT:
            return expit(self.params["a"] * logit(s) + self.params["b"])
        if self.kind == TEMPERATURE:
            return expit(logit(s) / self.params["T"])
        if self.kind == ISOTONIC:
            return isotonic_predict(np.asarray(self.params["breakpoints"]),
                                    np.asarray(self.params["values"]), s)
        raise RecalibrationError(f"unknown recalibrator kind {self.kind!r}")

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "parameters": self.params}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Recalibrator":
        obj = json.loads(text)
        kind, params = obj["kind"], obj["parameters"]
        if kind not in (PLATT, TEMPERATURE, ISOTONIC):
            raise RecalibrationError(f"unknown recalibrator kind {kind!r}")
        return cls(kind, params)


def logit(p) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=np.float64), CLIP, 1.0 - CLIP)
    return np.log(p) - np.log1p(-p)


def _require_both_classes(y) -> None:
    if np.all(y == y[0]):
        raise RecalibrationError("calibration set has a single class")


def bernoulli_nll(z, y) -> float:
    """Mean negative log-likelihood of labels ``y`` under probabilities sigmoid(z)."""
    return float(-np.mean(y * log_expit(z) + (1.0 - y) * log_expit(-z)))


def fit_platt(calib, max_iter: int = 100, tol: float = 1e-8) -> Recalibrator:
    """Fit sigmoid(a * logit(fhat) + b) by damped Newton on the mean NLL.

    Raises:
        RecalibrationError: single-class calibration set.
        ConvergenceError: gradient norm still >= ``tol`` after ``max_iter``.
    """
    y = np.asarray(calib.y)
    _require_both_classes(y)
    s = logit(calib.fhat)
    theta = np.array([1.0, 0.0])

    def nll(t):
        return bernoulli_nll(t[0] * s + t[1], y)

    gnorm = math.inf
    for _ in range(max_iter):
        p = expit(theta[0] * s + theta[1])
        r = p - y
        grad = np.array([np.mean(r * s), np.mean(r)])
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            break
        w = p * (1.0 - p)
        H = np.array([[np.mean(w * s * s), np.mean(w * s)],
                      [np.mean(w * s), np.mean(w)]])
        H[np.diag_indices(2)] += 1e-12
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = grad
        f0, t = nll(theta), 1.0
        # backtracking (Armijo) keeps every step a descent step
        while t > 1e-10 and nll(theta - t * step) > f0 - 1e-4 * t * float(grad @ step):
            t *= 0.5
        theta = theta - t * step
    else:
        p = expit(theta[0] * s + theta[1])
        r = p - y
        gnorm = float(np.hypot(np.mean(r * s), np.mean(r)))
        if gnorm >= tol:
            raise ConvergenceError(
                f"Platt fit did not converge in {max_iter} iterations "
                f"(gradient norm {gnorm:.3g})", gnorm)
    return Recalibrator(PLATT, {"a": float(theta[0]), "b": float(theta[1])})


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo: float, hi: float, width: float = 1e-6) -> float:
    """Minimizer of a unimodal ``f`` on [lo, hi], bracketed to ``width``."""
    a, b = lo, hi
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > width:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit_temperature(calib, lo: float = 1e-2, hi: float = 1e2) -> Recalibrator:
    """Single temperature T minimizing the NLL of sigmoid(logit(fhat) / T)."""
    y = np.asarray(calib.y)
    _require_both_classes(y)
    s = logit(calib.fhat)
    T = golden_section(lambda t: bernoulli_nll(s / t, y), lo, hi)
    return Recalibrator(TEMPERATURE, {"T": float(T)})


def isotonic_fit_sorted(values, weights=None) -> np.ndarray:
    """Weighted least-squares nondecreasing fit to an already ordered sequence."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    w = (np.ones_like(v) if weights is None
         else np.ascontiguousarray(weights, dtype=np.float64))
    return np.asarray(_backend.pava(v, w))


def fit_isotonic(calib) -> Recalibrator:
    """PAVA on labels ordered by score; tied scores are pooled first.

    Predictions are stepwise constant between breakpoints and flat outside.
    """
    if calib.n < 2:
        raise RecalibrationError("isotonic fit needs at least 2 records")
    scores, inverse = np.unique(np.asarray(calib.fhat), return_inverse=True)
    counts = np.bincount(inverse).astype(np.float64)
    label_mean = np.bincount(inverse, weights=calib.y) / counts
    fitted = np.clip(isotonic_fit_sorted(label_mean, counts), 0.0, 1.0)
    return Recalibrator(ISOTONIC, {"breakpoints": scores.tolist(),
                                   "values": fitted.tolist()})


def isotonic_predict(breakpoints, values, scores) -> np.ndarray:
    pos = np.searchsorted(breakpoints, scores, side="right") - 1
    return np.asarray(values)[np.clip(pos, 0, len(values) - 1)]


def apply(r: Recalibrator, d):
    """Dataset with recalibrated scores; labels and features unchanged."""
    return d.with_scores(np.clip(r.transform(d.fhat), 0.0, 1.0))


FITTERS = {PLATT: fit_platt, TEMPERATURE: fit_temperature, ISOTONIC: fit_isotonic}
