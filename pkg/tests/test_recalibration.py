import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klcetest import AuditDataset
from klcetest.recalibration import (CLIP, RecalibrationError, Recalibrator, apply, fit_isotonic,
                                    fit_platt, fit_temperature, golden_section,
                                    isotonic_fit_sorted, logit)

from oracles import isotonic_dp, isotonic_minmax, platt_nll


def exact_calibrated(levels=50, copies=100):
    """Scores whose label frequency equals the score exactly (n = levels * copies)."""
    f, y = [], []
    for j in range(1, levels + 1):
        p = j / (levels + 1)
        ones = round(p * copies)
        p = ones / copies
        f += [p] * copies
        y += [1] * ones + [0] * (copies - ones)
    f = np.array(f)
    return AuditDataset(np.zeros((f.size, 1)), y, f)


def noisy(rng, n=400):
    f = rng.uniform(0.05, 0.95, n)
    y = (rng.random(n) < f ** 1.5).astype(float)
    return AuditDataset(np.zeros((n, 1)), y, f)


class TestPlatt:
    def test_known_optimum(self):
        d = exact_calibrated()
        assert d.n == 5000
        r = fit_platt(d)
        assert r.params["a"] == pytest.approx(1.0, abs=1e-3)
        assert r.params["b"] == pytest.approx(0.0, abs=1e-3)

    def test_stationary_point(self, rng):
        d = noisy(rng)
        r = fit_platt(d)
        a, b, s = r.params["a"], r.params["b"], logit(d.fhat)
        h = 1e-6
        ga = (platt_nll(a + h, b, s, d.y) - platt_nll(a - h, b, s, d.y)) / (2 * h)
        gb = (platt_nll(a, b + h, s, d.y) - platt_nll(a, b - h, s, d.y)) / (2 * h)
        assert abs(ga) < 1e-6 and abs(gb) < 1e-6

    def test_single_class(self):
        with pytest.raises(RecalibrationError, match="single class"):
            fit_platt(AuditDataset([[0.0]] * 3, [1, 1, 1], [0.2, 0.5, 0.7]))

    def test_identity_map(self, rng):
        f = rng.random(50)
        out = Recalibrator("platt", {"a": 1.0, "b": 0.0})(f)
        np.testing.assert_allclose(out, np.clip(f, CLIP, 1 - CLIP), atol=1e-12)


class TestTemperature:
    def test_known_optimum(self):
        assert fit_temperature(exact_calibrated()).params["T"] == pytest.approx(1.0, abs=0.05)

    def test_identity(self, rng):
        f = rng.random(100)
        out = Recalibrator("temperature", {"T": 1.0})(f)
        np.testing.assert_allclose(out, np.clip(f, CLIP, 1 - CLIP), atol=1e-12)

    def test_rank_preserving(self, rng):
        d = noisy(rng)
        r = fit_temperature(d)
        q = rng.random(200)
        out = r(q)
        assert np.all(np.diff(out[np.argsort(q)]) >= 0)
        assert r.params["T"] > 0

    def test_golden_section(self):
        assert golden_section(lambda t: (t - 3.3) ** 2, 0.01, 100) == pytest.approx(3.3, abs=1e-6)

    def test_single_class(self):
        with pytest.raises(RecalibrationError):
            fit_temperature(AuditDataset([[0.0]] * 3, [0, 0, 0], [0.2, 0.5, 0.7]))


class TestIsotonic:
    def test_single_violator(self):
        r = fit_isotonic(AuditDataset([[0.0], [0.0]], [1, 0], [0.3, 0.6]))
        np.testing.assert_allclose(r.params["values"], [0.5, 0.5])

    def test_no_pooling(self):
        f = [0.1, 0.2, 0.4, 0.6, 0.9]
        y = [0, 0, 1, 1, 1]
        r = fit_isotonic(AuditDataset(np.zeros((5, 1)), y, f))
        np.testing.assert_array_equal(r.params["values"], y)
        np.testing.assert_array_equal(r(f), y)

    def test_matches_dp_n50(self, rng):
        f = np.sort(rng.random(50))
        y = (rng.random(50) < f).astype(float)
        r = fit_isotonic(AuditDataset(np.zeros((50, 1)), y, f))
        np.testing.assert_allclose(r.params["values"], isotonic_dp(y), rtol=0, atol=1e-10)

    def test_real_valued_matches_oracles(self, rng):
        for _ in range(20):
            v = rng.standard_normal(25)
            fit = isotonic_fit_sorted(v)
            np.testing.assert_allclose(fit, isotonic_dp(v), atol=1e-10)
            np.testing.assert_allclose(fit, isotonic_minmax(v), atol=1e-10)

    def test_weighted_matches_dp(self, rng):
        v, w = rng.standard_normal(20), rng.uniform(0.5, 3, 20)
        np.testing.assert_allclose(isotonic_fit_sorted(v, w), isotonic_dp(v, w), atol=1e-10)

    def test_ties_pooled(self):
        r = fit_isotonic(AuditDataset(np.zeros((4, 1)), [1, 0, 0, 1], [0.5, 0.5, 0.2, 0.9]))
        assert r.params["breakpoints"] == [0.2, 0.5, 0.9]
        np.testing.assert_allclose(r.params["values"], [0.0, 0.5, 1.0])

    def test_stepwise_prediction(self, rng):
        d = noisy(rng, 60)
        r = fit_isotonic(d)
        bp, vals = np.array(r.params["breakpoints"]), np.array(r.params["values"])
        q = rng.uniform(-0.1, 1.1, 300)
        for qi, out in zip(q, r(q)):
            below = np.flatnonzero(bp <= qi)
            want = vals[0] if below.size == 0 else vals[below[-1]]
            assert out == want

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.sampled_from([0, 1])), min_size=2,
                    max_size=40), st.lists(st.floats(-0.5, 1.5), min_size=2, max_size=30))
    def test_monotone_and_bounded(self, rows, queries):
        r = fit_isotonic(AuditDataset(np.zeros((len(rows), 1)), [t[1] for t in rows],
                                      [t[0] for t in rows]))
        vals = np.array(r.params["values"])
        assert np.all(np.diff(vals) >= 0) and np.all((vals >= 0) & (vals <= 1))
        q = np.sort(queries)
        assert np.all(np.diff(r(q)) >= 0)


class TestApplyAndSerialize:
    def test_apply_keeps_labels_features(self, rng, make_dataset):
        d = make_dataset(rng, 30, 2)
        out = apply(Recalibrator("temperature", {"T": 2.0}), d)
        assert np.array_equal(out.y, d.y) and np.array_equal(out.x, d.x)
        assert np.all((out.fhat >= 0) & (out.fhat <= 1))

    def test_unfitted(self, rng, make_dataset):
        with pytest.raises(RecalibrationError):
            apply(Recalibrator("platt", {}, fitted=False), make_dataset(rng, 5))

    @pytest.mark.parametrize("fit", [fit_platt, fit_temperature, fit_isotonic])
    def test_json_round_trip(self, rng, fit):
        d = noisy(rng, 200)
        r = fit(d)
        back = Recalibrator.from_json(r.to_json())
        assert back == r
        assert set(json.loads(r.to_json())) == {"kind", "parameters"}
        np.testing.assert_array_equal(back(d.fhat), r(d.fhat))
