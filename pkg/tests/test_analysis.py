import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trustpred.analysis import (
    SIGMA_FLOOR,
    BoundInput,
    GaussianFit,
    avg_kl,
    bhattacharyya,
    fit_gaussian,
    generalization_bound,
    grad_norm_stats,
    histogram,
    input_gradients,
    kl_gaussian,
    separability,
)
from trustpred.data_io import Dataset, SynthConfig, synth_generate
from trustpred.losses import LossSpec, batch_loss
from trustpred.metrics import ThresholdPolicy, tpr_tnr
from trustpred.oracle import HeadMode, OracleHead, forward

fits = st.builds(GaussianFit, st.floats(-50, 50), st.floats(1e-6, 1e3))


class TestDistances:
    def test_unit_values(self):
        a, b = GaussianFit(0.0, 1.0), GaussianFit(1.0, 1.0)
        assert abs(kl_gaussian(a, b) - 0.5) < 1e-12
        assert abs(bhattacharyya(a, b) - 0.125) < 1e-12

    def test_against_mpmath(self):
        a, b = GaussianFit(0.3, 0.7), GaussianFit(-1.1, 2.5)
        m1, s1, m2, s2 = map(mp.mpf, (0.3, 0.7, -1.1, 2.5))
        kl = mp.log(s2 / s1) + (s1**2 + (m1 - m2) ** 2) / (2 * s2**2) - mp.mpf(1) / 2
        bd = (mp.log((s1**2 / s2**2 + s2**2 / s1**2 + 2) / 4) / 4
              + (m1 - m2) ** 2 / (4 * (s1**2 + s2**2)))
        assert kl_gaussian(a, b) == pytest.approx(float(kl), rel=1e-14)
        assert bhattacharyya(a, b) == pytest.approx(float(bd), rel=1e-14)

    @settings(max_examples=300)
    @given(a=fits)
    def test_identity_exactly_zero(self, a):
        assert kl_gaussian(a, a) == 0.0
        assert bhattacharyya(a, a) == 0.0

    @settings(max_examples=300)
    @given(a=fits, b=fits)
    def test_avg_kl_symmetric(self, a, b):
        assert avg_kl(a, b) == avg_kl(b, a)

    def test_non_negative_1e5_trials(self):
        rng = np.random.default_rng(0)
        mu = rng.uniform(-5, 5, (100_000, 2))
        sig = np.exp(rng.uniform(-6, 4, (100_000, 2)))
        for (m1, m2), (s1, s2) in zip(mu.tolist(), sig.tolist()):
            a, b = GaussianFit(m1, s1), GaussianFit(m2, s2)
            assert kl_gaussian(a, b) >= 0
            assert bhattacharyya(a, b) >= 0

    def test_sigma_floor_on_constant_sample(self):
        fit = fit_gaussian(np.ones(10))
        assert fit.sigma == SIGMA_FLOOR
        sep = separability(np.r_[np.ones(5), np.full(5, 0.5)], np.r_[np.ones(5), np.zeros(5)])
        assert math.isfinite(sep["avg_kl"]) and sep["avg_kl"] > 1e20

    def test_fit_uses_unbiased_variance(self):
        fit = fit_gaussian([1.0, 2.0, 3.0, 4.0])
        assert fit.mu == 2.5 and fit.sigma == pytest.approx(math.sqrt(5 / 3), rel=1e-15)

    def test_fit_needs_two_values(self):
        with pytest.raises(ValueError):
            fit_gaussian([0.5])


class TestBound:
    def test_matches_mpmath(self):
        b = generalization_bound(BoundInput(19.9, 1e6, 0.05, 50_000))
        want = mp.mpf(19.9) * mp.sqrt((mp.log(mp.mpf(1e6)) + mp.log(2 / mp.mpf(0.05)))
                                      / (2 * 50_000))
        assert b == pytest.approx(float(want), rel=1e-14)

    def test_square_root_scaling_exact(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            inp = BoundInput(rng.uniform(0.1, 100), 10 ** rng.uniform(0, 12),
                             rng.uniform(1e-6, 0.999), int(rng.integers(1, 10**9)))
            b1 = generalization_bound(inp)
            b4 = generalization_bound(BoundInput(inp.loss_max, inp.hypothesis_count,
                                                 inp.delta, 4 * inp.sample_count))
            assert abs(b4 - b1 / 2) <= 1e-15 * b1

    def test_monotone_1e3_inputs(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            lm, f, d, n = (rng.uniform(0.1, 100), 10 ** rng.uniform(0, 12),
                           rng.uniform(1e-6, 0.9), int(rng.integers(1, 10**8)))
            base = generalization_bound(BoundInput(lm, f, d, n))
            assert generalization_bound(BoundInput(lm, f, d, n + 1 + n // 10)) < base
            assert generalization_bound(BoundInput(lm, f * rng.uniform(1.01, 10), d, n)) > base
            assert generalization_bound(BoundInput(lm, f, d * rng.uniform(0.1, 0.99), n)) > base

    @pytest.mark.parametrize("kwargs", [
        {"delta": 0.0}, {"delta": 1.0}, {"hypothesis_count": 0.0},
        {"sample_count": 0}, {"loss_max": -1.0}, {"sample_count": 2.5},
    ])
    def test_invalid(self, kwargs):
        args = {"loss_max": 1.0, "hypothesis_count": 10.0, "delta": 0.05, "sample_count": 100}
        args.update(kwargs)
        with pytest.raises(ValueError):
            BoundInput(**args)

    def test_zero_loss_max(self):
        assert generalization_bound(BoundInput(0.0, 10.0, 0.05, 100)) == 0.0


class TestHistogram:
    def test_matches_counts_with_equal_thresholds(self, rng):
        conf = rng.random(500)
        o = rng.integers(0, 2, 500)
        hist = histogram(conf, o)
        _, _, counts = tpr_tnr(conf, o)
        assert hist.totals() == counts
        assert sum(hist.totals().values()) == 500

    def test_abstain_group(self, rng):
        conf = rng.random(500)
        o = rng.integers(0, 2, 500)
        pol = ThresholdPolicy(0.6, 0.3)
        tot = histogram(conf, o, pol, bins=10).totals()
        _, _, counts = tpr_tnr(conf, o, pol)
        assert tot["tp"] == counts["tp"] and tot["tn"] == counts["tn"]
        assert tot["abstain"] == counts["abstain"]
        assert sum(tot.values()) == 500

    def test_bins(self):
        hist = histogram([0.0, 0.05, 0.999, 1.0], [0, 0, 1, 1], bins=10)
        assert hist.edges.shape == (11,)
        assert hist.counts["tn"][0] == 2 and hist.counts["tp"][9] == 2
        assert len(list(hist.rows())) == 10


class TestInputGradients:
    def test_hand_example(self):
        data = Dataset(np.array([[0.0]]), np.array([1]))
        head = OracleHead(np.array([1.0]), 0.0, HeadMode.RAW_LINEAR)
        assert grad_norm_stats(data, head, LossSpec.ce()) == 0.5

    def test_zero_head(self):
        data = Dataset(np.array([[1.0, 2.0]]), np.array([0]))
        head = OracleHead(np.zeros(2), 0.0, HeadMode.RAW_LINEAR)
        assert grad_norm_stats(data, head, LossSpec.steep_slope()) == 0.0

    @pytest.mark.parametrize("mode", list(HeadMode))
    def test_matches_finite_differences(self, mode):
        data = synth_generate(SynthConfig(d=5, n=20, seed=3))
        head = OracleHead(np.array([0.5, -1.0, 0.25, 0.8, -0.6]), 0.2, mode)
        spec = LossSpec.ce()
        x = data.features.astype(np.float64)
        n = data.n

        def total(xx):
            return n * batch_loss(spec, (forward(head, xx), data.o))[0]

        h = 1e-6
        fd = np.empty_like(x)
        for i in range(n):
            for j in range(5):
                xp, xm = x.copy(), x.copy()
                xp[i, j] += h
                xm[i, j] -= h
                fd[i, j] = (total(xp) - total(xm)) / (2 * h)
        got = input_gradients(data, head, spec)
        np.testing.assert_allclose(got, fd, rtol=1e-5, atol=1e-10)
        want = np.mean(np.linalg.norm(fd, axis=1))
        assert grad_norm_stats(data, head, spec) == pytest.approx(want, rel=1e-5)
