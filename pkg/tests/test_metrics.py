from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import reference as ref
from trustpred.errors import UndefinedMetricError
from trustpred.metrics import (
    METRIC_KEYS,
    ConfidenceRecord,
    ThresholdPolicy,
    aupr,
    auc,
    aurc,
    fpr_at_tpr,
    full_report,
    pr_points,
    risk_coverage,
    roc_points,
    tpr_tnr,
)

# confidences on a 1/64 grid: plenty of ties, and 1 - c is exact
grid_conf = st.integers(0, 64).map(lambda i: i / 64)
record_sets = st.lists(st.tuples(grid_conf, st.sampled_from([0, 1])), min_size=2, max_size=200)


def both_classes(records):
    return len({o for _, o in records}) == 2


def random_record_set(rng):
    n = int(rng.integers(2, 201))
    if rng.random() < 0.5:
        conf = rng.integers(0, 8, n) / 8  # heavy ties
    else:
        conf = rng.random(n)
    o = rng.integers(0, 2, n)
    o[0], o[1] = 0, 1
    return conf, o


HAND = ([0.9, 0.8, 0.8, 0.6, 0.3, 0.1], [1, 1, 0, 1, 0, 0])


class TestHandBuilt:
    def test_auc(self):
        # 0.9 beats 3 negatives, 0.8 beats 2 and ties 1, 0.6 beats 2
        assert auc(*HAND) == float(ref.auc_pairwise(*HAND))
        assert auc(*HAND) == pytest.approx(7.5 / 9, abs=1e-15)

    def test_aupr_success(self):
        # thresholds 0.9: 1/1, 0.8: 2/3, 0.6: 3/4 -> (1 + 2/3 + 3/4) / 3
        assert aupr(*HAND) == pytest.approx((1 + 2 / 3 + 3 / 4) / 3, abs=1e-15)

    def test_aupr_error(self):
        # scored by -conf: 0.1: 1/1, 0.3: 2/2, 0.6: -, 0.8 group: 3/5
        assert aupr(*HAND, positive_is_error=True) == pytest.approx((1 + 1 + 3 / 5) / 3, abs=1e-15)

    def test_tpr_tnr(self):
        tpr, tnr, counts = tpr_tnr(*HAND)
        assert (tpr, tnr) == (1.0, 2 / 3)
        assert counts == {"tp": 3, "fp": 1, "tn": 2, "fn": 0, "abstain": 0}

    def test_fpr_at_tpr(self):
        # ROC: (0,0) (0,1/3) (1/3,2/3) (1/3,1) ...
        assert fpr_at_tpr(*HAND, 0.95) == pytest.approx(1 / 3, abs=1e-15)
        assert fpr_at_tpr(*HAND, 0.5) == pytest.approx(1 / 6, abs=1e-15)

    def test_risk_coverage(self):
        pts = risk_coverage(*HAND)
        assert [(p.coverage, p.selective_risk) for p in pts] == [
            (1 / 6, 0.0), (3 / 6, 1 - 2 / 3), (4 / 6, 1 - 3 / 4), (5 / 6, 1 - 3 / 5), (1.0, 0.5)]

    def test_records_input(self):
        recs = [ConfidenceRecord(c, o) for c, o in zip(*HAND)]
        assert auc(recs) == auc(*HAND)


class TestAgainstBruteForce:
    def test_auc_and_aupr_500_sets(self):
        rng = np.random.default_rng(2024)
        for _ in range(500):
            conf, o = random_record_set(rng)
            c, y = conf.tolist(), o.tolist()
            assert abs(auc(conf, o) - float(ref.auc_pairwise(c, y))) < 1e-12
            assert abs(aupr(conf, o) - float(ref.average_precision(c, y))) < 1e-12
            err = ref.average_precision([-v for v in c], [1 - v for v in y])
            assert abs(aupr(conf, o, positive_is_error=True) - float(err)) < 1e-12

    def test_roc_vertices(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            conf, o = random_record_set(rng)
            want = ref.roc_vertices(conf.tolist(), o.tolist())
            got = roc_points(conf, o)
            assert got == [(float(f), float(t)) for f, t in want]

    def test_fpr_at_tpr_interpolation(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            conf, o = random_record_set(rng)
            pts = ref.roc_vertices(conf.tolist(), o.tolist())
            target = Fraction(19, 20)
            for (f0, t0), (f1, t1) in zip(pts, pts[1:]):
                if t1 >= target:
                    want = f1 if t1 == target else f0 + (target - t0) * (f1 - f0) / (t1 - t0)
                    break
            assert fpr_at_tpr(conf, o) == pytest.approx(float(want), abs=1e-12)

    def test_risk_coverage_endpoint_exact(self):
        rng = np.random.default_rng(9)
        for _ in range(500):
            conf, o = random_record_set(rng)
            last = risk_coverage(conf, o)[-1]
            assert last.coverage == 1.0
            assert last.selective_risk == 1 - o.sum() / o.shape[0]


@settings(max_examples=200, deadline=None)
@given(records=record_sets)
def test_rank_invariance(records):
    assume(both_classes(records))
    c = np.array([r[0] for r in records])
    o = np.array([r[1] for r in records])
    # strictly increasing and fixes 0.5
    warped = 0.5 + np.sign(c - 0.5) * np.abs(c - 0.5) ** 3 * 4
    assert auc(warped, o) == auc(c, o)
    assert fpr_at_tpr(warped, o) == fpr_at_tpr(c, o)
    assert aupr(warped, o) == aupr(c, o)
    assert aupr(warped, o, positive_is_error=True) == aupr(c, o, positive_is_error=True)
    assert risk_coverage(warped, o) == risk_coverage(c, o)
    assert tpr_tnr(warped, o) == tpr_tnr(c, o)


@settings(max_examples=200, deadline=None)
@given(records=record_sets)
def test_complement_symmetry(records):
    assume(both_classes(records))
    c = np.array([r[0] for r in records])
    o = np.array([r[1] for r in records])
    assert auc(1 - c, 1 - o) == auc(c, o)
    assert aupr(1 - c, 1 - o) == aupr(c, o, positive_is_error=True)


@settings(max_examples=200, deadline=None)
@given(records=record_sets)
def test_counts_partition(records):
    assume(both_classes(records))
    c = np.array([r[0] for r in records])
    o = np.array([r[1] for r in records])
    policy = ThresholdPolicy(0.7, 0.2)
    _, _, counts = tpr_tnr(c, o, policy)
    assert counts["tp"] + counts["fn"] == o.sum()
    assert counts["tn"] + counts["fp"] == (o == 0).sum()
    assert counts["abstain"] == np.count_nonzero((c > 0.2) & (c <= 0.7))


class TestEdgeCases:
    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError, match="no o=0"):
            auc([0.1, 0.9], [1, 1])
        with pytest.raises(UndefinedMetricError, match="no o=1"):
            tpr_tnr([0.1, 0.9], [0, 0])
        with pytest.raises(UndefinedMetricError):
            aupr([0.1, 0.9], [1, 1], positive_is_error=True)

    def test_all_confident_signature(self):
        conf = np.full(10, 0.9)
        o = np.array([1] * 8 + [0] * 2)
        tpr, tnr, _ = tpr_tnr(conf, o)
        assert (tpr, tnr) == (1.0, 0.0)

    def test_threshold_boundaries(self):
        # exactly at the threshold is not trustworthy but is untrustworthy
        tpr, tnr, _ = tpr_tnr([0.5, 0.5], [1, 0])
        assert (tpr, tnr) == (0.0, 1.0)

    def test_tcp_policy(self):
        pol = ThresholdPolicy.tcp(1000)
        assert pol.negative_threshold == 0.001
        tpr, tnr, counts = tpr_tnr([0.0005, 0.3, 0.9], [0, 0, 1], pol)
        assert (tpr, tnr, counts["abstain"]) == (1.0, 0.5, 1)

    def test_bad_policy(self):
        with pytest.raises(ValueError):
            ThresholdPolicy(0.3, 0.6)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            auc([0.1, np.nan], [0, 1])
        with pytest.raises(ValueError):
            auc([0.1, 0.2], [0, 2])
        with pytest.raises(ValueError):
            auc([0.1], [0, 1])

    def test_all_tied_auc_half(self):
        assert auc([0.3] * 5, [1, 0, 1, 0, 1]) == 0.5


def test_report_schema():
    rep = full_report(*HAND).to_dict()
    assert list(rep) == list(METRIC_KEYS) + ["acc", "counts"]
    assert list(METRIC_KEYS) == ["fpr_at_95tpr", "aupr_error", "aupr_success", "auc", "tpr", "tnr"]
    assert rep["acc"] == 0.5


def test_pr_points_and_aurc():
    pts = pr_points(*HAND)
    assert pts[0] == (1 / 3, 1.0) and pts[-1] == (1.0, 0.5)
    rc = risk_coverage([0.9, 0.1], [1, 0])
    assert aurc(rc) == pytest.approx(0.5 * 0.0 + 0.5 * 0.5)
