import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from malpipe.errors import DataError, SingleClassError
from malpipe.metrics import (
    MetricsReport,
    classification_metrics,
    confusion,
    evaluate,
    roc_auc,
    roc_curve,
    trapezoid_area,
    write_roc_csv,
)

from oracles import pairwise_auc


def test_confusion_direct_count():
    assert confusion([1, 1, 0, 0], [1, 0, 0, 1]) == (1, 1, 1, 1)


def test_confusion_identity():
    tp, fp, tn, fn = confusion([1, 0, 1, 1, 0], [1, 0, 1, 1, 0])
    assert fp == 0 and fn == 0 and tp == 3 and tn == 2


def test_confusion_all_positive():
    assert confusion([1, 1, 0, 0], [1, 1, 1, 1]) == (2, 2, 0, 0)


def test_confusion_errors():
    with pytest.raises(DataError):
        confusion([1, 0], [1])
    with pytest.raises(DataError):
        confusion([], [])


def _metrics(tp, fp, tn, fn, flags=None):
    acc, prec, rec, f1 = classification_metrics(tp, fp, tn, fn, flags)
    return {"accuracy": acc, "precision": prec, "recall": rec, "f1": f1}


def test_metrics_hand_example():
    m = _metrics(2, 1, 0, 1)
    assert m["precision"] == pytest.approx(2 / 3, abs=1e-15)
    assert m["recall"] == pytest.approx(2 / 3, abs=1e-15)
    assert m["f1"] == pytest.approx(2 / 3, abs=1e-15)
    assert m["accuracy"] == 0.5


def test_metrics_perfect():
    m = _metrics(5, 0, 7, 0)
    assert (m["accuracy"], m["precision"], m["recall"], m["f1"]) == (1.0, 1.0, 1.0, 1.0)


def test_metrics_nothing_predicted_positive():
    flags = []
    m = _metrics(0, 0, 3, 2, flags)
    assert (m["precision"], m["recall"], m["f1"]) == (0.0, 0.0, 0.0)
    assert flags


def test_auc_worked_example():
    auc, _ = roc_auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8])
    assert auc == 0.75
    assert pairwise_auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75


def test_auc_perfect_and_all_tied():
    assert roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.3, 0.9])[0] == 1.0
    auc, pts = roc_auc([0, 1, 0, 1], [0.5] * 4)
    assert auc == 0.5
    assert pts == [(0.0, 0.0), (1.0, 1.0)]


def test_auc_single_class():
    with pytest.raises(SingleClassError):
        roc_auc([1, 1, 1], [0.1, 0.2, 0.3])


def test_auc_rejects_non_finite_scores():
    with pytest.raises(DataError):
        roc_auc([0, 1], [0.1, np.nan])


labels_scores = st.integers(2, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda y: 0 < sum(y) < len(y)),
        st.lists(st.integers(0, 8).map(lambda v: v / 8), min_size=n, max_size=n),
    )
)


@settings(max_examples=200, deadline=None)
@given(labels_scores)
def test_auc_matches_pairwise_and_trapezoid(ys):
    y, s = ys
    auc, pts = roc_auc(y, s)
    assert abs(auc - pairwise_auc(y, s)) <= 1e-12
    assert abs(trapezoid_area(pts) - auc) <= 1e-12
    assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)
    fpr, tpr = zip(*pts)
    assert all(np.diff(fpr) >= 0) and all(np.diff(tpr) >= 0)


@settings(max_examples=100, deadline=None)
@given(labels_scores)
def test_auc_monotone_transform_invariance(ys):
    y, s = ys
    s = np.asarray(s)
    a1, p1 = roc_auc(y, s)
    a2, p2 = roc_auc(y, np.exp(3 * s) - 7)
    assert a1 == a2 and p1 == p2


@settings(max_examples=100, deadline=None)
@given(labels_scores)
def test_auc_complement_symmetry(ys):
    y, s = ys
    assert abs(roc_auc(y, s)[0] + roc_auc(y, -np.asarray(s))[0] - 1.0) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=50))
def test_counts_and_harmonic_bounds(pairs):
    y = [a for a, _ in pairs]
    p = [b for _, b in pairs]
    tp, fp, tn, fn = confusion(y, p)
    assert tp + fp + tn + fn == len(pairs)
    m = _metrics(tp, fp, tn, fn)
    assert m["accuracy"] == sum(a == b for a, b in pairs) / len(pairs)
    if m["precision"] > 0 and m["recall"] > 0:
        lo, hi = sorted((m["precision"], m["recall"]))
        assert lo - 1e-12 <= m["f1"] <= hi + 1e-12


def test_evaluate_report_and_round_trip():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 300)
    p = np.clip(0.3 * y + rng.uniform(0, 0.7, 300), 0, 1)
    rep = evaluate(y, p)
    assert rep.tp + rep.fp + rep.tn + rep.fn == 300
    assert rep.auc == pytest.approx(pairwise_auc(y, p), abs=1e-12)
    back = MetricsReport.from_dict(rep.to_dict())
    assert back.to_dict() == rep.to_dict()
    assert "roc_points" not in rep.to_dict(include_roc=False)


def test_evaluate_single_class_flags_auc():
    rep = evaluate([1, 1, 1], [0.9, 0.8, 0.2])
    assert rep.auc is None
    assert rep.flags


def test_summary_rows_percent_two_decimals():
    rep = evaluate([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8])
    rows = dict(rep.summary_rows())
    assert rows["auc"] == "75.00%"


def test_roc_csv(tmp_path):
    _, pts = roc_auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8])
    path = tmp_path / "roc.csv"
    write_roc_csv(pts, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["fpr", "tpr"]
    assert [tuple(map(float, r)) for r in rows[1:]] == pts


def test_roc_curve_groups_ties():
    pts = roc_curve([0, 1, 1, 0], [0.5, 0.5, 0.9, 0.1])
    assert pts == [(0.0, 0.0), (0.0, 0.5), (0.5, 1.0), (1.0, 1.0)]
