import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st
from matplotlib import cbook

from eebench.dataset import DomainError, ProtocolError
from eebench.evaluation import (TRANSITION, FoldResult, best_partner_table, boxplot_stats, config_fingerprint,
                                loso_folds, nrmse, pairwise_sweep, per_activity_eval, per_subject_stats, rmse,
                                run_loso_experiment, worst_pairs_table)
from eebench.models import ModelSpec
from eebench.training import TrainConfig

LINREG = ModelSpec.default("linreg")


# ------------------------------------------------------------------ metrics

@pytest.mark.parametrize("p,t,v", [([3, 4], [3, 4], 0.0), ([1, 2], [1, 4], 2 ** 0.5)])
def test_rmse_examples(p, t, v):
    assert rmse(p, t) == pytest.approx(v, abs=1e-12)


@given(st.floats(-50, 50), st.integers(1, 40))
def test_rmse_constant_offset(d, n):
    t = np.linspace(0, 5, n)
    assert rmse(t + d, t) == pytest.approx(abs(d), abs=1e-9)


@given(st.lists(st.tuples(st.floats(0, 20), st.floats(0, 20)), min_size=1, max_size=30), st.floats(0.01, 100),
       st.floats(0.1, 10))
def test_nrmse_is_scale_free(pairs, c, mean_ee):
    p, t = np.array(pairs).T
    assert nrmse(rmse(c * p, c * t), c * mean_ee) == pytest.approx(nrmse(rmse(p, t), mean_ee), rel=1e-9, abs=1e-12)


def test_rmse_rejects_empty_and_mismatch():
    with pytest.raises(DomainError):
        rmse([], [])
    with pytest.raises(DomainError):
        rmse([1, 2], [1])


@pytest.mark.parametrize("r,m,v", [(0.0, 3.0, 0.0), (1.0, 2.0, 0.5)])
def test_nrmse_examples(r, m, v):
    assert nrmse(r, m) == v


@pytest.mark.parametrize("m", [0.0, -1.0])
def test_nrmse_nonpositive_mean(m):
    with pytest.raises(DomainError):
        nrmse(1.0, m)


# ------------------------------------------------------------------ folds

def test_ten_subjects():
    folds = loso_folds(range(1, 11))
    assert len(folds) == 10
    assert all(len(train) == 9 and test not in train for test, train in folds)
    assert [t for t, _ in folds] == list(range(1, 11))


def test_two_subjects():
    assert loso_folds([2, 1]) == [(1, [2]), (2, [1])]


@given(st.sets(st.integers(0, 1000), min_size=2, max_size=15))
def test_folds_partition(ids):
    for test, train in loso_folds(ids):
        assert set(train) | {test} == ids and test not in train


def test_duplicate_or_single_subject():
    with pytest.raises(ProtocolError):
        loso_folds([1, 1, 2])
    with pytest.raises(ProtocolError):
        loso_folds([1])


# ------------------------------------------------------------------ per activity

def _fold(pred, target, acts, conds, trans=None, subject=1):
    n = len(pred)
    return FoldResult(subject, np.asarray(pred, float), np.asarray(target, float), np.array(acts, dtype=object),
                      np.array(conds, dtype=object), np.zeros(n, bool) if trans is None else np.asarray(trans),
                      rmse(pred, target))


def test_perfect_predictions_have_zero_nrmse():
    f = _fold([1, 2, 3, 4], [1, 2, 3, 4], ["walk", "walk", "run", "run"], ["0.6mps"] * 2 + ["1.8mps"] * 2)
    table = per_activity_eval([f])
    assert (table["nrmse"] == 0).all() and (table["rmse"] == 0).all()


def test_single_condition_plus_transition_row():
    f = _fold([1, 2, 2], [1, 1, 1], ["walk"] * 3, ["0.6mps"] * 3, trans=[False, False, True])
    table = per_activity_eval([f])
    assert list(table["activity"]) == ["walk", TRANSITION]
    assert table.iloc[0]["rmse"] == pytest.approx(np.sqrt(0.5))


def test_nrmse_ratio_follows_mean_ee():
    f = _fold([3, 1, 5, 3], [2, 2, 4, 4], ["walk", "walk", "run", "run"], ["0.6mps"] * 2 + ["1.8mps"] * 2)
    t = per_activity_eval([f]).set_index("activity")
    assert t.loc["walk", "rmse"] == t.loc["run", "rmse"] == 1.0
    assert t.loc["walk", "nrmse"] / t.loc["run", "nrmse"] == pytest.approx(2.0)


def test_rest_condition_with_zero_mean_is_flagged():
    f = _fold([0.1, -0.1], [0.0, 0.0], ["stand", "stand"], ["rest", "rest"])
    row = per_activity_eval([f]).iloc[0]
    assert row["flag"] and np.isnan(row["nrmse"])


def test_rows_follow_protocol_order():
    f = _fold([1] * 4, [1] * 4, ["run", "walk", "sit", "walk"], ["1.8mps", "1.2mps", "rest", "0.6mps"])
    t = per_activity_eval([f])
    assert list(zip(t["activity"], t["condition"])) == [("walk", "0.6mps"), ("walk", "1.2mps"), ("run", "1.8mps"),
                                                        ("sit", "rest")]


# ------------------------------------------------------------------ boxplots

def test_boxplot_hand_values():
    b = boxplot_stats(range(1, 11))
    assert (b.median, b.q25, b.q75) == (5.5, 3.25, 7.75)
    assert b.outliers == ()


def test_boxplot_constant():
    b = boxplot_stats([2.0] * 5)
    assert b.q25 == b.q75 == b.median == 2.0 and b.outliers == ()


def test_boxplot_outlier():
    b = boxplot_stats([1, 2, 3, 4, 5, 6, 7, 8, 9, 100])
    assert b.outliers == (100.0,)
    assert b.whisker_hi == 9


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40))
def test_boxplot_matches_matplotlib(vals):
    ours = boxplot_stats(vals)
    ref = cbook.boxplot_stats(np.asarray(vals), whis=1.5)[0]
    assert ours.median == pytest.approx(ref["med"], abs=1e-9)
    assert ours.q25 == pytest.approx(ref["q1"], abs=1e-9)
    assert ours.q75 == pytest.approx(ref["q3"], abs=1e-9)
    assert ours.whisker_lo == pytest.approx(ref["whislo"], abs=1e-9)
    assert ours.whisker_hi == pytest.approx(ref["whishi"], abs=1e-9)
    assert sorted(ours.outliers) == pytest.approx(sorted(ref["fliers"]), abs=1e-9)


def test_per_subject_stats_from_mapping():
    df = per_subject_stats({("hr", "cnn"): [1, 2, 3], ("mv", "cnn"): [0.5]})
    assert list(df["selection"]) == ["hr", "mv"] and list(df["n"]) == [3, 1]


# ------------------------------------------------------------------ experiments

def test_loso_linreg_no_leakage(quick_dataset):
    rep = run_loso_experiment(quick_dataset, "minute_ventilation", LINREG)
    assert [f.test_subject for f in rep.folds] == [1, 2, 3]
    for f in rep.folds:
        assert f.test_subject not in f.train_subjects
        assert set(f.train_subjects) | {f.test_subject} == {1, 2, 3}
        n_test = next(r.n_samples for r in quick_dataset if r.subject_id == f.test_subject)
        assert len(f.targets) == n_test  # window 1, stride 1: one window per test sample
    assert rep.overall_rmse == pytest.approx(np.mean([f.rmse for f in rep.folds]))


def test_fingerprint_stable_and_sensitive(quick_dataset):
    a = run_loso_experiment(quick_dataset, "heart_rate", LINREG)
    b = run_loso_experiment(quick_dataset, "heart_rate", LINREG)
    c = run_loso_experiment(quick_dataset, "heart_rate", LINREG, stride=2)
    assert a.fingerprint == b.fingerprint != c.fingerprint
    assert config_fingerprint({"a": 1, "b": 2}) == config_fingerprint({"b": 2, "a": 1})


def test_failed_folds_are_reported(quick_dataset):
    spec = ModelSpec.default("cnn", window_len=100_000)
    rep = run_loso_experiment(quick_dataset, "heart_rate", spec, TrainConfig(epochs=1))
    assert rep.failed_folds == [1, 2, 3]
    assert np.isnan(rep.overall_rmse)
    assert all(f.error for f in rep.folds)


def test_parallel_folds_match_serial(quick_dataset):
    a = run_loso_experiment(quick_dataset, "hexoskin", LINREG, jobs=1)
    b = run_loso_experiment(quick_dataset, "hexoskin", LINREG, jobs=2)
    assert a.fold_rmse == b.fold_rmse


def test_sweep_counts_and_tables(quick_dataset):
    sw = pairwise_sweep(quick_dataset, ["heart_rate", "chest_acc", "minute_ventilation"], [LINREG])
    assert len(sw.matrix) == 3
    bp = sw.best_partner()
    assert sorted(bp["signal"]) == sorted(["heart_rate", "chest_acc", "minute_ventilation"])
    no_mv = sw.best_partner(exclude=("minute_ventilation",))
    assert "minute_ventilation" not in set(no_mv["best_pair"])
    worst = sw.worst_pairs(2)
    assert len(worst) == 2 and worst["rmse"].is_monotonic_increasing


def test_anchor_sweep(quick_dataset):
    sw = pairwise_sweep(quick_dataset, ["heart_rate", "chest_acc", "spo2", "minute_ventilation"], [LINREG],
                        anchor="minute_ventilation")
    assert sw.matrix.index[0] == "minute_ventilation"
    assert len(sw.matrix) == 4
    assert all("minute_ventilation" in k for k in sw.matrix.index)


def test_best_partner_and_worst_pairs_oracle():
    m = pd.DataFrame({"cnn": [1.0, 3.0, 2.0], "lstm": [4.0, 0.5, 5.0]}, index=["a+b", "a+c", "b+c"])
    bp = best_partner_table(m).set_index("signal")
    assert bp.loc["a", "best_pair"] == "c" and bp.loc["a", "model"] == "lstm"
    assert bp.loc["b", "best_pair"] == "a" and bp.loc["b", "rmse"] == 1.0
    worst = worst_pairs_table(m, 2)
    assert list(worst["rmse"]) == [4.0, 5.0]
