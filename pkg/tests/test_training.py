
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eebench.dataset import ActivitySegment, DomainError
from eebench.models import FAMILIES, ModelSpec, build_model
from eebench.training import (ConfigError, TrainConfig, TrainingError, finite_difference_gradcheck, mse_loss,
                              split_train_validation, train)
from eebench.windowing import WindowedDataset, make_windows

CONDS = ["0.6mps", "0.9mps", "1.2mps"]


def _blocks(lengths, window_len=5, stride=1, subject_id=1, n_channels=1, seed=0):
    segs, start = [], 0
    for k, n in enumerate(lengths):
        segs.append(ActivitySegment("walk", CONDS[k % 3], start, start + n))
        start += n
    r = np.random.default_rng(seed)
    return make_windows(r.normal(size=(start, n_channels)), r.normal(size=start), segs, window_len, stride,
                        subject_id)


def _pool(lengths_per_subject, **kw):
    return WindowedDataset.concat([_blocks(l, subject_id=s + 1, **kw) for s, l in enumerate(lengths_per_subject)])


# ------------------------------------------------------------------ losses

@pytest.mark.parametrize("p,t,v", [([1, 2], [1, 2], 0.0), ([0, 0], [1, 1], 1.0), ([1, 2], [1, 4], 2.0)])
def test_mse_examples(p, t, v):
    assert mse_loss(p, t) == v


def test_mse_empty():
    with pytest.raises(DomainError):
        mse_loss([], [])


# ------------------------------------------------------------------ validation split

def test_hundred_windows_split():
    ds = _blocks([50] * 10, window_len=5, stride=5)
    assert len(ds) == 100
    tr, va = split_train_validation(ds, 0.15, seed=0)
    assert 10 <= len(va) <= 20 and len(va) % 10 == 0
    assert len(tr) + len(va) == 100


def test_zero_fraction():
    ds = _blocks([40, 40])
    tr, va = split_train_validation(ds, 0.0)
    assert len(va) == 0 and len(tr) == len(ds)


def test_split_is_seeded():
    ds = _pool([[60, 70, 80], [90, 50]])
    a = split_train_validation(ds, 0.15, seed=4)
    b = split_train_validation(ds, 0.15, seed=4)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.start, y.start)
        np.testing.assert_array_equal(x.subject, y.subject)


def test_split_too_small():
    with pytest.raises(ConfigError):
        split_train_validation(_blocks([5]), 0.15)


def test_validation_fraction_override_warns():
    with pytest.warns(UserWarning):
        TrainConfig(validation_fraction=0.2)


@given(st.lists(st.lists(st.integers(8, 60), min_size=1, max_size=5), min_size=1, max_size=3),
       st.integers(2, 9), st.integers(1, 4), st.integers(0, 1000))
def test_split_blocks_and_no_sample_overlap(lengths, window_len, stride, seed):
    ds = _pool(lengths, window_len=window_len, stride=stride)
    blocks = {(s, g) for s, g in zip(ds.subject, ds.segment)}
    if len(ds) < 2 or len(blocks) < 2:
        return
    tr, va = split_train_validation(ds, 0.15, seed)
    # whole blocks only
    assert not {(s, g) for s, g in zip(tr.subject, tr.segment)} & {(s, g) for s, g in zip(va.subject, va.segment)}
    # no shared samples between any train and validation window of a subject
    for sid in np.unique(va.subject):
        vs = va.start[va.subject == sid]
        ts = tr.start[tr.subject == sid]
        if len(vs) and len(ts):
            assert np.all(np.abs(ts[:, None] - vs[None, :]) >= window_len)
    assert len(tr) + len(va) <= len(ds)


# ------------------------------------------------------------------ training loop

def test_linreg_recovers_slope():
    segs = [ActivitySegment("walk", "0.6mps", 0, 200)]
    x = np.linspace(-3, 3, 200)
    ds = make_windows(x, 2 * x, segs, 1)
    model = build_model(ModelSpec.default("linreg"), 1, 1)
    model, rep = train(model, *split_train_validation(ds, 0.0))
    assert model.linear.weight.item() == pytest.approx(2.0, abs=1e-6)
    assert model.linear.bias.item() == pytest.approx(0.0, abs=1e-6)


def _toy_data(n=120, window_len=20, seed=0):
    ds = _pool([[n // 2, n // 2]], window_len=window_len, seed=seed)
    return split_train_validation(ds, 0.15, seed)


def test_patience_zero_stops_at_first_non_improvement():
    tr, va = _toy_data()
    model = build_model(ModelSpec.toy("cnn"), 1, 20)
    _, rep = train(model, tr, va, TrainConfig(epochs=40, early_stop_patience=0, learning_rate=5e-2))
    v = rep.val_loss
    first_bad = next(i for i in range(1, len(v)) if v[i] >= min(v[:i]))
    assert rep.stopped_early and len(v) == first_bad + 1
    assert rep.best_epoch == int(np.argmin(v))


def test_best_epoch_weights_restored():
    tr, va = _toy_data()
    model = build_model(ModelSpec.toy("cnn"), 1, 20)
    model, rep = train(model, tr, va, TrainConfig(epochs=6, early_stop_patience=10, learning_rate=5e-2))
    assert mse_loss(model.predict(va.X), va.y) == pytest.approx(min(rep.val_loss), rel=1e-6)


def test_training_is_seeded():
    tr, va = _toy_data()
    cfg = TrainConfig(epochs=2, seed=7)
    a = train(build_model(ModelSpec.toy("lstm", window_len=20), 1, 20, seed=7), tr, va, cfg)[1]
    b = train(build_model(ModelSpec.toy("lstm", window_len=20), 1, 20, seed=7), tr, va, cfg)[1]
    assert a.checksum == b.checksum and a.train_loss == b.train_loss


def test_nonfinite_loss_raises_with_diagnostics():
    tr, va = _toy_data()
    bad = tr.subset(np.arange(len(tr)))
    X = tr.X.copy()
    X[0, 0, 0] = np.inf
    object.__setattr__(bad, "X", X)
    model = build_model(ModelSpec.toy("cnn"), 1, 20)
    with pytest.raises(TrainingError, match="epoch 0"):
        train(model, bad, va, TrainConfig(epochs=1, scale_targets=False))


def test_arity_mismatch():
    tr, va = _toy_data()
    with pytest.raises(ConfigError):
        train(build_model(ModelSpec.toy("cnn"), 2, 20), tr, va)


def test_loss_curve_and_report_files(tmp_path):
    tr, va = _toy_data()
    _, rep = train(build_model(ModelSpec.toy("cnn"), 1, 20), tr, va, TrainConfig(epochs=3))
    rep.write_loss_curves(tmp_path / "curve.csv")
    rep.to_json(tmp_path / "report.json")
    assert len((tmp_path / "curve.csv").read_text().splitlines()) == 1 + len(rep.train_loss)


# ------------------------------------------------------------------ gradient checks

TOY_WINDOW = {"linreg": 1, "cnn": 20, "lstm": 6, "resnet": 10, "resnet_attention": 10, "transformer": 10}


@pytest.mark.parametrize("family", FAMILIES)
def test_gradcheck(family):
    w = TOY_WINDOW[family]
    r = np.random.default_rng(3)
    model = build_model(ModelSpec.toy(family, window_len=w), 3, w, seed=3)
    res = finite_difference_gradcheck(model, (r.normal(size=(4, w, 3)), r.normal(size=4)), eps=1e-4)
    assert res.n_checked > 0
    assert res.max_rel_error < (1e-8 if family == "linreg" else 1e-3), res.worst_parameter


def test_gradcheck_catches_a_wrong_gradient():
    model = build_model(ModelSpec.toy("cnn"), 1, 20, seed=0)
    # corrupt backward: triple the output bias gradient
    model.head[-1].bias.register_hook(lambda g: 3 * g)
    r = np.random.default_rng(0)
    res = finite_difference_gradcheck(model, (r.normal(size=(4, 20, 1)), r.normal(size=4)))
    assert res.max_rel_error > 1.0
