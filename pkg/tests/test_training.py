import numpy as np
import pytest
from hypothesis import given, strategies as st

from prognoscope.errors import ConfigError, DataError, NumericError
from prognoscope.models import ModelSpec, build_model
from prognoscope.nn.tensor import Tensor, as_array
from prognoscope.training import (
    AdaGrad, ArrayDataset, EarlyStopper, Fold, RMSProp, TrainConfig,
    bce_gradient, class_weights, crossval, fold_seed, learning_curve,
    make_folds, make_optimizer, train_fold, weighted_bce,
)

# ---------------------------------------------------------------------------
# class weights


def test_class_weights_imbalanced_cohort():
    labels = np.array([0] * 84 + [1] * 16)
    w = class_weights(labels)
    assert w[0] == pytest.approx(100 / (2 * 84), abs=1e-9)
    assert w[0] == pytest.approx(0.5952380952, abs=1e-9)
    assert w[1] == pytest.approx(3.125, abs=1e-12)


def test_class_weights_balanced_and_small():
    assert np.allclose(class_weights([0] * 500 + [1] * 500), [1.0, 1.0])
    assert np.allclose(class_weights([0, 0, 0, 1, 1, 1]), [1.0, 1.0])
    w = class_weights([0] * 5 + [1])
    assert np.allclose(w, [0.6, 3.0])


def test_class_weights_single_class_rejected():
    with pytest.raises(DataError):
        class_weights([1, 1, 1])


@given(st.integers(1, 400), st.integers(1, 400))
def test_weight_mass_identity(n0, n1):
    labels = np.array([0] * n0 + [1] * n1)
    w = class_weights(labels)
    assert w[0] * n0 + w[1] * n1 == pytest.approx(n0 + n1, rel=1e-12)


# ---------------------------------------------------------------------------
# weighted BCE


def test_bce_perfect_prediction_near_zero():
    labels = np.array([1.0, 0.0])
    loss = weighted_bce(np.array([1.0, 0.0]), labels, [1.0, 1.0])
    assert 0 <= loss < 1e-5


def test_bce_half_everywhere_is_ln2():
    labels = np.array([1, 0, 1, 0], dtype=float)
    loss = weighted_bce(np.full(4, 0.5), labels, [1.0, 1.0])
    assert loss == pytest.approx(np.log(2), abs=1e-12)


def test_bce_matches_scalar_loop(rng):
    p = rng.uniform(0.01, 0.99, 50)
    y = rng.integers(0, 2, 50).astype(float)
    w = class_weights(y)
    want = 0.0
    for pi, yi in zip(p, y):
        want += -w[int(yi)] * (yi * np.log(pi) + (1 - yi) * np.log(1 - pi))
    want /= 50
    assert weighted_bce(p, y, w) == pytest.approx(want, abs=1e-7)


def test_bce_unit_weights_equal_unweighted_bitwise(rng):
    p = rng.uniform(0.01, 0.99, 64)
    y = rng.integers(0, 2, 64).astype(float)
    weighted = weighted_bce(p, y, np.array([1.0, 1.0]))
    plain = float(np.mean(-(y * np.log(np.clip(p, 1e-7, 1 - 1e-7))
                            + (1 - y) * np.log(1 - np.clip(p, 1e-7, 1 - 1e-7)))))
    assert weighted == plain


def test_bce_gradient_matches_finite_difference(rng):
    p = rng.uniform(0.05, 0.95, 10)
    y = rng.integers(0, 2, 10).astype(float)
    w = class_weights(y)
    g = bce_gradient(p, y, w)
    eps = 1e-7
    for i in range(10):
        pp, pm = p.copy(), p.copy()
        pp[i] += eps
        pm[i] -= eps
        num = (weighted_bce(pp, y, w) - weighted_bce(pm, y, w)) / (2 * eps)
        assert g[i] == pytest.approx(num, rel=1e-5)


def test_bce_length_mismatch():
    with pytest.raises(ConfigError):
        weighted_bce(np.array([0.5]), np.array([1.0, 0.0]), [1.0, 1.0])


# ---------------------------------------------------------------------------
# optimizers


class _OneParamModel:
    """Minimal parameter holder for optimizer unit tests."""

    architecture_id = "scalar"

    def __init__(self, value):
        from prognoscope.nn.layers import Dense
        self.layer = Dense(1, 1, dtype=np.float64)
        self.layer.label = "p"
        self.layer.set_param("weight", [[value]])

    def set_grad(self, g):
        self.layer.grads = {"weight": np.array([[g]])}

    def parameters(self, include_stats=False):
        yield self.layer, "weight", self.layer.params["weight"]

    @property
    def value(self):
        return float(self.layer.params["weight"].data[0, 0])


def test_adagrad_first_two_steps_closed_form():
    m = _OneParamModel(0.0)
    opt = AdaGrad(m, lr=0.01, eps=1e-7)
    m.set_grad(1.0)
    opt.step()
    assert m.value == pytest.approx(-0.01 / np.sqrt(1 + 1e-7), rel=1e-12)
    m.set_grad(1.0)
    opt.step()
    assert m.value == pytest.approx(-0.01 / np.sqrt(1 + 1e-7) - 0.01 / np.sqrt(2 + 1e-7),
                                    rel=1e-12)


def test_zero_gradient_no_change():
    m = _OneParamModel(1.5)
    for opt in (AdaGrad(m), RMSProp(m)):
        m.set_grad(0.0)
        opt.step()
        assert m.value == 1.5


def test_rmsprop_single_step_hand_computed():
    m = _OneParamModel(0.2)
    opt = RMSProp(m, lr=1e-3, rho=0.9, eps=1e-7)
    m.set_grad(0.5)
    opt.step()
    acc = 0.1 * 0.25
    assert m.value == pytest.approx(0.2 - 1e-3 * 0.5 / np.sqrt(acc + 1e-7), abs=1e-9)


@pytest.mark.parametrize("kind", ["adagrad", "rmsprop"])
def test_optimizer_matches_scalar_recursion_100_steps(kind, rng):
    m = _OneParamModel(0.3)
    opt = make_optimizer(kind, m)
    x, acc = 0.3, 0.0
    for _ in range(100):
        g = float(rng.standard_normal())
        m.set_grad(g)
        opt.step()
        if kind == "adagrad":
            acc = acc + g * g
            x = x - 1e-2 * g / np.sqrt(acc + 1e-7)
        else:
            acc = 0.9 * acc + 0.1 * g * g
            x = x - 1e-3 * g / np.sqrt(acc + 1e-7)
        assert m.value == pytest.approx(x, rel=1e-9)


def test_nan_gradient_rejected():
    m = _OneParamModel(0.0)
    opt = AdaGrad(m)
    m.set_grad(np.nan)
    with pytest.raises(NumericError):
        opt.step()


def test_auto_optimizer_selection():
    lstm_model = build_model(ModelSpec("cnn2d_lstm", video_dims=(3, 81, 81, 1)), seed=0)
    cnn_model = build_model(ModelSpec("cnn3d", video_dims=(27, 27, 27, 1)), seed=0)
    assert isinstance(make_optimizer("auto", lstm_model), RMSProp)
    assert isinstance(make_optimizer("auto", cnn_model), AdaGrad)


# ---------------------------------------------------------------------------
# folds


def test_make_folds_prevalence_preserved():
    labels = np.array([1] * 160 + [0] * 840)
    plan = make_folds(labels, k=5, seed=0)
    for fold in plan.folds:
        test_prev = labels[fold.test].mean()
        assert abs(test_prev - 0.16) <= 1.0 / fold.test.size


def test_make_folds_validation_balanced():
    labels = np.array([1] * 160 + [0] * 840)
    plan = make_folds(labels, k=5, seed=3)
    for fold in plan.folds:
        val_labels = labels[fold.val]
        assert val_labels.sum() * 2 == val_labels.size
        assert fold.val.size == 2 * (int(round(0.10 * (1000 - fold.test.size))) // 2)


def test_make_folds_partition_property():
    labels = np.array([1] * 30 + [0] * 70)
    plan = make_folds(labels, k=5, seed=1)
    all_test = np.sort(np.concatenate([f.test for f in plan.folds]))
    assert np.array_equal(all_test, np.arange(100))
    for fold in plan.folds:
        assert not (set(fold.train) & set(fold.val))
        assert not (set(fold.train) & set(fold.test))
        assert not (set(fold.val) & set(fold.test))


@given(n_pos=st.integers(20, 60), n_neg=st.integers(60, 200), seed=st.integers(0, 50))
def test_make_folds_properties_random(n_pos, n_neg, seed):
    labels = np.array([1] * n_pos + [0] * n_neg)
    plan = make_folds(labels, k=5, seed=seed)
    covered = np.concatenate([f.test for f in plan.folds])
    assert len(covered) == len(labels) and len(set(covered)) == len(labels)
    for f in plan.folds:
        assert labels[f.val].sum() * 2 == f.val.size
        assert set(f.train).isdisjoint(f.val) and set(f.train).isdisjoint(f.test)


def test_make_folds_deterministic():
    labels = np.array([1] * 40 + [0] * 60)
    a = make_folds(labels, k=5, seed=9)
    b = make_folds(labels, k=5, seed=9)
    for fa, fb in zip(a.folds, b.folds):
        assert np.array_equal(fa.train, fb.train)
        assert np.array_equal(fa.val, fb.val)
        assert np.array_equal(fa.test, fb.test)


def test_make_folds_too_small_rejected():
    with pytest.raises(DataError):
        make_folds(np.array([1, 1, 0, 0]), k=5, seed=0)


# ---------------------------------------------------------------------------
# early stopping with a scripted-loss stub


class ScriptedModel:
    """Training-loop stand-in whose validation loss follows a script.

    The dataset routes the labels in through the tabular input; prediction
    confidence follows `correct_prob(epoch)`, so the validation BCE is
    -log(correct_prob(epoch)), strictly decreasing while the script rises.
    """

    architecture_id = "stub"

    def __init__(self, correct_prob):
        self.correct_prob = correct_prob
        self.epoch = 0
        self._last_mode = "infer"
        self.restored_epoch = None

    def forward(self, video, ehr, mode="infer", rng=None):
        if mode == "train" and self._last_mode != "train":
            self.epoch += 1
        self._last_mode = mode
        y = as_array(ehr)[:, 0]
        pc = self.correct_prob(self.epoch)
        return Tensor(y * pc + (1 - y) * (1 - pc))

    def backward_bce(self, labels, weights, need_input_grads=False):
        pass

    def parameters(self, include_stats=False):
        return iter(())

    def snapshot(self):
        return {"epoch": self.epoch}

    def restore(self, snap):
        self.restored_epoch = snap["epoch"]


def _stub_dataset(n=24):
    labels = np.array([1, 0] * (n // 2))
    return ArrayDataset(labels=labels, ehr=labels.reshape(-1, 1).astype(np.float32))


def _stub_fold(n=24):
    idx = np.arange(n)
    return Fold(train=idx[: n - 8], val=idx[n - 8: n - 4], test=idx[n - 4:])


def test_scripted_stop_at_best_plus_eleven():
    # confidence rises for 50 epochs, then freezes: best epoch 50, stop 61
    script = lambda e: 0.5 + 0.4 * (min(e, 50) / 50.0)
    model = ScriptedModel(script)
    cfg = TrainConfig(optimizer="adagrad", batch_size=16, max_epochs=1000,
                      patience=10, seed=0)
    res = train_fold(model, _stub_dataset(), _stub_fold(), cfg)
    assert res.history.best_epoch == 50
    assert res.history.stop_epoch == 61
    assert model.restored_epoch == 50


def test_scripted_cap_honored_at_1000():
    # strictly improving forever: the epoch cap is the only stop
    script = lambda e: 1.0 - 1.0 / (e + 2.0)
    model = ScriptedModel(script)
    cfg = TrainConfig(optimizer="adagrad", batch_size=16, max_epochs=1000,
                      patience=10, seed=0)
    res = train_fold(model, _stub_dataset(), _stub_fold(), cfg)
    assert res.history.stop_epoch == 1000
    assert res.history.best_epoch == 1000


def test_early_stopper_gap_invariant():
    stopper = EarlyStopper(patience=10)
    rng = np.random.default_rng(0)
    losses = np.concatenate([np.linspace(1.0, 0.2, 17), 0.2 + rng.uniform(0, 0.05, 40)])
    stop_epoch = None
    for epoch, loss in enumerate(losses, start=1):
        _, stop = stopper.update(epoch, float(loss))
        if stop:
            stop_epoch = epoch
            break
    assert stop_epoch is not None
    assert stop_epoch - stopper.best_epoch >= 11


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(patience=10, max_epochs=10)


# ---------------------------------------------------------------------------
# real training: reproducibility and learning curve


def _tiny_ehr_dataset(n=60, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.array([1, 0] * (n // 2))
    x = rng.standard_normal((n, 4)).astype(np.float32)
    x[:, 0] += labels * 2.5          # separable signal
    return ArrayDataset(labels=labels, ehr=x)


def test_training_bitwise_reproducible():
    cfg = TrainConfig(optimizer="adagrad", batch_size=8, max_epochs=12,
                      patience=5, seed=77)
    outs = []
    for _ in range(2):
        ds = _tiny_ehr_dataset()
        folds = make_folds(ds.labels, k=3, seed=77)
        builder = lambda s: build_model(ModelSpec("ehr_mlp", ehr_width=4), seed=s)
        results = crossval(builder, ds, folds, cfg)
        outs.append((
            tuple(tuple(r.history.val_loss) for r in results),
            tuple(r.test_scores.tobytes() for r in results),
        ))
    assert outs[0] == outs[1]


def test_learning_curve_nested_and_degenerate():
    ds = _tiny_ehr_dataset(n=80, seed=1)
    holdout = np.arange(60, 80)
    cfg = TrainConfig(optimizer="adagrad", batch_size=8, max_epochs=15,
                      patience=5, seed=5)
    builder = lambda s: build_model(ModelSpec("ehr_mlp", ehr_width=4), seed=s)
    pairs = learning_curve(builder, ds, [10, 30, 60], holdout, cfg)
    assert [p[0] for p in pairs] == [10, 30, 60]
    assert all(0.0 <= p[1] <= 1.0 for p in pairs)


def test_learning_curve_separable_improves_with_size():
    # median over seeds: the full pool beats the 10-sample prefix
    deltas = []
    for seed in range(5):
        ds = _tiny_ehr_dataset(n=100, seed=seed)
        holdout = np.arange(70, 100)
        cfg = TrainConfig(optimizer="adagrad", batch_size=8, max_epochs=12,
                          patience=5, seed=seed)
        builder = lambda s: build_model(ModelSpec("ehr_mlp", ehr_width=4), seed=s)
        pairs = learning_curve(builder, ds, [10, 70], holdout, cfg)
        deltas.append(pairs[-1][1] - pairs[0][1])
    assert np.median(deltas) >= 0.0


def test_learning_curve_size_validation():
    ds = _tiny_ehr_dataset(n=40)
    cfg = TrainConfig(seed=0)
    builder = lambda s: build_model(ModelSpec("ehr_mlp", ehr_width=4), seed=s)
    with pytest.raises(ConfigError):
        learning_curve(builder, ds, [30, 20], np.arange(30, 40), cfg)
    with pytest.raises(ConfigError):
        learning_curve(builder, ds, [10, 400], np.arange(30, 40), cfg)


def test_fold_seed_stable():
    assert fold_seed(3, 1) == fold_seed(3, 1)
    assert fold_seed(3, 1) != fold_seed(3, 2)
