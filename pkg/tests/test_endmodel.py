import numpy as np

from wsfair.core import FeatureMatrix, LabelVector, ScoreVector
from wsfair.endmodel import (LogisticModel, TrainConfig, loss_and_grad,
                             predict_logreg, train_logreg)
from wsfair.labelmodel import predict_labels
from wsfair.metrics import accuracy_f1
from wsfair.sbm import SbmConfig, run_pipeline
from wsfair.synth import gen_gaussian_pair_dataset


def test_separable_two_points():
    x = FeatureMatrix([[0.0, 0.0], [1.0, 1.0]])
    model = train_logreg(x, LabelVector([-1, 1]))
    pred = predict_labels(predict_logreg(model, x))
    assert pred.labels.tolist() == [-1, 1]


def test_uninformative_targets_shrink_to_zero():
    rng = np.random.default_rng(0)
    x = FeatureMatrix(rng.standard_normal((50, 3)))
    model = train_logreg(x, ScoreVector(np.full(50, 0.5)))
    assert np.abs(model.weights).max() < 1e-6
    assert abs(model.bias) < 1e-6
    assert model.training_meta["iterations"] == 0


def test_gradient_against_central_differences():
    rng = np.random.default_rng(1)
    h = 1e-6
    for _ in range(5):
        n, d = int(rng.integers(5, 30)), int(rng.integers(1, 6))
        x = rng.standard_normal((n, d))
        t = rng.random(n)
        w = rng.standard_normal(d)
        b = float(rng.standard_normal())
        l2 = float(rng.uniform(0.0, 0.1))
        _, gw, gb = loss_and_grad(w, b, x, t, l2)
        num = np.empty(d + 1)
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            lp, *_ = loss_and_grad(w + e, b, x, t, l2)
            lm, *_ = loss_and_grad(w - e, b, x, t, l2)
            num[i] = (lp - lm) / (2 * h)
        lp, *_ = loss_and_grad(w, b + h, x, t, l2)
        lm, *_ = loss_and_grad(w, b - h, x, t, l2)
        num[d] = (lp - lm) / (2 * h)
        analytic = np.concatenate([gw, [gb]])
        rel = np.abs(analytic - num).max() / max(np.abs(analytic).max(), 1e-12)
        assert rel < 1e-5


def test_backtracking_tames_large_learning_rate():
    rng = np.random.default_rng(2)
    x = FeatureMatrix(rng.standard_normal((200, 2)))
    y = LabelVector(np.where(x.values[:, 0] + 0.5 * x.values[:, 1] > 0, 1, -1))
    model = train_logreg(x, y, TrainConfig(lr=64.0, max_iters=500))
    init_loss, *_ = loss_and_grad(np.zeros(2), 0.0,
                                  (x.values - model.standardize_mean) / model.standardize_std,
                                  (y.labels + 1) / 2.0, 1e-4)
    assert np.isfinite(model.training_meta["final_loss"])
    assert model.training_meta["final_loss"] < init_loss
    acc, _ = accuracy_f1(predict_labels(predict_logreg(model, x)), y)
    assert acc > 0.95


def test_soft_binary_targets_equal_hard_labels():
    rng = np.random.default_rng(3)
    x = FeatureMatrix(rng.standard_normal((80, 2)))
    y = np.where(rng.random(80) < 0.5, 1, -1)
    m_hard = train_logreg(x, LabelVector(y), TrainConfig(max_iters=200))
    m_soft = train_logreg(x, ScoreVector((y + 1) / 2.0), TrainConfig(max_iters=200))
    assert np.array_equal(m_hard.weights, m_soft.weights)
    assert m_hard.bias == m_soft.bias


def test_predictions_invariant_to_row_order():
    rng = np.random.default_rng(4)
    x = FeatureMatrix(rng.standard_normal((60, 3)))
    model = train_logreg(x, LabelVector(rng.choice([-1, 1], 60)),
                         TrainConfig(max_iters=100))
    perm = rng.permutation(60)
    s_full = predict_logreg(model, x).scores
    s_perm = predict_logreg(model, FeatureMatrix(x.values[perm])).scores
    assert np.allclose(s_full[perm], s_perm, atol=0.0)


def test_trivial_models():
    zero = LogisticModel(weights=np.zeros(2), bias=0.0,
                         standardize_mean=np.zeros(2),
                         standardize_std=np.ones(2), training_meta={})
    x = FeatureMatrix(np.random.default_rng(0).standard_normal((10, 2)))
    assert np.all(predict_logreg(zero, x).scores == 0.5)
    saturated = LogisticModel(weights=np.zeros(2), bias=50.0,
                              standardize_mean=np.zeros(2),
                              standardize_std=np.ones(2), training_meta={})
    assert predict_logreg(saturated, x).scores.min() > 0.999999


def test_constant_feature_column_is_skipped():
    x = FeatureMatrix(np.column_stack([np.ones(40),
                                       np.linspace(-1, 1, 40)]))
    y = LabelVector(np.where(x.values[:, 1] > 0, 1, -1))
    model = train_logreg(x, y, TrainConfig(max_iters=300))
    assert model.standardize_std[0] == 1.0
    acc, _ = accuracy_f1(predict_labels(predict_logreg(model, x)), y)
    assert acc == 1.0


def test_model_json_schema():
    model = LogisticModel(weights=np.array([1.0, -2.0]), bias=0.5,
                          standardize_mean=np.zeros(2),
                          standardize_std=np.ones(2), training_meta={})
    js = model.to_json()
    assert set(js) == {"w", "b", "standardize"}
    assert set(js["standardize"]) == {"mean", "std"}


def test_end_model_on_sbm_pseudolabels_beats_direct_baseline():
    # pipeline claim: the end model trained on corrected pseudolabels beats
    # the uncorrected planted LF (the baseline pipeline's pseudolabel),
    # median over seeds
    diffs = []
    for seed in range(5):
        feats, groups, truth, weak, _ = gen_gaussian_pair_dataset(4000, seed)
        cfg = SbmConfig(epsilon=0.05, ot_kind="linear", seed=seed)
        res = run_pipeline(feats, groups, weak, cfg, with_sbm=True)
        model = train_logreg(feats, res.scores, TrainConfig(max_iters=2000))
        end_pred = predict_labels(predict_logreg(model, feats))
        end_acc, _ = accuracy_f1(end_pred, truth)
        base_acc, _ = accuracy_f1(LabelVector(weak.votes[:, 0]), truth)
        diffs.append(end_acc - base_acc)
    assert np.median(diffs) > 0.0
