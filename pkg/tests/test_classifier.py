import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from echoflow.classifier import (ClassifierError, SoftmaxModel, TrainConfig, confusion_matrix, kfold_evaluate,
                                 loss_and_grad, softmax, train)


def finite_difference_error(seed, step=1e-5):
    rng = np.random.default_rng(seed)
    xb = np.hstack([rng.normal(size=(12, 5)), np.ones((12, 1))])
    y = rng.integers(0, 3, 12)
    w = rng.normal(scale=0.5, size=(3, 6))
    _, g = loss_and_grad(w, xb, y, 0.01)
    num = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        e = np.zeros_like(w)
        e[idx] = step
        num[idx] = (loss_and_grad(w + e, xb, y, 0.01)[0] - loss_and_grad(w - e, xb, y, 0.01)[0]) / (2 * step)
    return float(np.max(np.abs(g - num) / np.maximum(1e-8, np.abs(g) + np.abs(num))))


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    assert finite_difference_error(seed) < 1e-4


def test_bias_not_penalized():
    xb = np.ones((4, 2))
    w = np.array([[0.0, 3.0], [0.0, -3.0]])
    base, _ = loss_and_grad(w, xb, np.array([0, 1, 0, 1]), 0.0)
    reg, _ = loss_and_grad(w, xb, np.array([0, 1, 0, 1]), 10.0)
    assert base == reg


def test_separable_1d():
    x = np.concatenate([np.linspace(-3, -1, 20), np.linspace(1, 3, 20)])[:, None]
    y = np.array(["neg"] * 20 + ["pos"] * 20)
    m = train(x, y)
    assert (m.predict(x) == y).all()


@pytest.mark.parametrize("kw", [{"epochs": 0}, {"learning_rate": 0.0}, {"l2_lambda": -1.0}, {"batch_size": 0}])
def test_bad_config(kw):
    with pytest.raises(ClassifierError):
        TrainConfig(**kw)


def test_train_errors():
    with pytest.raises(ClassifierError, match="two classes"):
        train(np.ones((3, 2)), ["a", "a", "a"])
    with pytest.raises(ClassifierError, match="NaN"):
        train(np.array([[np.nan], [1.0]]), ["a", "b"])


@given(arrays(np.float64, (6, 4), elements=st.floats(-50, 50)))
def test_probabilities_are_distributions(z):
    p = softmax(z)
    assert (p >= 0).all()
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_ties_go_to_lowest_index():
    m = SoftmaxModel(np.zeros((3, 3)), ["a", "b", "c"], np.zeros(2), np.ones(2))
    assert m.predict_with_confidence(np.array([1.0, 2.0])) == ("a", pytest.approx(1 / 3))


def test_zero_variance_features_pass_through(rng):
    x = np.hstack([rng.normal(size=(30, 1)), np.full((30, 1), 7.0)])
    y = (x[:, 0] > 0).astype(int)
    m = train(x, y)
    assert m.std[1] == 1.0 and m.mean[1] == 0.0


def test_model_json_roundtrip(tmp_path, rng):
    x = rng.normal(size=(40, 3))
    y = np.where(x[:, 0] > 0, "p", "q")
    m = train(x, y, TrainConfig(epochs=20))
    m.save(tmp_path / "m.json")
    back = SoftmaxModel.load(tmp_path / "m.json")
    np.testing.assert_array_equal(back.predict_proba(x), m.predict_proba(x))


def test_minibatch_path(rng):
    x = rng.normal(size=(100, 2))
    y = (x[:, 0] + x[:, 1] > 0).astype(int)
    m = train(x, y, TrainConfig(batch_size=16, epochs=30))
    assert np.mean(m.predict_index(x) == y) > 0.9
    assert len(m.loss_history) == 30


def test_confusion_rows_and_kfold(rng):
    c = confusion_matrix([0, 0, 1, 1], [0, 1, 1, 1], 3)
    np.testing.assert_allclose(c, [[0.5, 0.5, 0], [0, 1, 0], [0, 0, 0]])
    x = rng.normal(size=(60, 2))
    y = np.where(x[:, 0] > 0, "a", "b")
    rep = kfold_evaluate(x, y, k=5, cfg=TrainConfig(epochs=50))
    assert 0.8 <= rep.accuracy <= 1.0 and len(rep.per_fold) == 5
    np.testing.assert_allclose(rep.confusion.sum(axis=1), 1.0)
