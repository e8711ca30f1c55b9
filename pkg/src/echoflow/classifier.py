"""Multinomial logistic regression trained by mini-batch gradient descent."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flows import split_kfold


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 300
    l2_lambda: float = 1e-4
    batch_size: int | None = None  # None: full batch up to 4096 rows, else 4096
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ClassifierError("learning_rate must be positive")
        if self.epochs < 1:
            raise ClassifierError("epochs must be at least 1")
        if self.l2_lambda < 0:
            raise ClassifierError("l2_lambda must be non-negative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ClassifierError("batch_size must be positive")


FULL_BATCH_LIMIT = 4096


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _augment(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1))])


def loss_and_grad(weights: np.ndarray, xb: np.ndarray, y: np.ndarray, l2: float):
    """Mean cross-entropy plus (l2/2)*||W||^2 (bias column unpenalized), and its gradient.

    ``xb`` already carries the trailing bias column of ones; ``y`` holds class indices.
    """
    n = xb.shape[0]
    p = softmax(xb @ weights.T)
    logp = np.log(np.clip(p[np.arange(n), y], 1e-300, None))
    w_nb = weights[:, :-1]
    loss = -logp.mean() + 0.5 * l2 * np.sum(w_nb * w_nb)
    p[np.arange(n), y] -= 1.0
    grad = p.T @ xb / n
    grad[:, :-1] += l2 * w_nb
    return loss, grad


@dataclass
class SoftmaxModel:
    weights: np.ndarray  # C x (D+1), last column is the bias
    classes: list
    mean: np.ndarray
    std: np.ndarray
    loss_history: list[float] = field(default_factory=list, repr=False)

    @property
    def n_features(self) -> int:
        return self.weights.shape[1] - 1

    def _scale(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_features:
            raise ClassifierError(f"expected {self.n_features} features, got {x.shape[-1]}")
        return (x - self.mean) / self.std

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(self._scale(x))
        return xs @ self.weights[:, :-1].T + self.weights[:, -1]

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        p = softmax(self.decision_function(x))
        return p[0] if x.ndim == 1 else p

    def predict_index(self, x: np.ndarray) -> np.ndarray:
        # argmax returns the first maximum: ties go to the lowest class index
        return np.argmax(np.atleast_2d(self.predict_proba(x)), axis=1)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.classes, dtype=object)[self.predict_index(x)]

    def predict_with_confidence(self, r: np.ndarray):
        """(predicted class, confidence) where confidence is the largest class probability."""
        u = self.predict_proba(r)
        k = int(np.argmax(u))
        return self.classes[k], float(u[k])

    def to_json(self) -> dict:
        return {
            "classes": list(self.classes),
            "scaler": {"mean": self.mean.tolist(), "std": self.std.tolist()},
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SoftmaxModel":
        return cls(
            np.asarray(doc["weights"], dtype=np.float64),
            list(doc["classes"]),
            np.asarray(doc["scaler"]["mean"], dtype=np.float64),
            np.asarray(doc["scaler"]["std"], dtype=np.float64),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SoftmaxModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_scaler(x: np.ndarray):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    # zero-variance features pass through unscaled
    zero = std == 0
    mean = np.where(zero, 0.0, mean)
    std = np.where(zero, 1.0, std)
    return mean, std


def train(features, labels, cfg: TrainConfig = TrainConfig(), classes=None) -> SoftmaxModel:
    """Fit an L2-regularized softmax classifier on z-scored features."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ClassifierError("features must be a 2-D matrix")
    if not np.all(np.isfinite(x)):
        raise ClassifierError("features contain NaN or infinite values")
    labels = np.asarray(labels)
    if classes is None:
        classes = sorted(set(labels.tolist()))
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[v] for v in labels.tolist()], dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise ClassifierError("training needs at least two classes present")

    mean, std = fit_scaler(x)
    xb = _augment((x - mean) / std)
    n = xb.shape[0]
    batch = cfg.batch_size or (n if n <= FULL_BATCH_LIMIT else FULL_BATCH_LIMIT)
    rng = np.random.default_rng(cfg.seed)
    w = np.zeros((len(classes), xb.shape[1]))
    history = []
    for _ in range(cfg.epochs):
        if batch >= n:
            loss, g = loss_and_grad(w, xb, y, cfg.l2_lambda)
            history.append(float(loss))
            w -= cfg.learning_rate * g
        else:
            order = rng.permutation(n)
            for start in range(0, n, batch):
                sel = order[start:start + batch]
                _, g = loss_and_grad(w, xb[sel], y[sel], cfg.l2_lambda)
                w -= cfg.learning_rate * g
            history.append(float(loss_and_grad(w, xb, y, cfg.l2_lambda)[0]))
    return SoftmaxModel(w, list(classes), mean, std, history)


def predict_proba(model: SoftmaxModel, r) -> np.ndarray:
    return model.predict_proba(r)


def predict_with_confidence(model: SoftmaxModel, r):
    return model.predict_with_confidence(r)


@dataclass
class EvalReport:
    accuracy: float
    std: float
    per_fold: list[float]
    confusion: np.ndarray  # row-normalized, rows = true class
    classes: list

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "std": self.std,
            "per_fold": list(self.per_fold),
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
        }


def confusion_matrix(y_true, y_pred, n_classes: int, normalize: bool = True) -> np.ndarray:
    m = np.zeros((n_classes, n_classes))
    np.add.at(m, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return confusion_matrix_from_counts(m) if normalize else m


def kfold_evaluate(features, labels, k: int = 5, cfg: TrainConfig = TrainConfig(), seed: int | None = None,
                   classes=None) -> EvalReport:
    """Stratified k-fold accuracy with a pooled, row-normalized confusion matrix."""
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if classes is None:
        classes = sorted(set(labels.tolist()))
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[v] for v in labels.tolist()])
    folds = split_kfold(y, k, cfg.seed if seed is None else seed)
    accs, counts = [], np.zeros((len(classes), len(classes)))
    for tr, te in folds:
        model = train(x[tr], y[tr], cfg, classes=list(range(len(classes))))
        pred = model.predict_index(x[te])
        accs.append(float(np.mean(pred == y[te])))
        counts += confusion_matrix(y[te], pred, len(classes), normalize=False)
    return EvalReport(float(np.mean(accs)), float(np.std(accs)), accs,
                      confusion_matrix_from_counts(counts), list(classes))


def confusion_matrix_from_counts(counts: np.ndarray) -> np.ndarray:
    rows = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)
