"""Pluggable batch-label classifiers used by the cross-KG sampler."""

from __future__ import annotations

from typing import Protocol

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp


class MissingClassError(ValueError):
    """A batch label has no training example."""


class Classifier(Protocol):
    def fit(self, x: np.ndarray, y: np.ndarray, n_classes: int) -> "Classifier": ...

    def predict(self, x: np.ndarray) -> np.ndarray: ...


class LogisticRegression:
    """Multinomial logistic regression fitted by L-BFGS with an L2 penalty."""

    def __init__(self, l2: float = 1e-3, max_iter: int = 500):
        self.l2 = l2
        self.max_iter = max_iter

    def fit(self, x: np.ndarray, y: np.ndarray, n_classes: int) -> "LogisticRegression":
        x = np.asarray(x, dtype=np.float64)
        self.mu = x.mean(0)
        self.sd = x.std(0)
        self.sd[self.sd == 0] = 1.0
        xs = (x - self.mu) / self.sd
        n, d = xs.shape
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y] = 1.0

        def objective(theta):
            w = theta[: d * n_classes].reshape(d, n_classes)
            b = theta[d * n_classes:]
            z = xs @ w + b
            lse = logsumexp(z, axis=1, keepdims=True)
            loss = (lse.ravel() - (z * onehot).sum(1)).mean() + 0.5 * self.l2 * (w * w).sum()
            p = np.exp(z - lse)
            g = (p - onehot) / n
            return loss, np.concatenate([(xs.T @ g + self.l2 * w).ravel(), g.sum(0)])

        res = minimize(objective, np.zeros(d * n_classes + n_classes), jac=True, method="L-BFGS-B",
                       options={"maxiter": self.max_iter})
        self.w = res.x[: d * n_classes].reshape(d, n_classes)
        self.b = res.x[d * n_classes:]
        return self

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        return ((np.asarray(x, dtype=np.float64) - self.mu) / self.sd) @ self.w + self.b

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.decision_function(x).argmax(1)


class GradientBoosting:
    """Histogram gradient-boosted trees (scikit-learn) behind the same interface."""

    def __init__(self, rng_seed: int = 0, **params):
        self.rng_seed = rng_seed
        self.params = params

    def fit(self, x: np.ndarray, y: np.ndarray, n_classes: int) -> "GradientBoosting":
        from sklearn.ensemble import HistGradientBoostingClassifier

        self.model = HistGradientBoostingClassifier(random_state=self.rng_seed, **self.params).fit(x, y)
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.model.predict(x).astype(np.int64)


CLASSIFIERS = {"logreg": LogisticRegression, "gbt": GradientBoosting}


def train_classifier(train_x: np.ndarray, train_labels: np.ndarray, x: np.ndarray,
                     n_classes: int | None = None, classifier: str | Classifier = "logreg") -> np.ndarray:
    """Fit on (train_x, train_labels) and predict a label for every row of x.

    Raises MissingClassError when a label in ``range(n_classes)`` has no
    training row; the caller decides whether to merge batches.
    """
    train_labels = np.asarray(train_labels, dtype=np.int64)
    if len(train_x) != len(train_labels):
        raise ValueError("train_x and train_labels differ in length")
    if len(x) == 0:
        return np.empty(0, dtype=np.int64)
    if len(train_labels) == 0:
        raise MissingClassError("no training rows")
    n_classes = int(train_labels.max()) + 1 if n_classes is None else n_classes
    present = np.unique(train_labels)
    if len(present) < n_classes:
        missing = sorted(set(range(n_classes)) - set(present.tolist()))
        raise MissingClassError(f"classes {missing} have no training rows")
    if n_classes == 1:
        return np.zeros(len(x), dtype=np.int64)
    clf = CLASSIFIERS[classifier]() if isinstance(classifier, str) else classifier
    clf.fit(np.asarray(train_x), train_labels, n_classes)
    return np.asarray(clf.predict(np.asarray(x)), dtype=np.int64)
