"""Linear models: one-vs-rest hinge SVM and multinomial logistic regression.

Both train by deterministic full-batch descent, so fitted weights are exact
functions of (spec, data). SVM probabilities are a softmax over the three
one-vs-rest margins (temperature 1).
"""

from __future__ import annotations

import numpy as np

from . import LearnerSpec, TrainedLearner, scatter_to_classes, train_fingerprint


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class LinearSvmModel(TrainedLearner):
    kind = "linear_svm"

    def __init__(self, spec, weights, biases, present, n_features, fingerprint):
        super().__init__(spec, n_features, fingerprint)
        self.weights = weights  # (n_present, d)
        self.biases = biases  # (n_present,)
        self.present = present

    def margins(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights.T + self.biases

    def _predict_proba(self, x: np.ndarray) -> np.ndarray:
        return scatter_to_classes(_softmax(self.margins(x)), self.present)

    def state_arrays(self) -> dict:
        return {"weights": self.weights, "biases": self.biases,
                "present": self.present.astype(np.float64)}

    def state_meta(self) -> dict:
        return {"n_features": self.n_features, "fingerprint": self.fingerprint}

    @classmethod
    def from_state(cls, spec, meta, arrays):
        return cls(spec, arrays["weights"], arrays["biases"],
                   arrays["present"].astype(np.int64), int(meta["n_features"]),
                   meta["fingerprint"])


def train_linear_svm(spec: LearnerSpec, x: np.ndarray, y: np.ndarray) -> LinearSvmModel:
    """Full-batch subgradient descent on the L2-regularized hinge objective,
    step size 1/(l2 * epoch); the bias is unregularized."""
    params = spec.resolved()
    lam = float(params["l2"])
    epochs = int(params["epochs"])
    n, d = x.shape
    present = np.unique(y)

    weights = np.zeros((present.size, d))
    biases = np.zeros(present.size)
    for slot, cls_label in enumerate(present):
        sign = np.where(y == cls_label, 1.0, -1.0)
        w = np.zeros(d)
        b = 0.0
        for t in range(1, epochs + 1):
            step = 1.0 / (lam * t)
            margin = sign * (x @ w + b)
            viol = margin < 1.0
            if viol.any():
                pull_w = (sign[viol, None] * x[viol]).sum(axis=0) / n
                pull_b = sign[viol].sum() / n
            else:
                pull_w = np.zeros(d)
                pull_b = 0.0
            w -= step * (lam * w - pull_w)
            b += step * pull_b
        weights[slot] = w
        biases[slot] = b
    return LinearSvmModel(spec, weights, biases, present, d, train_fingerprint(x, y))


class LogisticModel(TrainedLearner):
    kind = "logistic"

    def __init__(self, spec, weights, bias, present, n_features, fingerprint):
        super().__init__(spec, n_features, fingerprint)
        self.weights = weights  # (d, n_present)
        self.bias = bias  # (n_present,)
        self.present = present

    def _predict_proba(self, x: np.ndarray) -> np.ndarray:
        return scatter_to_classes(_softmax(x @ self.weights + self.bias), self.present)

    def state_arrays(self) -> dict:
        return {"weights": self.weights, "bias": self.bias,
                "present": self.present.astype(np.float64)}

    def state_meta(self) -> dict:
        return {"n_features": self.n_features, "fingerprint": self.fingerprint}

    @classmethod
    def from_state(cls, spec, meta, arrays):
        return cls(spec, arrays["weights"], arrays["bias"],
                   arrays["present"].astype(np.int64), int(meta["n_features"]),
                   meta["fingerprint"])


def train_logistic(spec: LearnerSpec, x: np.ndarray, y: np.ndarray) -> LogisticModel:
    """Multinomial logistic regression by full-batch gradient descent from a
    zero initialization (no randomness involved)."""
    params = spec.resolved()
    lr = float(params["lr"])
    lam = float(params["l2"])
    n, d = x.shape
    present = np.unique(y)
    slot_of = {c: s for s, c in enumerate(present)}
    onehot = np.zeros((n, present.size))
    onehot[np.arange(n), [slot_of[c] for c in y]] = 1.0

    weights = np.zeros((d, present.size))
    bias = np.zeros(present.size)
    for _ in range(int(params["epochs"])):
        p = _softmax(x @ weights + bias)
        err = (p - onehot) / n
        weights -= lr * (x.T @ err + lam * weights)
        bias -= lr * err.sum(axis=0)
    return LogisticModel(spec, weights, bias, present, d, train_fingerprint(x, y))
