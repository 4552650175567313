"""Single-hidden-layer perceptron: tanh units, softmax output, cross-entropy.

Mini-batch gradient descent over a fixed epoch budget with seeded
initialization and batch order. The loss/gradient routine is exposed on its
own so the analytic gradients can be checked against finite differences.
"""

from __future__ import annotations

import numpy as np

from ..rng import rng_for
from . import LearnerSpec, TrainedLearner, scatter_to_classes, train_fingerprint


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def init_params(n_features: int, hidden: int, n_out: int, seed: int) -> dict:
    rng = rng_for(seed, "mlp-init")
    return {
        "w1": rng.standard_normal((n_features, hidden)) / np.sqrt(n_features),
        "b1": np.zeros(hidden),
        "w2": rng.standard_normal((hidden, n_out)) / np.sqrt(hidden),
        "b2": np.zeros(n_out),
    }


def forward(params: dict, x: np.ndarray) -> np.ndarray:
    hidden = np.tanh(x @ params["w1"] + params["b1"])
    return _softmax(hidden @ params["w2"] + params["b2"])


def loss_and_gradients(params: dict, x: np.ndarray, onehot: np.ndarray):
    """Mean cross-entropy over the batch and its exact parameter gradients."""
    hidden = np.tanh(x @ params["w1"] + params["b1"])
    probs = _softmax(hidden @ params["w2"] + params["b2"])
    n = x.shape[0]
    loss = float(-np.log(np.maximum((probs * onehot).sum(axis=1), 1e-300)).mean())

    delta_out = (probs - onehot) / n
    grads = {
        "w2": hidden.T @ delta_out,
        "b2": delta_out.sum(axis=0),
    }
    delta_hidden = (delta_out @ params["w2"].T) * (1.0 - hidden ** 2)
    grads["w1"] = x.T @ delta_hidden
    grads["b1"] = delta_hidden.sum(axis=0)
    return loss, grads


class MlpModel(TrainedLearner):
    kind = "mlp"

    def __init__(self, spec, params, present, n_features, fingerprint):
        super().__init__(spec, n_features, fingerprint)
        self.params = params
        self.present = present

    def _predict_proba(self, x: np.ndarray) -> np.ndarray:
        return scatter_to_classes(forward(self.params, x), self.present)

    def state_arrays(self) -> dict:
        return {**self.params, "present": self.present.astype(np.float64)}

    def state_meta(self) -> dict:
        return {"n_features": self.n_features, "fingerprint": self.fingerprint}

    @classmethod
    def from_state(cls, spec, meta, arrays):
        params = {k: arrays[k] for k in ("w1", "b1", "w2", "b2")}
        return cls(spec, params, arrays["present"].astype(np.int64),
                   int(meta["n_features"]), meta["fingerprint"])


def train_mlp(spec: LearnerSpec, x: np.ndarray, y: np.ndarray) -> MlpModel:
    hp = spec.resolved()
    n, d = x.shape
    present = np.unique(y)
    slot_of = {c: s for s, c in enumerate(present)}
    onehot = np.zeros((n, present.size))
    onehot[np.arange(n), [slot_of[c] for c in y]] = 1.0

    params = init_params(d, int(hp["hidden"]), present.size, spec.seed)
    lr = float(hp["lr"])
    batch = int(hp["batch"])
    order_rng = rng_for(spec.seed, "mlp-order")
    for _ in range(int(hp["epochs"])):
        perm = order_rng.permutation(n)
        for start in range(0, n, batch):
            rows = perm[start:start + batch]
            _, grads = loss_and_gradients(params, x[rows], onehot[rows])
            for key in params:
                params[key] -= lr * grads[key]
    return MlpModel(spec, params, present, d, train_fingerprint(x, y))
