"""k-nearest-neighbour classifier with exact distance tie handling."""

from __future__ import annotations

import numpy as np

from ..table import N_CLASSES
from . import LearnerSpec, TrainedLearner, train_fingerprint

_BLOCK = 256


class KnnModel(TrainedLearner):
    kind = "knn"

    def __init__(self, spec, x, y, k, fingerprint):
        super().__init__(spec, x.shape[1], fingerprint)
        self.x = x
        self.y = y
        self.k = k

    def _predict_proba(self, x: np.ndarray) -> np.ndarray:
        out = np.empty((x.shape[0], N_CLASSES))
        train_sq = (self.x ** 2).sum(axis=1)
        k = self.k
        for start in range(0, x.shape[0], _BLOCK):
            q = x[start:start + _BLOCK]
            d2 = (q ** 2).sum(axis=1)[:, None] - 2.0 * q @ self.x.T + train_sq[None, :]
            if k >= d2.shape[1]:
                chosen = np.arange(d2.shape[1])
                for r in range(q.shape[0]):
                    out[start + r] = np.bincount(self.y[chosen], minlength=N_CLASSES) / chosen.size
                continue
            part = np.argpartition(d2, kth=k - 1, axis=1)[:, :k]
            for r in range(q.shape[0]):
                cand = part[r]
                dmax = d2[r, cand].max()
                # exact tie rule: equal distances resolve to the lower row index
                eligible = np.flatnonzero(d2[r] <= dmax)
                if eligible.size > k:
                    order = np.argsort(d2[r, eligible], kind="stable")
                    cand = eligible[order[:k]]
                out[start + r] = np.bincount(self.y[cand], minlength=N_CLASSES) / k
        return out

    def state_arrays(self) -> dict:
        return {"x": self.x, "y": self.y.astype(np.float64)}

    def state_meta(self) -> dict:
        return {"k": self.k, "fingerprint": self.fingerprint}

    @classmethod
    def from_state(cls, spec, meta, arrays):
        return cls(spec, arrays["x"], arrays["y"].astype(np.int64),
                   int(meta["k"]), meta["fingerprint"])


def train_knn(spec: LearnerSpec, x: np.ndarray, y: np.ndarray) -> KnnModel:
    params = spec.resolved()
    k = int(params["k"])
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, x.shape[0])
    return KnnModel(spec, x.copy(), y.copy(), k, train_fingerprint(x, y))
