"""k-nearest-neighbour classifier (euclidean)."""

from __future__ import annotations

import numpy as np

from markerstack.classifiers.base import KnnParams, TrainedModel


class KnnModel(TrainedModel):
    """Scores are neighbour class frequencies.

    Equidistant neighbours are ordered by training index. A vote tie goes to
    the tied class whose neighbours lie closest in total, then to the lower
    class label.
    """

    kind = "knn"

    def __init__(self, params, classes, n_features, scaler, X, y_idx):
        super().__init__(params, classes, n_features, scaler)
        self.X = np.asarray(X, dtype=float).reshape(-1, self.n_features)
        self.y_idx = np.asarray(y_idx, dtype=int)

    @classmethod
    def fit(cls, params: KnnParams, X, y_idx, classes, scaler):
        return cls(params, classes, X.shape[1], scaler, X.copy(), y_idx.copy())

    @property
    def k(self) -> int:
        return min(self.params.n_neighbors, self.X.shape[0])

    def neighbours(self, X):
        """Indices and distances of the k nearest training rows, per query."""
        dist = np.sqrt(((X[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2))
        order = np.argsort(dist, axis=1, kind="stable")[:, : self.k]
        return order, np.take_along_axis(dist, order, axis=1)

    def _votes(self, X):
        idx, dist = self.neighbours(X)
        labels = self.y_idx[idx]
        n_cls = len(self.classes)
        counts = np.zeros((X.shape[0], n_cls))
        dist_sum = np.zeros((X.shape[0], n_cls))
        rows = np.repeat(np.arange(X.shape[0]), idx.shape[1])
        np.add.at(counts, (rows, labels.ravel()), 1.0)
        np.add.at(dist_sum, (rows, labels.ravel()), dist.ravel())
        return counts, dist_sum

    def _scores(self, X):
        counts, _ = self._votes(X)
        return counts / self.k

    def predict(self, X):
        counts, dist_sum = self._votes(self._prepare(X))
        out = np.empty(counts.shape[0], dtype=int)
        for r in range(counts.shape[0]):
            tied = np.flatnonzero(counts[r] == counts[r].max())
            if tied.size > 1:
                closest = dist_sum[r, tied].min()
                tied = tied[dist_sum[r, tied] == closest]
            out[r] = tied[0]
        return self.classes[out]

    def _state(self):
        return {"X": self.X.tolist(), "y_idx": self.y_idx.tolist()}

    @classmethod
    def _from_state(cls, params, classes, n_features, scaler, state):
        return cls(params, classes, n_features, scaler, state["X"], state["y_idx"])
