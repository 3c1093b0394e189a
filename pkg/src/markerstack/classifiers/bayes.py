"""Gaussian naive Bayes with a relative variance floor."""

from __future__ import annotations

import numpy as np

from markerstack.classifiers.base import NaiveBayesParams, TrainedModel


class NaiveBayesModel(TrainedModel):
    kind = "naive_bayes"

    def __init__(self, params, classes, n_features, scaler, log_priors, means, variances):
        super().__init__(params, classes, n_features, scaler)
        self.log_priors = np.asarray(log_priors, dtype=float)
        self.means = np.asarray(means, dtype=float).reshape(len(self.classes), self.n_features)
        self.variances = np.asarray(variances, dtype=float).reshape(len(self.classes), self.n_features)

    @classmethod
    def fit(cls, params: NaiveBayesParams, X, y_idx, classes, scaler):
        # floor = alpha * largest feature variance (alpha alone for constant data)
        top = X.var(axis=0).max()
        floor = params.alpha * top if top > 0 else params.alpha
        n_cls = len(classes)
        means = np.empty((n_cls, X.shape[1]))
        variances = np.empty_like(means)
        counts = np.empty(n_cls)
        for c in range(n_cls):
            Xc = X[y_idx == c]
            counts[c] = Xc.shape[0]
            means[c] = Xc.mean(axis=0)
            variances[c] = np.maximum(Xc.var(axis=0), floor)
        log_priors = np.log(counts / counts.sum())
        return cls(params, classes, X.shape[1], scaler, log_priors, means, variances)

    def joint_log_likelihood(self, X):
        diff = X[:, None, :] - self.means[None, :, :]
        ll = -0.5 * (np.log(2.0 * np.pi * self.variances)[None] + diff**2 / self.variances[None]).sum(axis=2)
        return ll + self.log_priors

    def _scores(self, X):
        jll = self.joint_log_likelihood(X)
        jll -= jll.max(axis=1, keepdims=True)
        p = np.exp(jll)
        return p / p.sum(axis=1, keepdims=True)

    def _state(self):
        return {
            "log_priors": self.log_priors.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def _from_state(cls, params, classes, n_features, scaler, state):
        return cls(params, classes, n_features, scaler, state["log_priors"], state["means"], state["variances"])
