"""One-vs-rest logistic regression trained by full-batch gradient descent."""

from __future__ import annotations

import numpy as np

from markerstack.classifiers.base import LogisticParams, TrainedModel

_ARMIJO = 1e-4
_MAX_HALVINGS = 60


def _objective(w, b, X, y, reg):
    z = X @ w + b
    # mean log-loss in a form that never overflows
    loss = np.mean(np.logaddexp(0.0, z) - y * z)
    return loss + 0.5 * reg * (w @ w)


def _gradient(w, b, X, y, reg):
    z = X @ w + b
    resid = 0.5 * (1.0 + np.tanh(0.5 * z)) - y  # sigmoid(z) - y
    gw = X.T @ resid / X.shape[0] + reg * w
    gb = resid.mean()
    return gw, gb


def fit_binary(X: np.ndarray, y: np.ndarray, params: LogisticParams):
    """Minimise mean log-loss + reg/2 * |w|^2 for 0/1 targets ``y``.

    ``reg = 1 / (C * n)`` matches a C-weighted sum of losses. Steps start at
    ``learning_rate`` and are halved until the Armijo condition holds, so the
    objective never increases. Returns ``(w, b, objective_history)``.
    """
    n, d = X.shape
    reg = 1.0 / (params.C * n)
    w = np.zeros(d)
    b = 0.0
    f = _objective(w, b, X, y, reg)
    history = [f]
    step = params.learning_rate
    for _ in range(params.max_iter):
        gw, gb = _gradient(w, b, X, y, reg)
        gnorm2 = gw @ gw + gb * gb
        if np.sqrt(gnorm2) < params.tol:
            break
        for _ in range(_MAX_HALVINGS):
            w_new, b_new = w - step * gw, b - step * gb
            f_new = _objective(w_new, b_new, X, y, reg)
            if f_new <= f - _ARMIJO * step * gnorm2:
                break
            step *= 0.5
        else:
            break
        w, b, f = w_new, b_new, f_new
        history.append(f)
        step = min(params.learning_rate, 2.0 * step)
    return w, float(b), history


class LogisticModel(TrainedModel):
    kind = "logistic"

    def __init__(self, params, classes, n_features, scaler, weights, intercepts):
        super().__init__(params, classes, n_features, scaler)
        self.weights = np.asarray(weights, dtype=float).reshape(len(self.classes), self.n_features)
        self.intercepts = np.asarray(intercepts, dtype=float)

    @classmethod
    def fit(cls, params: LogisticParams, X, y_idx, classes, scaler):
        W, B = [], []
        for c in range(len(classes)):
            w, b, _ = fit_binary(X, (y_idx == c).astype(float), params)
            W.append(w)
            B.append(b)
        return cls(params, classes, X.shape[1], scaler, np.array(W), np.array(B))

    def _scores(self, X):
        z = X @ self.weights.T + self.intercepts
        # normalise the per-class sigmoids; log domain avoids 0/0
        log_sig = -np.logaddexp(0.0, -z)
        log_sig -= log_sig.max(axis=1, keepdims=True)
        p = np.exp(log_sig)
        return p / p.sum(axis=1, keepdims=True)

    def _state(self):
        return {"weights": self.weights.tolist(), "intercepts": self.intercepts.tolist()}

    @classmethod
    def _from_state(cls, params, classes, n_features, scaler, state):
        return cls(params, classes, n_features, scaler, state["weights"], state["intercepts"])
