"""Soft-margin RBF support vector machine, one-vs-one.

Each class pair is solved by SMO on the dual

    min_a  1/2 a'Qa - sum(a)   s.t.  y'a = 0,  0 <= a <= C,   Q_ij = y_i y_j K_ij

picking the maximal violating pair every iteration.
"""

from __future__ import annotations

import numpy as np

from markerstack.classifiers.base import SvmParams, TrainedModel

_TAU = 1e-12


def rbf_kernel(x, z, gamma: float) -> float:
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != z.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {z.shape}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    diff = x - z
    return float(np.exp(-gamma * (diff @ diff)))


def rbf_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=2)
    return np.exp(-gamma * sq)


def scale_gamma(X: np.ndarray) -> float:
    """1 / (d * mean per-feature variance); 1.0 for constant data."""
    var = X.var(axis=0).mean() if X.shape[0] else 0.0
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def dual_objective(alpha: np.ndarray, K: np.ndarray, y: np.ndarray) -> float:
    ay = alpha * y
    return 0.5 * ay @ K @ ay - alpha.sum()


def kkt_violation(alpha, grad, y, C) -> float:
    """max over I_up of -y*G minus min over I_low of -y*G (<= 0 at optimum)."""
    minus_yg = -y * grad
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    if not up.any() or not low.any():
        return 0.0
    return float(minus_yg[up].max() - minus_yg[low].min())


def solve_dual(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int):
    """SMO with first-order working-set selection. Returns ``(alpha, rho)``;
    the decision function is ``sum(alpha*y*K(x_i, x)) - rho``."""
    n = y.size
    alpha = np.zeros(n)
    grad = -np.ones(n)
    Q = (y[:, None] * y[None, :]) * K
    diag = np.diag(Q).copy()
    for _ in range(max_iter):
        minus_yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(minus_yg[up])])
        j = int(np.flatnonzero(low)[np.argmin(minus_yg[low])])
        if minus_yg[i] - minus_yg[j] < tol:
            break
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = diag[i] + diag[j] + 2.0 * Q[i, j]
            quad = quad if quad > 0 else _TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            new_i, new_j = ai + delta, aj + delta
            if diff > 0:
                if new_j < 0:
                    new_j, new_i = 0.0, diff
            elif new_i < 0:
                new_i, new_j = 0.0, -diff
            if diff > 0:
                if new_i > C:
                    new_i, new_j = C, C - diff
            elif new_j > C:
                new_j, new_i = C, C + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * Q[i, j]
            quad = quad if quad > 0 else _TAU
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            new_i, new_j = ai - delta, aj + delta
            if total > C:
                if new_i > C:
                    new_i, new_j = C, total - C
            elif new_j < 0:
                new_j, new_i = 0.0, total
            if total > C:
                if new_j > C:
                    new_j, new_i = C, total - C
            elif new_i < 0:
                new_i, new_j = 0.0, total
        alpha[i], alpha[j] = new_i, new_j
        grad += Q[:, i] * (new_i - ai) + Q[:, j] * (new_j - aj)
    return alpha, _rho(alpha, grad, y, C)


def _rho(alpha, grad, y, C) -> float:
    yg = y * grad
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return float(yg[free].mean())
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    if np.isinf(ub) or np.isinf(lb):
        return float(ub if np.isfinite(ub) else lb if np.isfinite(lb) else 0.0)
    return float(0.5 * (ub + lb))


class SvmModel(TrainedModel):
    kind = "svm"

    def __init__(self, params, classes, n_features, scaler, gamma, machines):
        super().__init__(params, classes, n_features, scaler)
        self.gamma = float(gamma)
        # (i, j, support rows, alpha*y coefficients, rho); positive side is class index i
        self.machines = [
            (int(i), int(j), np.asarray(sv, dtype=float).reshape(-1, self.n_features),
             np.asarray(coef, dtype=float), float(rho))
            for i, j, sv, coef, rho in machines
        ]

    @classmethod
    def fit(cls, params: SvmParams, X, y_idx, classes, scaler):
        gamma = scale_gamma(X) if params.gamma == "scale" else float(params.gamma)
        n_cls = len(classes)
        machines = []
        for i in range(n_cls):
            for j in range(i + 1, n_cls):
                mask = (y_idx == i) | (y_idx == j)
                Xp = X[mask]
                yp = np.where(y_idx[mask] == i, 1.0, -1.0)
                K = rbf_matrix(Xp, Xp, gamma)
                max_iter = max(1000, params.max_passes * Xp.shape[0])
                alpha, rho = solve_dual(K, yp, params.C, params.tol, max_iter)
                sv = alpha > 0
                machines.append((i, j, Xp[sv], (alpha * yp)[sv], rho))
        return cls(params, classes, X.shape[1], scaler, gamma, machines)

    def decision_values(self, X) -> np.ndarray:
        X = self._prepare(X)
        return self._decisions(X)

    def _decisions(self, X):
        out = np.empty((X.shape[0], len(self.machines)))
        for m, (_, _, sv, coef, rho) in enumerate(self.machines):
            if sv.shape[0]:
                out[:, m] = rbf_matrix(X, sv, self.gamma) @ coef - rho
            else:
                out[:, m] = -rho
        return out

    def _scores(self, X):
        votes = np.zeros((X.shape[0], len(self.classes)))
        dec = self._decisions(X)
        for m, (i, j, *_rest) in enumerate(self.machines):
            # a zero decision value votes for the lower class
            pos = dec[:, m] >= 0
            votes[pos, i] += 1
            votes[~pos, j] += 1
        return votes / len(self.machines)

    def _state(self):
        return {
            "gamma": self.gamma,
            "machines": [
                {"i": i, "j": j, "support": sv.tolist(), "coef": coef.tolist(), "rho": rho}
                for i, j, sv, coef, rho in self.machines
            ],
        }

    @classmethod
    def _from_state(cls, params, classes, n_features, scaler, state):
        machines = [(m["i"], m["j"], m["support"], m["coef"], m["rho"]) for m in state["machines"]]
        return cls(params, classes, n_features, scaler, state["gamma"], machines)
