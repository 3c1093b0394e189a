"""Independent reference computations the tests compare against.

Each oracle takes the slow, obvious route (quadrature, full enumeration,
brute-force sorting, projected gradient) so that it shares no code
with the implementation under test.
"""

import itertools
import math

import mpmath
import numpy as np


def t_cdf_by_quadrature(t, df):
    """Integrate the Student t density from -inf to t."""
    mpmath.mp.dps = 30
    df = mpmath.mpf(df)
    norm = mpmath.gamma((df + 1) / 2) / (mpmath.sqrt(df * mpmath.pi) * mpmath.gamma(df / 2))
    pdf = lambda x: norm * (1 + x * x / df) ** (-(df + 1) / 2)
    return float(mpmath.mpf("0.5") + mpmath.quad(pdf, [0, t]))


def u_by_enumeration(n_a, n_b):
    """All U values for sample a over every way to pick n_a of n_a+n_b ranks."""
    n = n_a + n_b
    base = n_a * (n_a + 1) / 2
    return [sum(c) + n_a - base for c in itertools.combinations(range(n), n_a)]


def u_two_sided_p(observed, all_u):
    lower = sum(u <= observed for u in all_u) / len(all_u)
    upper = sum(u >= observed for u in all_u) / len(all_u)
    return min(1.0, 2 * min(lower, upper))


def naive_gini(labels):
    n = len(labels)
    return 1.0 - sum((labels.count(c) / n) ** 2 for c in set(labels))


def split_candidates(rows, labels, min_leaf=1):
    """Every (feature, threshold, gain) a CART search could consider."""
    n = len(rows)
    parent = naive_gini(labels)
    out = []
    for f in range(len(rows[0])):
        values = sorted({r[f] for r in rows})
        for lo, hi in zip(values, values[1:]):
            thr = 0.5 * (lo + hi)
            left = [labels[i] for i in range(n) if rows[i][f] <= thr]
            right = [labels[i] for i in range(n) if rows[i][f] > thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            gain = parent - (len(left) * naive_gini(left) + len(right) * naive_gini(right)) / n
            out.append((f, thr, gain))
    return out


def knn_oracle(train_X, train_y, query, k):
    dists = [(math.dist(query, x), i) for i, x in enumerate(train_X)]
    dists.sort()
    chosen = dists[:k]
    votes, total = {}, {}
    for d, i in chosen:
        votes[train_y[i]] = votes.get(train_y[i], 0) + 1
        total[train_y[i]] = total.get(train_y[i], 0.0) + d
    return min(votes, key=lambda c: (-votes[c], total[c], c))


def project_box_hyperplane(v, y, C):
    """Euclidean projection onto {0 <= a <= C, y'a = 0}.

    The residual r(lam) = y'clip(v - lam*y, 0, C) is piecewise linear and
    non-increasing, so its root lies between two adjacent breakpoints.
    """
    knots = np.unique(np.concatenate([v * y, (v - C) * y]))
    res = np.clip(v[None, :] - knots[:, None] * y[None, :], 0, C) @ y
    k = np.flatnonzero(res <= 0)[0]
    if k == 0 or res[k] == 0:
        lam = knots[k]
    else:
        lo, hi = knots[k - 1], knots[k]
        lam = lo + (hi - lo) * res[k - 1] / (res[k - 1] - res[k])
    return np.clip(v - lam * y, 0, C)


def dual_by_projected_gradient(K, y, C, iters=4000):
    """Accelerated projected gradient on the SVM dual."""
    Q = (y[:, None] * y[None, :]) * K
    step = 1.0 / np.linalg.eigvalsh(Q).max()
    a = prev = np.zeros(y.size)
    for t in range(1, iters + 1):
        z = a + (t - 2) / (t + 1) * (a - prev)
        prev, a = a, project_box_hyperplane(z - step * (Q @ z - 1.0), y, C)
    return a
