"""Two-sample tests and informative-marker screening.

The Student t distribution is evaluated through the regularized incomplete
beta function (Lentz continued fraction); Mann-Whitney U uses the exact
null distribution for small tie-free samples and a tie-corrected normal
approximation otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from markerstack.dataset import CONTROL, Dataset, FlattenPolicy, flatten

EXACT_U_MAX_N = 12

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 10_000


def _beta_continued_fraction(x: float, a: float, b: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(x: float, a: float, b: float, x_complement: float | None = None) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1.

    ``x_complement`` may carry 1 - x computed without cancellation.
    """
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    y = 1.0 - x if x_complement is None else x_complement
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_continued_fraction(x, a, b) / a
    return 1.0 - math.exp(log_front) * _beta_continued_fraction(y, b, a) / b


def _t_two_sided_tail(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    t2 = t * t
    return regularized_incomplete_beta(df / (df + t2), 0.5 * df, 0.5, x_complement=t2 / (df + t2))


def t_cdf(t: float, df: float) -> float:
    if not df > 0:
        raise ValueError("df must be positive")
    if math.isnan(t):
        raise ValueError("t must be a number")
    half_tail = 0.5 * _t_two_sided_tail(t, df)
    return half_tail if t < 0 else 1.0 - half_tail


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


# ---------------------------------------------------------------------- results

TestKind = Literal["t_test", "u_test"]


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    test_kind: TestKind
    n_a: int
    n_b: int
    method: str  # "student_pooled" | "welch" | "exact" | "normal_approx"
    df: float | None = None

    __test__ = False  # keep pytest from collecting this class


def _as_sample(values, minimum: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size < minimum:
        raise ValueError(f"sample {name} needs at least {minimum} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"sample {name} contains non-finite values")
    return arr


def t_test(a, b, variant: Literal["student_pooled", "welch"] = "welch") -> TestResult:
    """Two-sided two-sample t-test.

    Zero standard error is resolved by its limit: equal means give t = 0 and
    p = 1, unequal means give an infinite t and p = 0.
    """
    a = _as_sample(a, 2, "a")
    b = _as_sample(b, 2, "b")
    na, nb = a.size, b.size
    mean_diff = a.mean() - b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if variant == "student_pooled":
        df = float(na + nb - 2)
        pooled = ((na - 1) * va + (nb - 1) * vb) / df
        se = math.sqrt(pooled * (1.0 / na + 1.0 / nb))
    elif variant == "welch":
        qa, qb = va / na, vb / nb
        se = math.sqrt(qa + qb)
        denom = qa * qa / (na - 1) + qb * qb / (nb - 1)
        df = (qa + qb) ** 2 / denom if denom > 0 else float(na + nb - 2)
    else:
        raise ValueError(f"unknown t-test variant {variant!r}")
    df = float(df)
    if se == 0.0:
        if mean_diff == 0.0:
            return TestResult(0.0, 1.0, "t_test", na, nb, variant, df)
        return TestResult(math.copysign(math.inf, mean_diff), 0.0, "t_test", na, nb, variant, df)
    t = float(mean_diff / se)
    p = min(1.0, max(0.0, _t_two_sided_tail(t, df)))
    return TestResult(t, p, "t_test", na, nb, variant, df)


def midranks(values: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Ranks 1..N with ties given their average rank, plus tie-group sizes."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=float)
    ties = []
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        ties.append(j - i + 1)
        i = j + 1
    return ranks, ties


def u_null_counts(n_a: int, n_b: int) -> list[int]:
    """Number of rank splits giving U = 0..n_a*n_b under the null.

    Uses the recurrence f(u; m, n) = f(u - n; m - 1, n) + f(u; m, n - 1).
    """
    # table[m][n] is the count list for sample sizes (m, n)
    table = [[[1] for _ in range(n_b + 1)] for _ in range(n_a + 1)]
    for m in range(1, n_a + 1):
        for n in range(1, n_b + 1):
            counts = [0] * (m * n + 1)
            for u, c in enumerate(table[m - 1][n]):
                counts[u + n] += c
            for u, c in enumerate(table[m][n - 1]):
                counts[u] += c
            table[m][n] = counts
    return table[n_a][n_b]


def mann_whitney_u(a, b) -> TestResult:
    """Mann-Whitney U for sample ``a`` with a two-sided p-value."""
    a = _as_sample(a, 1, "a")
    b = _as_sample(b, 1, "b")
    na, nb = a.size, b.size
    n = na + nb
    ranks, ties = midranks(np.concatenate([a, b]))
    u = float(math.fsum(ranks[:na]) - na * (na + 1) / 2.0)
    has_ties = any(t > 1 for t in ties)

    if n <= EXACT_U_MAX_N and not has_ties:
        counts = u_null_counts(na, nb)
        total = math.comb(n, na)
        k = int(round(u))
        lower = sum(counts[: k + 1]) / total
        upper = sum(counts[k:]) / total
        p = min(1.0, 2.0 * min(lower, upper))
        return TestResult(u, p, "u_test", na, nb, "exact")

    tie_term = sum(t**3 - t for t in ties) / (n * (n - 1))
    var = na * nb * (n + 1 - tie_term) / 12.0
    if var <= 0.0:
        return TestResult(u, 1.0, "u_test", na, nb, "normal_approx")
    z = max(0.0, abs(u - na * nb / 2.0) - 0.5) / math.sqrt(var)
    p = min(1.0, max(0.0, 2.0 * normal_sf(z)))
    return TestResult(u, p, "u_test", na, nb, "normal_approx")


# ---------------------------------------------------------------------- screening


@dataclass(frozen=True)
class ScreeningConfig:
    tests: tuple[TestKind, ...] = ("t_test", "u_test")
    k_per_comparison: int = 2
    alpha: float = 0.05
    t_variant: Literal["student_pooled", "welch"] = "welch"

    def __post_init__(self):
        if not self.tests:
            raise ValueError("at least one test is required")
        for kind in self.tests:
            if kind not in ("t_test", "u_test"):
                raise ValueError(f"unknown test {kind!r}")
        if self.k_per_comparison < 1:
            raise ValueError("k_per_comparison must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class MarkerScore:
    marker: str
    class_pair: tuple[int, int]
    result: TestResult


@dataclass(frozen=True)
class ScreeningResult:
    scores: tuple[MarkerScore, ...]
    selected: tuple[str, ...]
    alpha: float = 0.05
    policy: FlattenPolicy = field(default_factory=lambda: FlattenPolicy("series_mean"))

    def significant(self) -> tuple[MarkerScore, ...]:
        return tuple(s for s in self.scores if s.result.p_value < self.alpha)


def screen_markers(
    ds: Dataset,
    policy: FlattenPolicy = FlattenPolicy("series_mean"),
    cfg: ScreeningConfig = ScreeningConfig(),
) -> ScreeningResult:
    """Score every marker for each disease class against control and keep
    the ``k_per_comparison`` lowest-p markers of every comparison.

    The union is returned without repeats, ordered by the marker's smallest
    p-value and then by name.
    """
    fm = flatten(ds, policy)
    if not np.any(fm.labels == CONTROL):
        raise ValueError("screening needs control-class (0) observations")
    diseases = sorted(int(c) for c in np.unique(fm.labels) if c != CONTROL)
    if not diseases:
        raise ValueError("screening needs at least one disease class")
    columns = {m: fm.feature_names.index(policy.marker_column(m)) for m in ds.marker_names}
    control_rows = fm.rows[fm.labels == CONTROL]

    scores: list[MarkerScore] = []
    chosen: set[str] = set()
    for kind in cfg.tests:
        for cls in diseases:
            class_rows = fm.rows[fm.labels == cls]
            if kind == "t_test" and (class_rows.shape[0] < 2 or control_rows.shape[0] < 2):
                raise ValueError(f"class {cls} or control has fewer than 2 values for the t-test")
            batch = []
            for m in ds.marker_names:
                col = columns[m]
                if kind == "t_test":
                    res = t_test(class_rows[:, col], control_rows[:, col], cfg.t_variant)
                else:
                    res = mann_whitney_u(class_rows[:, col], control_rows[:, col])
                batch.append(MarkerScore(m, (cls, CONTROL), res))
            scores.extend(batch)
            ranked = sorted(batch, key=lambda s: (s.result.p_value, ds.marker_names.index(s.marker)))
            chosen.update(s.marker for s in ranked[: cfg.k_per_comparison])

    best_p = {m: min(s.result.p_value for s in scores if s.marker == m) for m in chosen}
    selected = tuple(sorted(chosen, key=lambda m: (best_p[m], m)))
    return ScreeningResult(tuple(scores), selected, cfg.alpha, policy)
