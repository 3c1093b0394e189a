"""Constructed cohorts shared by the test modules."""

import math

import numpy as np

from markerstack.dataset import (
    CONTROL,
    FeatureMatrix,
    GeneratorSpec,
    Observation,
    PatientSeries,
    Dataset,
)


def planted_marker_spec(sigma=0.3, shift_sd=5.0, n_markers=5, per_class=15):
    """M1 sits ``shift_sd`` log-scale SDs above baseline in Disease A only."""
    names = tuple(f"M{i + 1}" for i in range(n_markers))
    base = (1.0,) * n_markers
    planted = (math.exp(shift_sd * sigma),) + base[1:]
    probs = (0.0, 0.5, 0.5)
    return GeneratorSpec(
        class_counts={0: per_class, 1: per_class, 2: per_class, 3: per_class, 4: per_class},
        length_probs={"control": probs, "disease": probs},
        class_means={0: base, 1: planted, 2: base, 3: base, 4: base},
        marker_names=names,
        sigma=sigma,
    )


def specialist_matrix(seed, n=200, flip=0.1, shift=0.5, n_linear=6, scale=5.0):
    """Binary problem with two independent signals.

    Columns 0-1 carry a quadrant (XOR) pattern at a large scale: invisible to
    linear and naive-Bayes learners, easy for neighbours/kernels. Columns
    2.. carry small linear mean shifts that the linear learners pool.
    """
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    sign = np.where(rng.random(n) < flip, -1, 1) * (2 * y - 1)
    x1 = rng.uniform(0.2, 1, n) * rng.choice([-1, 1], n)
    x2 = rng.uniform(0.2, 1, n) * np.sign(x1) * sign
    linear = rng.normal(size=(n, n_linear)) + shift * (2 * y - 1)[:, None]
    X = np.column_stack([scale * x1, scale * x2, linear])
    return FeatureMatrix(X, y, np.array([f"p{i:03d}" for i in range(n)]),
                         tuple(f"m{i}" for i in range(X.shape[1])))


def dataset_from_rows(rows, labels, groups=None):
    """One single-observation series per row (or per group) with markers x0.."""
    rows = np.asarray(rows, dtype=float)
    groups = [f"p{i:03d}" for i in range(len(rows))] if groups is None else list(groups)
    names = tuple(f"x{j}" for j in range(rows.shape[1]))
    by_patient = {}
    for r, y, g in zip(rows, labels, groups):
        by_patient.setdefault(g, (int(y), []))[1].append(r)
    series = []
    for g, (y, rs) in by_patient.items():
        obs = tuple(Observation(g, y, None if y == CONTROL else 10.0, 50.0,
                                dict(zip(names, map(float, r))), i) for i, r in enumerate(rs))
        series.append(PatientSeries(g, y, obs))
    return Dataset(tuple(series), names)
