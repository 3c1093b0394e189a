"""Hyperparameters and the common trained-model contract."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import ClassVar

import numpy as np


@dataclass(frozen=True)
class LogisticParams:
    kind: ClassVar[str] = "logistic"
    max_iter: int = 10
    penalty: str = "l2"
    tol: float = 1e-4
    C: float = 1.0
    learning_rate: float = 1.0
    standardize: bool = False

    def __post_init__(self):
        _check_positive_int(self, "max_iter")
        if self.penalty != "l2":
            raise ValueError("only the l2 penalty is supported")
        _check_positive(self, "tol", "C", "learning_rate")


@dataclass(frozen=True)
class SvmParams:
    kind: ClassVar[str] = "svm"
    C: float = 1.0
    kernel: str = "rbf"
    gamma: float | str = "scale"
    decision_function_shape: str = "ovo"
    max_passes: int = 100
    tol: float = 1e-3
    standardize: bool = False

    def __post_init__(self):
        _check_positive(self, "C", "tol")
        _check_positive_int(self, "max_passes")
        if self.kernel != "rbf":
            raise ValueError("only the rbf kernel is supported")
        if self.decision_function_shape != "ovo":
            raise ValueError("only one-vs-one multiclass is supported")
        if isinstance(self.gamma, str):
            if self.gamma != "scale":
                raise ValueError("gamma must be 'scale' or a positive number")
        elif not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class NaiveBayesParams:
    kind: ClassVar[str] = "naive_bayes"
    alpha: float = 0.01
    standardize: bool = False

    def __post_init__(self):
        _check_positive(self, "alpha")


@dataclass(frozen=True)
class KnnParams:
    kind: ClassVar[str] = "knn"
    n_neighbors: int = 10
    metric: str = "euclidean"
    standardize: bool = False

    def __post_init__(self):
        _check_positive_int(self, "n_neighbors")
        if self.metric != "euclidean":
            raise ValueError("only the euclidean metric is supported")


@dataclass(frozen=True)
class TreeParams:
    kind: ClassVar[str] = "tree"
    max_depth: int = 3
    min_samples_leaf: int = 1
    criterion: str = "gini"
    standardize: bool = False

    def __post_init__(self):
        _check_positive_int(self, "max_depth", "min_samples_leaf")
        if self.criterion != "gini":
            raise ValueError("only the gini criterion is supported")


@dataclass(frozen=True)
class ForestParams:
    kind: ClassVar[str] = "forest"
    n_estimators: int = 10
    max_depth: int = 3
    min_samples_leaf: int = 1
    criterion: str = "gini"
    max_features: str = "sqrt"
    standardize: bool = False

    def __post_init__(self):
        _check_positive_int(self, "n_estimators", "max_depth", "min_samples_leaf")
        if self.criterion != "gini":
            raise ValueError("only the gini criterion is supported")
        if self.max_features not in ("sqrt", "all"):
            raise ValueError("max_features must be 'sqrt' or 'all'")


Hyperparams = LogisticParams | SvmParams | NaiveBayesParams | KnnParams | TreeParams | ForestParams

PARAM_TYPES: dict[str, type] = {
    cls.kind: cls
    for cls in (LogisticParams, SvmParams, NaiveBayesParams, KnnParams, TreeParams, ForestParams)
}


def _check_positive(obj, *names):
    for name in names:
        if not getattr(obj, name) > 0:
            raise ValueError(f"{name} must be positive")


def _check_positive_int(obj, *names):
    for name in names:
        value = getattr(obj, name)
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise ValueError(f"{name} must be an integer >= 1")


def params_to_dict(params) -> dict:
    return {"kind": params.kind, **dataclasses.asdict(params)}


def params_from_dict(doc: dict):
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind not in PARAM_TYPES:
        raise ValueError(f"unknown model kind {kind!r}")
    cls = PARAM_TYPES[kind]
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValueError(f"unknown {kind} hyperparameters {unknown}")
    return cls(**doc)


@dataclass(frozen=True, eq=False)
class Scaler:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> Scaler:
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


class TrainedModel:
    """A fitted classifier over a sorted class list and ``n_features`` inputs.

    Subclasses implement ``_scores`` on already-scaled rows; every score row
    sums to one, and ``predict`` is the arg-max with ties going to the lower
    class label.
    """

    kind: str = ""

    def __init__(self, params, classes, n_features: int, scaler: Scaler | None = None):
        self.params = params
        self.classes = np.asarray(classes, dtype=int)
        self.n_features = int(n_features)
        self.scaler = scaler

    def _prepare(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected rows with {self.n_features} features, got shape {X.shape}")
        return self.scaler.transform(X) if self.scaler is not None else X

    def predict_scores(self, X) -> np.ndarray:
        return self._scores(self._prepare(X))

    def predict(self, X) -> np.ndarray:
        return self.classes[np.argmax(self.predict_scores(X), axis=1)]

    def _scores(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _state(self) -> dict:
        raise NotImplementedError

    @classmethod
    def _from_state(cls, params, classes, n_features, scaler, state):
        raise NotImplementedError


class ConstantModel(TrainedModel):
    """Degenerate model for single-class training data."""

    kind = "constant"

    def _scores(self, X):
        return np.ones((X.shape[0], 1))

    def _state(self):
        return {}

    @classmethod
    def _from_state(cls, params, classes, n_features, scaler, state):
        return cls(params, classes, n_features, scaler)
