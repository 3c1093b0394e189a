"""Base learners sharing one train / predict / score contract."""

from __future__ import annotations

import numpy as np

from markerstack.classifiers.base import (
    PARAM_TYPES,
    ConstantModel,
    ForestParams,
    Hyperparams,
    KnnParams,
    LogisticParams,
    NaiveBayesParams,
    Scaler,
    SvmParams,
    TrainedModel,
    TreeParams,
    params_from_dict,
    params_to_dict,
)
from markerstack.classifiers.bayes import NaiveBayesModel
from markerstack.classifiers.knn import KnnModel
from markerstack.classifiers.logistic import LogisticModel
from markerstack.classifiers.svm import SvmModel, rbf_kernel
from markerstack.classifiers.tree import ForestModel, TreeModel, best_split, gini_impurity

MODEL_SCHEMA_VERSION = 1

MODEL_TYPES: dict[str, type[TrainedModel]] = {
    m.kind: m for m in (LogisticModel, SvmModel, NaiveBayesModel, KnnModel, TreeModel, ForestModel, ConstantModel)
}

__all__ = [
    "ForestParams", "Hyperparams", "KnnParams", "LogisticParams", "NaiveBayesParams", "SvmParams",
    "TreeParams", "TrainedModel", "best_split", "gini_impurity", "model_from_dict", "model_to_dict",
    "params_from_dict", "params_to_dict", "predict", "predict_scores", "rbf_kernel", "train_classifier",
]


def train_classifier(params: Hyperparams, rows, labels=None, seed: int = 0) -> TrainedModel:
    """Fit the learner described by ``params`` on ``rows``/``labels``.

    ``rows`` may be a FeatureMatrix, whose labels are used when ``labels``
    is None. Single-class data yields a model that always predicts that
    class.
    """
    if labels is None and hasattr(rows, "labels"):
        rows, labels = rows.rows, rows.labels
    X = np.asarray(rows, dtype=float)
    y = np.asarray(labels, dtype=int)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError("training matrix must be non-empty and 2-D")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must align with rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("training matrix contains non-finite values")
    if type(params) not in PARAM_TYPES.values():
        raise TypeError(f"unsupported hyperparameters {params!r}")

    classes, y_idx = np.unique(y, return_inverse=True)
    scaler = Scaler.fit(X) if params.standardize else None
    Xs = scaler.transform(X) if scaler is not None else X
    if classes.size == 1:
        return ConstantModel(params, classes, X.shape[1], scaler)
    model_cls = MODEL_TYPES[params.kind]
    if params.kind == "forest":
        return model_cls.fit(params, Xs, y_idx, classes, scaler, seed=seed)
    return model_cls.fit(params, Xs, y_idx, classes, scaler)


def predict(model: TrainedModel, rows) -> np.ndarray:
    return model.predict(rows)


def predict_scores(model: TrainedModel, rows) -> np.ndarray:
    return model.predict_scores(rows)


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": model.kind,
        "params": params_to_dict(model.params),
        "classes": model.classes.tolist(),
        "n_features": model.n_features,
        "scaler": None if model.scaler is None else {
            "mean": model.scaler.mean.tolist(), "scale": model.scaler.scale.tolist()},
        "state": model._state(),
    }


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema_version {doc.get('schema_version')!r}")
    kind = doc["kind"]
    if kind not in MODEL_TYPES:
        raise ValueError(f"unknown model kind {kind!r}")
    scaler = None
    if doc["scaler"] is not None:
        scaler = Scaler(np.asarray(doc["scaler"]["mean"], dtype=float), np.asarray(doc["scaler"]["scale"], dtype=float))
    return MODEL_TYPES[kind]._from_state(
        params_from_dict(doc["params"]), doc["classes"], doc["n_features"], scaler, doc["state"])
