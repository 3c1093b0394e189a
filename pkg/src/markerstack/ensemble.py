"""Two-level stacking: base learner outputs become meta-classifier inputs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from markerstack.classifiers import (
    ForestParams,
    Hyperparams,
    KnnParams,
    LogisticParams,
    NaiveBayesParams,
    SvmParams,
    TrainedModel,
    TreeParams,
    model_from_dict,
    model_to_dict,
    params_to_dict,
    train_classifier,
)
from markerstack.dataset import FeatureMatrix, assign_group_folds, split
from markerstack.parallel import ordered_map
from markerstack.seeding import sub_seed

STACKED_SCHEMA_VERSION = 1

DEFAULT_BASE_SPECS: tuple[tuple[str, Hyperparams], ...] = (
    ("LR", LogisticParams()),
    ("SVM", SvmParams()),
    ("NB", NaiveBayesParams()),
    ("KNN", KnnParams()),
    ("DT", TreeParams()),
    ("RF", ForestParams()),
)


class StackingError(RuntimeError):
    pass


@dataclass(frozen=True)
class StackingConfig:
    base_specs: tuple[tuple[str, Hyperparams], ...] = DEFAULT_BASE_SPECS
    meta_spec: Hyperparams = field(default_factory=LogisticParams)
    meta_feature_mode: Literal["scores", "labels_one_hot"] = "scores"
    scheme: Literal["out_of_fold", "holdout"] = "out_of_fold"
    n_folds: int = 5
    holdout_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if not self.base_specs:
            raise ValueError("base_specs must not be empty")
        if self.meta_feature_mode not in ("scores", "labels_one_hot"):
            raise ValueError(f"unknown meta_feature_mode {self.meta_feature_mode!r}")
        if self.scheme not in ("out_of_fold", "holdout"):
            raise ValueError(f"unknown training scheme {self.scheme!r}")
        if self.n_folds < 2:
            raise ValueError("n_folds must be >= 2")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "base_specs": [[name, params_to_dict(p)] for name, p in self.base_specs],
            "meta_spec": params_to_dict(self.meta_spec),
            "meta_feature_mode": self.meta_feature_mode,
            "scheme": self.scheme,
            "n_folds": self.n_folds,
            "holdout_fraction": self.holdout_fraction,
            "seed": self.seed,
        }


def meta_layout(base_names, classes) -> tuple[str, ...]:
    """Column names, base-learner major and class minor."""
    return tuple(f"{b}:{name}:{int(c)}" for b, name in enumerate(base_names) for c in classes)


def base_outputs(model: TrainedModel, rows: np.ndarray, classes: np.ndarray, mode: str) -> np.ndarray:
    """Scores or one-hot labels of ``model`` aligned to ``classes``.

    Classes the model never saw get zero columns.
    """
    out = np.zeros((rows.shape[0], len(classes)))
    cols = np.searchsorted(classes, model.classes)
    if mode == "scores":
        out[:, cols] = model.predict_scores(rows)
    else:
        pred = model.predict(rows)
        out[np.arange(rows.shape[0]), np.searchsorted(classes, pred)] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class MetaFeatures:
    """Meta-feature matrix plus the bookkeeping needed to audit leakage.

    ``fold_of_row[r]`` names the fold whose base models produced row r, and
    ``training_groups[f]`` lists the patient groups those models trained on.
    """

    matrix: FeatureMatrix
    fold_of_row: np.ndarray
    training_groups: tuple[frozenset, ...]
    classes: np.ndarray


def _fold_plan(fm: FeatureMatrix, n_folds: int, seed: int) -> np.ndarray:
    for attempt in range(2):
        folds = assign_group_folds(fm.groups, n_folds, sub_seed(seed, f"meta-folds/{attempt}"))
        if all(np.unique(fm.labels[folds != f]).size >= 2 for f in range(n_folds)):
            return folds
    raise StackingError("a stacking fold left a single class for base training after one re-draw")


def build_meta_features(
    base_specs, fm: FeatureMatrix, cfg: StackingConfig, classes=None, n_jobs: int = 1
) -> MetaFeatures:
    classes = np.unique(fm.labels) if classes is None else np.asarray(classes, dtype=int)
    names = [name for name, _ in base_specs]
    layout = meta_layout(names, classes)

    if cfg.scheme == "out_of_fold":
        folds = _fold_plan(fm, cfg.n_folds, cfg.seed)
        n_folds = cfg.n_folds
        keep = np.arange(fm.n)
    else:
        for attempt in range(2):
            fit_part, meta_part = split(
                _indexed(fm), cfg.holdout_fraction, sub_seed(cfg.seed, f"holdout/{attempt}"), group_aware=True)
            if np.unique(fit_part.labels).size >= 2:
                break
        else:
            raise StackingError("holdout split left a single class for base training after one re-draw")
        keep = np.sort(meta_part.rows[:, 0].astype(int))
        folds = np.full(fm.n, -1)
        folds[keep] = 0
        n_folds = 1

    def fit_cell(cell):
        f, b = cell
        train_idx = np.flatnonzero((folds != f) & (folds != -1)) if cfg.scheme == "out_of_fold" \
            else np.flatnonzero(folds == -1)
        model = train_classifier(base_specs[b][1], fm.rows[train_idx], fm.labels[train_idx],
                                 seed=sub_seed(cfg.seed, f"base/{f}/{b}"))
        test_idx = np.flatnonzero(folds == f)
        return test_idx, base_outputs(model, fm.rows[test_idx], classes, cfg.meta_feature_mode)

    cells = [(f, b) for f in range(n_folds) for b in range(len(base_specs))]
    results = ordered_map(fit_cell, cells, n_jobs)
    C = len(classes)
    meta = np.zeros((fm.n, len(base_specs) * C))
    for (f, b), (test_idx, block) in zip(cells, results):
        meta[test_idx, b * C:(b + 1) * C] = block

    if cfg.scheme == "out_of_fold":
        training_groups = tuple(frozenset(fm.groups[folds != f].tolist()) for f in range(n_folds))
    else:
        training_groups = (frozenset(fm.groups[folds == -1].tolist()),)
    matrix = FeatureMatrix(meta[keep], fm.labels[keep], fm.groups[keep], layout)
    return MetaFeatures(matrix, folds[keep], training_groups, classes)


def _indexed(fm: FeatureMatrix) -> FeatureMatrix:
    # carry the row index through split() as the only column
    return FeatureMatrix(np.arange(fm.n, dtype=float).reshape(-1, 1), fm.labels, fm.groups, ("row",))


class StackedModel:
    def __init__(self, base_names, base_models, meta_model, classes, mode, config: StackingConfig | None = None):
        self.base_names = tuple(base_names)
        self.base_models = list(base_models)
        self.meta_model = meta_model
        self.classes = np.asarray(classes, dtype=int)
        self.mode = mode
        self.config = config
        self.layout = meta_layout(self.base_names, self.classes)
        if meta_model.n_features != len(self.layout):
            raise ValueError("meta model input width does not match the layout")

    @property
    def n_features(self) -> int:
        return self.base_models[0].n_features

    def meta_features(self, rows) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.n_features:
            raise ValueError(f"expected rows with {self.n_features} features, got shape {rows.shape}")
        return np.hstack([base_outputs(m, rows, self.classes, self.mode) for m in self.base_models])

    def predict_scores(self, rows) -> np.ndarray:
        out = np.zeros((np.asarray(rows).shape[0], len(self.classes)))
        cols = np.searchsorted(self.classes, self.meta_model.classes)
        out[:, cols] = self.meta_model.predict_scores(self.meta_features(rows))
        return out

    def predict(self, rows) -> np.ndarray:
        return self.meta_model.predict(self.meta_features(rows))

    def to_dict(self) -> dict:
        return {
            "schema_version": STACKED_SCHEMA_VERSION,
            "kind": "stacked",
            "mode": self.mode,
            "classes": self.classes.tolist(),
            "layout": list(self.layout),
            "base": [{"name": n, "model": model_to_dict(m)} for n, m in zip(self.base_names, self.base_models)],
            "meta": model_to_dict(self.meta_model),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> StackedModel:
        if doc.get("schema_version") != STACKED_SCHEMA_VERSION or doc.get("kind") != "stacked":
            raise ValueError("not a version-1 stacked model document")
        model = cls([b["name"] for b in doc["base"]], [model_from_dict(b["model"]) for b in doc["base"]],
                    model_from_dict(doc["meta"]), doc["classes"], doc["mode"])
        if list(model.layout) != doc["layout"]:
            raise ValueError("layout table does not match base models and classes")
        return model


def train_stacking(fm: FeatureMatrix, cfg: StackingConfig = StackingConfig(), n_jobs: int = 1) -> StackedModel:
    classes = np.unique(fm.labels)
    if classes.size < 2:
        raise StackingError("stacking needs at least two classes")
    meta = build_meta_features(cfg.base_specs, fm, cfg, classes, n_jobs)
    meta_model = train_classifier(cfg.meta_spec, meta.matrix.rows, meta.matrix.labels,
                                  seed=sub_seed(cfg.seed, "meta"))
    if meta_model.n_features != meta.matrix.d:
        raise StackingError("meta model width mismatch")

    def refit(b):
        name, params = cfg.base_specs[b]
        return train_classifier(params, fm.rows, fm.labels, seed=sub_seed(cfg.seed, f"full/{b}"))

    base_models = ordered_map(refit, range(len(cfg.base_specs)), n_jobs)
    return StackedModel([n for n, _ in cfg.base_specs], base_models, meta_model, classes,
                        cfg.meta_feature_mode, cfg)


def predict_stacked(model: StackedModel, rows) -> np.ndarray:
    return model.predict(rows)
