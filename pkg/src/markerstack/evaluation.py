"""Grouped cross-validation, the model benchmark report and the
accuracy-versus-series-length sweep."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from markerstack.classifiers import Hyperparams, params_to_dict, train_classifier
from markerstack.dataset import (
    CONTROL,
    Dataset,
    FeatureMatrix,
    FlattenPolicy,
    assign_group_folds,
    flatten,
)
from markerstack.ensemble import StackingConfig, train_stacking
from markerstack.parallel import ordered_map
from markerstack.seeding import sub_seed
from markerstack.stats import ScreeningConfig, screen_markers

REPORT_SCHEMA_VERSION = 1

ModelSpec = Union[Hyperparams, StackingConfig]


class EvaluationError(RuntimeError):
    pass


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    if y_true.size == 0:
        raise ValueError("accuracy of an empty prediction is undefined")
    return float(np.mean(y_true == y_pred))


@dataclass(frozen=True)
class CvPlan:
    n_folds: int = 5
    repeats: int = 1
    seed: int = 0
    group_aware: bool = True

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError("n_folds must be >= 2")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


def fold_plan(fm: FeatureMatrix, plan: CvPlan) -> list[np.ndarray]:
    """Test-fold index per row for every repeat.

    A repeat whose folds leave some training part with a single class is
    re-drawn once before giving up.
    """
    units = fm.groups if plan.group_aware else np.arange(fm.n).astype(str)
    n_units = np.unique(units).size
    if n_units < plan.n_folds:
        raise EvaluationError(f"{n_units} patients are too few for {plan.n_folds} folds")
    out = []
    for r in range(plan.repeats):
        for attempt in range(2):
            name = f"cv/{r}" if attempt == 0 else f"cv/{r}/redraw"
            folds = assign_group_folds(units, plan.n_folds, sub_seed(plan.seed, name))
            if all(np.unique(fm.labels[folds != f]).size >= 2 for f in range(plan.n_folds)):
                break
        else:
            raise EvaluationError(f"repeat {r}: a training fold holds a single class after one re-draw")
        out.append(folds)
    return out


def patient_verdicts(groups: np.ndarray, labels: np.ndarray, predictions: np.ndarray):
    """Majority vote of row predictions per patient (ties go to the lower class).

    Returns ``(true_labels, verdicts)`` in sorted patient order.
    """
    truth, verdict = [], []
    for g in np.unique(groups):
        mask = groups == g
        values, counts = np.unique(predictions[mask], return_counts=True)
        verdict.append(values[np.argmax(counts)])
        truth.append(labels[mask][0])
    return np.array(truth), np.array(verdict)


def fit_spec(spec: ModelSpec, train: FeatureMatrix, seed: int):
    if isinstance(spec, StackingConfig):
        return train_stacking(train, dataclasses.replace(spec, seed=seed))
    return train_classifier(spec, train.rows, train.labels, seed=seed)


def spec_to_dict(spec: ModelSpec) -> dict:
    if isinstance(spec, StackingConfig):
        return {"kind": "stacking", **spec.to_dict()}
    return params_to_dict(spec)


@dataclass(frozen=True)
class CvResult:
    accuracies: tuple[float, ...]  # repeat-major, fold-minor
    folds: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def mean(self) -> float:
        return math.fsum(self.accuracies) / len(self.accuracies)

    @property
    def std(self) -> float:
        if len(self.accuracies) < 2:
            return 0.0
        return float(np.std(self.accuracies, ddof=1))


def _run_cells(fm: FeatureMatrix, named_specs, folds: list[np.ndarray], plan: CvPlan, n_jobs: int):
    cells = [(m, r, f) for m in range(len(named_specs)) for r in range(len(folds)) for f in range(plan.n_folds)]

    def run(cell):
        m, r, f = cell
        name, spec = named_specs[m]
        test = folds[r] == f
        model = fit_spec(spec, fm.take(np.flatnonzero(~test)), sub_seed(plan.seed, f"{name}/{r}/{f}"))
        pred = model.predict(fm.rows[test])
        if plan.group_aware:
            truth, pred = patient_verdicts(fm.groups[test], fm.labels[test], pred)
        else:
            truth = fm.labels[test]
        return accuracy(truth, pred)

    accs = ordered_map(run, cells, n_jobs)
    per_model = len(folds) * plan.n_folds
    return [tuple(accs[m * per_model:(m + 1) * per_model]) for m in range(len(named_specs))]


def cross_validate_matrix(fm: FeatureMatrix, spec: ModelSpec, plan: CvPlan = CvPlan(),
                          name: str = "model", n_jobs: int = 1) -> CvResult:
    folds = fold_plan(fm, plan)
    (accs,) = _run_cells(fm, [(name, spec)], folds, plan, n_jobs)
    return CvResult(accs, tuple(folds))


def cross_validate(ds: Dataset, policy: FlattenPolicy, spec: ModelSpec, plan: CvPlan = CvPlan(),
                   name: str = "model", n_jobs: int = 1) -> CvResult:
    """Per-fold patient-level accuracies of ``spec`` under ``plan``."""
    return cross_validate_matrix(flatten(ds, policy), spec, plan, name, n_jobs)


# ---------------------------------------------------------------------- sweep


@dataclass(frozen=True)
class SweepRow:
    length: int
    n_patients: int
    accuracy: float | None


def accuracy_by_series_length(ds: Dataset, spec: ModelSpec, plan: CvPlan, lengths: Sequence[int],
                              name: str = "model", n_jobs: int = 1) -> tuple[SweepRow, ...]:
    """Cross-validated accuracy after truncating every series to its first
    ``min(L, length)`` observations and averaging them per patient.

    A length whose truncated cohort lacks two patients in either class group
    (or cannot fill the folds) gets ``accuracy=None``.
    """
    rows = []
    for L in lengths:
        if L < 1:
            raise ValueError("series lengths must be >= 1")
        truncated = ds.truncated(L)
        n_patients = len(truncated.series)
        n_control = sum(1 for s in truncated.series if s.diagnosis_class == CONTROL)
        acc = None
        if min(n_control, n_patients - n_control) >= 2:
            try:
                acc = cross_validate(truncated, FlattenPolicy("series_mean"), spec, plan, name, n_jobs).mean
            except EvaluationError:
                acc = None
        rows.append(SweepRow(int(L), n_patients, acc))
    return tuple(rows)


# ---------------------------------------------------------------------- report


@dataclass(frozen=True)
class ModelResult:
    name: str
    fold_accuracies: tuple[float, ...]
    mean_accuracy: float
    std: float


@dataclass(frozen=True)
class EvaluationReport:
    models: tuple[ModelResult, ...]
    ranking: tuple[str, ...]
    config: Mapping
    series_sweep: tuple[SweepRow, ...] | None = None

    def row(self, name: str) -> ModelResult:
        for m in self.models:
            if m.name == name:
                return m
        raise KeyError(name)

    def to_dict(self) -> dict:
        doc = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "metric": "accuracy",
            "models": [
                {"name": m.name, "fold_accuracies": list(m.fold_accuracies),
                 "mean_accuracy": m.mean_accuracy, "std": m.std}
                for m in self.models
            ],
            "ranking": list(self.ranking),
            "config": self.config,
        }
        if self.series_sweep is not None:
            doc["series_sweep"] = [dataclasses.asdict(r) for r in self.series_sweep]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        return render_table(self.models, self.series_sweep)


def render_table(models: Sequence[ModelResult], sweep: Sequence[SweepRow] | None = None) -> str:
    width = max([len("Model")] + [len(m.name) for m in models])
    lines = [f"{'Model':<{width}}  {'Accuracy':>8}  {'Std':>6}  {'Folds':>5}"]
    for m in models:
        lines.append(f"{m.name:<{width}}  {m.mean_accuracy:>8.3f}  {m.std:>6.3f}  {len(m.fold_accuracies):>5d}")
    if sweep is not None:
        lines.append("")
        lines.append(f"{'L':>3}  {'Patients':>8}  {'Accuracy':>8}")
        for r in sweep:
            acc = "-" if r.accuracy is None else f"{r.accuracy:.3f}"
            lines.append(f"{r.length:>3d}  {r.n_patients:>8d}  {acc:>8}")
    return "\n".join(lines) + "\n"


def run_benchmark(
    ds: Dataset,
    models: Sequence[tuple[str, ModelSpec]],
    plan: CvPlan = CvPlan(),
    policy: FlattenPolicy = FlattenPolicy(),
    screening: ScreeningConfig | None = None,
    screening_policy: FlattenPolicy = FlattenPolicy("series_mean"),
    sweep_lengths: Sequence[int] | None = None,
    sweep_model: str | None = None,
    extra_config: Mapping | None = None,
    n_jobs: int = 1,
) -> EvaluationReport:
    """Evaluate every named model under one shared fold plan.

    With ``screening`` set, markers are screened once on the whole cohort
    and every model sees only the selected subset.
    """
    if not models:
        raise ValueError("at least one model is required")
    names = [n for n, _ in models]
    if len(set(names)) != len(names):
        raise ValueError("model names must be unique")

    config: dict = {
        "plan": dataclasses.asdict(plan),
        "flatten": dataclasses.asdict(policy),
        "models": {n: spec_to_dict(s) for n, s in models},
    }
    data = ds
    if screening is not None:
        result = screen_markers(ds, screening_policy, screening)
        data = ds.select_markers(result.selected)
        config["screening"] = {**dataclasses.asdict(screening), "tests": list(screening.tests),
                               "flatten": dataclasses.asdict(screening_policy)}
    config["markers"] = list(data.marker_names)
    if extra_config:
        config.update(extra_config)

    fm = flatten(data, policy)
    folds = fold_plan(fm, plan)
    accs = _run_cells(fm, list(models), folds, plan, n_jobs)
    rows = []
    for name, a in zip(names, accs):
        res = CvResult(a, tuple(folds))
        rows.append(ModelResult(name, a, res.mean, res.std))
    order = sorted(range(len(rows)), key=lambda i: (-rows[i].mean_accuracy, i))

    sweep = None
    if sweep_lengths:
        key = sweep_model or names[0]
        spec = dict(models)[key]
        sweep = accuracy_by_series_length(data, spec, plan, sweep_lengths, key, n_jobs)
        config["series_sweep"] = {"model": key, "lengths": [int(L) for L in sweep_lengths]}
    return EvaluationReport(tuple(rows), tuple(rows[i].name for i in order), config, sweep)
