"""Serial biomarker observations: data model, CSV I/O, summaries, flattening
and a synthetic cohort generator calibrated to the reference cohort tables.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from markerstack.seeding import rng_for

CONTROL = 0
DISEASE_CLASSES = (1, 2, 3, 4)

DEFAULT_LABEL_MAP: dict[str, int] = {
    "D0": 0,
    "DiseaseA": 1,
    "DiseaseB": 2,
    "DiseaseC": 3,
    "DiseaseD": 4,
}

REQUIRED_COLUMNS = ("patient_id", "diagnosis", "time_to_diagnosis", "age")

# Reference cohort: series-length counts for L = 1..10 per class group.
REFERENCE_LENGTH_COUNTS = {
    "control": (0, 2, 6, 9, 4, 12, 10, 9, 18, 0),
    "disease": (14, 7, 24, 9, 10, 6, 1, 0, 0, 0),
}
REFERENCE_MARKERS = ("BiomarkerA", "BiomarkerB", "BiomarkerC")
REFERENCE_CLASS_MEANS = {
    1: (5.17, 4.17, 8.7),
    2: (0.83, 0.91, 0.88),
    3: (0.75, 0.89, 1.03),
    4: (0.81, 0.86, 1.12),
    0: (0.89, 0.95, 0.96),
}
# Disease patients (71) spread over the four disease classes.
REFERENCE_CLASS_COUNTS = {0: 70, 1: 18, 2: 18, 3: 18, 4: 17}


class DatasetError(ValueError):
    """Malformed input data; ``row`` is the 1-based CSV line when known."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


def group_of(diagnosis_class: int) -> str:
    return "control" if diagnosis_class == CONTROL else "disease"


@dataclass(frozen=True)
class Observation:
    patient_id: str
    diagnosis_class: int
    time_to_diagnosis: float | None
    age: float
    markers: Mapping[str, float]
    sequence_index: int

    def __post_init__(self):
        if not self.markers:
            raise DatasetError(f"observation of {self.patient_id!r} has no markers")
        for name, value in self.markers.items():
            if not math.isfinite(value):
                raise DatasetError(f"marker {name!r} of {self.patient_id!r} is not finite")
        if not (math.isfinite(self.age) and self.age > 0):
            raise DatasetError(f"age of {self.patient_id!r} must be positive")
        if self.time_to_diagnosis is not None and not self.time_to_diagnosis >= 0:
            raise DatasetError(f"time_to_diagnosis of {self.patient_id!r} must be >= 0")


@dataclass(frozen=True)
class PatientSeries:
    patient_id: str
    diagnosis_class: int
    observations: tuple[Observation, ...]

    def __post_init__(self):
        if not self.observations:
            raise DatasetError(f"series {self.patient_id!r} is empty")
        for i, obs in enumerate(self.observations):
            if obs.patient_id != self.patient_id or obs.diagnosis_class != self.diagnosis_class:
                raise DatasetError(f"series {self.patient_id!r} mixes patients or classes")
            if obs.sequence_index != i:
                raise DatasetError(f"series {self.patient_id!r} has non-contiguous sequence_index")

    @property
    def length(self) -> int:
        return len(self.observations)

    def truncated(self, max_length: int) -> PatientSeries:
        return PatientSeries(self.patient_id, self.diagnosis_class, self.observations[:max_length])


@dataclass(frozen=True)
class Dataset:
    series: tuple[PatientSeries, ...]
    marker_names: tuple[str, ...]

    def __post_init__(self):
        seen = set()
        names = set(self.marker_names)
        for s in self.series:
            if s.patient_id in seen:
                raise DatasetError(f"duplicate patient_id {s.patient_id!r}")
            seen.add(s.patient_id)
            for obs in s.observations:
                if set(obs.markers) != names:
                    raise DatasetError(f"observation of {s.patient_id!r} does not carry exactly the dataset markers")

    @property
    def n_observations(self) -> int:
        return sum(s.length for s in self.series)

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(sorted({s.diagnosis_class for s in self.series}))

    def observations(self) -> Iterable[Observation]:
        for s in self.series:
            yield from s.observations

    def select_markers(self, names: Sequence[str]) -> Dataset:
        """Restrict every observation to ``names`` (kept in the given order)."""
        missing = [n for n in names if n not in self.marker_names]
        if missing:
            raise DatasetError(f"unknown markers {missing}")
        series = []
        for s in self.series:
            obs = tuple(
                Observation(o.patient_id, o.diagnosis_class, o.time_to_diagnosis, o.age,
                            {n: o.markers[n] for n in names}, o.sequence_index)
                for o in s.observations
            )
            series.append(PatientSeries(s.patient_id, s.diagnosis_class, obs))
        return Dataset(tuple(series), tuple(names))

    def truncated(self, max_length: int) -> Dataset:
        return Dataset(tuple(s.truncated(max_length) for s in self.series), self.marker_names)


# --------------------------------------------------------------------------- CSV


def _parse_number(cell: str, what: str, row: int) -> float:
    text = cell.strip().replace(",", ".")
    try:
        value = float(text)
    except ValueError:
        raise DatasetError(f"non-numeric {what} {cell!r}", row) from None
    if not math.isfinite(value):
        raise DatasetError(f"non-finite {what} {cell!r}", row)
    return value


def parse_csv(text: str, label_map: Mapping[str, int] | None = None) -> Dataset:
    """Parse a cohort CSV into a :class:`Dataset`.

    Rows are grouped by ``patient_id`` in order of first appearance, and a
    patient's observations keep file order. Decimal commas (``"5,17"``) are
    accepted in numeric cells.
    """
    label_map = DEFAULT_LABEL_MAP if label_map is None else label_map
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise DatasetError("missing header row", 1)
    header = [h.strip() for h in header]
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise DatasetError(f"missing required column {col!r}", 1)
    pos = {col: header.index(col) for col in REQUIRED_COLUMNS}
    marker_cols = [(i, h) for i, h in enumerate(header) if h not in REQUIRED_COLUMNS]
    if not marker_cols:
        raise DatasetError("no marker columns", 1)
    marker_names = tuple(h for _, h in marker_cols)
    if len(set(marker_names)) != len(marker_names):
        raise DatasetError("duplicate marker column", 1)

    rows_by_patient: dict[str, list[tuple]] = {}
    class_of: dict[str, int] = {}
    for row_no, cells in enumerate(reader, start=2):
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) != len(header):
            raise DatasetError(f"expected {len(header)} cells, got {len(cells)}", row_no)
        pid = cells[pos["patient_id"]].strip()
        if not pid:
            raise DatasetError("empty patient_id", row_no)
        label = cells[pos["diagnosis"]].strip()
        if label not in label_map:
            raise DatasetError(f"diagnosis label {label!r} not in label map", row_no)
        cls = int(label_map[label])
        if class_of.setdefault(pid, cls) != cls:
            raise DatasetError(f"patient {pid!r} has inconsistent diagnosis", row_no)
        ttd_cell = cells[pos["time_to_diagnosis"]].strip()
        ttd = None if ttd_cell == "" else _parse_number(ttd_cell, "time_to_diagnosis", row_no)
        if ttd is not None and ttd < 0:
            raise DatasetError("negative time_to_diagnosis", row_no)
        age = _parse_number(cells[pos["age"]], "age", row_no)
        if age <= 0:
            raise DatasetError("age must be positive", row_no)
        markers = {name: _parse_number(cells[i], f"marker {name!r}", row_no) for i, name in marker_cols}
        rows_by_patient.setdefault(pid, []).append((ttd, age, markers))

    series = []
    for pid, rows in rows_by_patient.items():
        obs = tuple(
            Observation(pid, class_of[pid], ttd, age, markers, i)
            for i, (ttd, age, markers) in enumerate(rows)
        )
        series.append(PatientSeries(pid, class_of[pid], obs))
    return Dataset(tuple(series), marker_names)


def read_csv(path, label_map: Mapping[str, int] | None = None) -> Dataset:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read(), label_map)


def _render(value: float) -> str:
    # repr is the shortest string that round-trips to the same double
    return repr(float(value))


def write_csv(ds: Dataset, label_map: Mapping[str, int] | None = None) -> str:
    label_map = DEFAULT_LABEL_MAP if label_map is None else label_map
    names = {v: k for k, v in label_map.items()}
    if len(names) != len(label_map):
        raise DatasetError("label map is not invertible")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REQUIRED_COLUMNS + ds.marker_names)
    for obs in ds.observations():
        if obs.diagnosis_class not in names:
            raise DatasetError(f"class {obs.diagnosis_class} has no label")
        ttd = "" if obs.time_to_diagnosis is None else _render(obs.time_to_diagnosis)
        writer.writerow(
            [obs.patient_id, names[obs.diagnosis_class], ttd, _render(obs.age)]
            + [_render(obs.markers[m]) for m in ds.marker_names]
        )
    return out.getvalue()


# ---------------------------------------------------------------------- summaries


@dataclass(frozen=True)
class LengthHistogram:
    """Series counts per class group (control / disease) and length L."""

    lengths: tuple[int, ...]
    counts: Mapping[str, tuple[int, ...]]

    def count(self, group: str, length: int) -> int:
        return self.counts[group][self.lengths.index(length)] if length in self.lengths else 0

    def total(self, group: str) -> int:
        return sum(self.counts[group])

    def observations(self) -> int:
        return sum(L * c for g in self.counts for L, c in zip(self.lengths, self.counts[g]))


def series_length_histogram(ds: Dataset, max_length: int = 10) -> LengthHistogram:
    top = max([max_length] + [s.length for s in ds.series])
    lengths = tuple(range(1, top + 1))
    counts = {"control": [0] * top, "disease": [0] * top}
    for s in ds.series:
        counts[group_of(s.diagnosis_class)][s.length - 1] += 1
    return LengthHistogram(lengths, {g: tuple(c) for g, c in counts.items()})


def class_marker_means(ds: Dataset) -> dict[int, dict[str, float]]:
    """Mean marker level per class over all of its observations."""
    buckets: dict[int, dict[str, list[float]]] = {}
    for obs in ds.observations():
        per_marker = buckets.setdefault(obs.diagnosis_class, {m: [] for m in ds.marker_names})
        for m in ds.marker_names:
            per_marker[m].append(obs.markers[m])
    return {
        cls: {m: math.fsum(v) / len(v) for m, v in buckets[cls].items()}
        for cls in sorted(buckets)
    }


# ---------------------------------------------------------------------- flattening

FlattenKind = Literal["per_observation", "series_mean", "series_last", "series_trend"]
FLATTEN_KINDS = ("per_observation", "series_mean", "series_last", "series_trend")


@dataclass(frozen=True)
class FlattenPolicy:
    kind: FlattenKind = "per_observation"
    append_length: bool = False
    append_age: bool = False

    def __post_init__(self):
        if self.kind not in FLATTEN_KINDS:
            raise ValueError(f"unknown flatten kind {self.kind!r}")

    def marker_column(self, marker: str) -> str:
        """Feature name carrying the level of ``marker`` under this policy."""
        if self.kind == "per_observation":
            return marker
        if self.kind == "series_last":
            return f"last({marker})"
        return f"mean({marker})"


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    rows: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise ValueError("rows must be a 2-D matrix")
        labels = np.asarray(self.labels, dtype=int)
        groups = np.asarray(self.groups, dtype=str)
        if not (len(labels) == len(groups) == rows.shape[0]):
            raise ValueError("rows, labels and groups disagree in length")
        if rows.shape[1] != len(self.feature_names):
            raise ValueError("feature_names does not match column count")
        if not np.all(np.isfinite(rows)):
            raise ValueError("feature matrix contains non-finite entries")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def take(self, index) -> FeatureMatrix:
        index = np.asarray(index, dtype=int)
        return FeatureMatrix(self.rows[index], self.labels[index], self.groups[index], self.feature_names)

    def with_rows(self, rows: np.ndarray, feature_names: Sequence[str]) -> FeatureMatrix:
        return FeatureMatrix(rows, self.labels, self.groups, tuple(feature_names))


def _slope(values: np.ndarray) -> np.ndarray:
    """Least-squares slope of each column against 0..L-1 (0 when L == 1)."""
    L = values.shape[0]
    if L == 1:
        return np.zeros(values.shape[1])
    t = np.arange(L, dtype=float)
    t -= t.mean()
    return t @ (values - values.mean(axis=0)) / (t @ t)


def flatten(ds: Dataset, policy: FlattenPolicy = FlattenPolicy()) -> FeatureMatrix:
    if not ds.series:
        raise DatasetError("cannot flatten an empty dataset")
    markers = ds.marker_names
    rows, labels, groups = [], [], []
    for s in ds.series:
        levels = np.array([[o.markers[m] for m in markers] for o in s.observations])
        if policy.kind == "per_observation":
            for o, lv in zip(s.observations, levels):
                extra = ([float(s.length)] if policy.append_length else []) + ([o.age] if policy.append_age else [])
                rows.append(np.concatenate([lv, extra]))
                labels.append(s.diagnosis_class)
                groups.append(s.patient_id)
            continue
        if policy.kind == "series_mean":
            feats = levels.mean(axis=0)
        elif policy.kind == "series_last":
            feats = levels[-1]
        else:
            feats = np.concatenate([levels.mean(axis=0), _slope(levels)])
        extra = ([float(s.length)] if policy.append_length else []) + (
            [s.observations[-1].age] if policy.append_age else [])
        rows.append(np.concatenate([feats, extra]))
        labels.append(s.diagnosis_class)
        groups.append(s.patient_id)

    if policy.kind == "per_observation":
        names = list(markers)
    elif policy.kind == "series_mean":
        names = [f"mean({m})" for m in markers]
    elif policy.kind == "series_last":
        names = [f"last({m})" for m in markers]
    else:
        names = [f"mean({m})" for m in markers] + [f"slope({m})" for m in markers]
    if policy.append_length:
        names.append("length")
    if policy.append_age:
        names.append("age")
    return FeatureMatrix(np.vstack(rows), np.array(labels), np.array(groups), tuple(names))


def split(
    fm: FeatureMatrix, test_fraction: float = 0.5, seed: int = 0, group_aware: bool = True
) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Random train/test partition, optionally keeping patients whole.

    Groups are visited in a seeded random order and moved to the test side
    until the test row count is as close as possible to the target.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    if fm.n == 0:
        raise ValueError("cannot split an empty feature matrix")
    keys = fm.groups if group_aware else np.arange(fm.n).astype(str)
    uniq, inverse, sizes = np.unique(keys, return_inverse=True, return_counts=True)
    order = rng_for(seed).permutation(len(uniq))
    target = test_fraction * fm.n
    chosen: list[int] = []
    taken = 0
    for g in order:
        if taken >= target:
            break
        if taken + sizes[g] > target and (taken + sizes[g] - target) > (target - taken) and chosen:
            break
        chosen.append(g)
        taken += sizes[g]
    if len(chosen) == len(uniq) and len(uniq) > 1:
        chosen.pop()
    in_test = np.isin(inverse, chosen)
    return fm.take(np.flatnonzero(~in_test)), fm.take(np.flatnonzero(in_test))


# ---------------------------------------------------------------------- generator


@dataclass(frozen=True)
class GeneratorSpec:
    """Synthetic cohort recipe.

    ``length_probs`` maps a class group (``control``/``disease``) to the
    probabilities of L = 1..len(probs). Lengths are allocated to the group's
    patients by largest-remainder quotas, so integral expected counts are
    reproduced exactly for every seed.
    """

    class_counts: Mapping[int, int] = field(default_factory=lambda: dict(REFERENCE_CLASS_COUNTS))
    length_probs: Mapping[str, Sequence[float]] = field(
        default_factory=lambda: {
            g: tuple(c / sum(counts) for c in counts) for g, counts in REFERENCE_LENGTH_COUNTS.items()
        }
    )
    class_means: Mapping[int, Sequence[float]] = field(default_factory=lambda: dict(REFERENCE_CLASS_MEANS))
    marker_names: Sequence[str] = REFERENCE_MARKERS
    sigma: float = 0.2
    visit_interval_days: float = 90.0
    age_range: tuple[float, float] = (40.0, 80.0)

    def __post_init__(self):
        if not self.marker_names:
            raise ValueError("at least one marker is required")
        for cls, n in self.class_counts.items():
            if n < 0:
                raise ValueError(f"class {cls}: negative patient count")
            if n and cls not in self.class_means:
                raise ValueError(f"class {cls}: no marker means")
        for cls, means in self.class_means.items():
            if len(means) != len(self.marker_names):
                raise ValueError(f"class {cls}: expected {len(self.marker_names)} marker means")
            if any(not (m > 0 and math.isfinite(m)) for m in means):
                raise ValueError(f"class {cls}: marker means must be positive")
        for group, probs in self.length_probs.items():
            if group not in ("control", "disease"):
                raise ValueError(f"unknown class group {group!r}")
            if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-9:
                raise ValueError(f"length probabilities for {group!r} must be >= 0 and sum to 1")
        for group in {group_of(c) for c, n in self.class_counts.items() if n}:
            if group not in self.length_probs:
                raise ValueError(f"no length distribution for group {group!r}")
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")
        if self.visit_interval_days < 0:
            raise ValueError("visit_interval_days must be >= 0")
        lo, hi = self.age_range
        if not 0 < lo <= hi:
            raise ValueError("age_range must satisfy 0 < low <= high")


def quota_allocation(probs: Sequence[float], n: int) -> list[int]:
    """Largest-remainder rounding of ``n * probs`` to integers summing to n."""
    raw = [p * n for p in probs]
    # snap values within float noise of an integer so exact quotas stay exact
    raw = [round(r) if abs(r - round(r)) < 1e-9 else r for r in raw]
    base = [math.floor(r) for r in raw]
    short = n - sum(base)
    by_remainder = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in by_remainder[:short]:
        base[i] += 1
    return base


def generate_synthetic(spec: GeneratorSpec = GeneratorSpec(), seed: int = 0) -> Dataset:
    """Draw a cohort from ``spec``.

    Marker levels are lognormal around the class mean,
    ``mean * exp(sigma * z - sigma**2 / 2)``, so they stay positive and the
    class mean is preserved in expectation; ``sigma = 0`` reproduces the
    means exactly.
    """
    rng = rng_for(seed, "generator")
    classes = sorted(c for c, n in spec.class_counts.items() if n > 0)
    lengths_by_class: dict[int, list[int]] = {}
    for group in ("control", "disease"):
        members = [c for c in classes if group_of(c) == group]
        size = sum(spec.class_counts[c] for c in members)
        if not size:
            continue
        counts = quota_allocation(spec.length_probs[group], size)
        pool = np.repeat(np.arange(1, len(counts) + 1), counts)
        pool = pool[rng.permutation(len(pool))]
        start = 0
        for c in members:
            lengths_by_class[c] = [int(x) for x in pool[start:start + spec.class_counts[c]]]
            start += spec.class_counts[c]

    sigma = float(spec.sigma)
    lo, hi = spec.age_range
    series = []
    serial = 0
    for c in classes:
        means = np.asarray(spec.class_means[c], dtype=float)
        for L in lengths_by_class[c]:
            serial += 1
            pid = f"P{serial:04d}"
            first_age = round(float(rng.uniform(lo, hi)), 1)
            lead_days = float(rng.integers(30, 366)) if c != CONTROL else None
            z = rng.standard_normal((L, len(means)))
            levels = means * np.exp(sigma * z - 0.5 * sigma * sigma) if sigma > 0 else np.tile(means, (L, 1))
            obs = []
            for i in range(L):
                ttd = None if lead_days is None else lead_days + (L - 1 - i) * spec.visit_interval_days
                age = round(first_age + i * spec.visit_interval_days / 365.25, 2)
                markers = {m: float(v) for m, v in zip(spec.marker_names, levels[i])}
                obs.append(Observation(pid, c, ttd, age, markers, i))
            series.append(PatientSeries(pid, c, tuple(obs)))
    return Dataset(tuple(series), tuple(spec.marker_names))


def assign_group_folds(groups, n_folds: int, seed: int) -> np.ndarray:
    """Fold index per row with every group confined to one fold.

    Groups are shuffled under ``seed`` and dealt into ``n_folds`` folds of
    near-equal group count.
    """
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    uniq, inverse = np.unique(np.asarray(groups, dtype=str), return_inverse=True)
    if uniq.size < n_folds:
        raise ValueError(f"{uniq.size} groups cannot fill {n_folds} folds")
    order = rng_for(seed).permutation(uniq.size)
    fold_of_group = np.empty(uniq.size, dtype=int)
    for f, chunk in enumerate(np.array_split(order, n_folds)):
        fold_of_group[chunk] = f
    return fold_of_group[inverse]


def series_study_spec(sigma: float = 0.5, log_effect: float = 0.25) -> GeneratorSpec:
    """Two-class cohort for accuracy-versus-length studies.

    70 controls at the reference control means and 71 Disease A patients
    whose means are scaled by ``exp(log_effect)``; every series has 8 to 10
    observations so truncation to L <= 8 always averages L noisy readings.
    """
    control = REFERENCE_CLASS_MEANS[CONTROL]
    long_series = (0.0,) * 7 + (1 / 3,) * 3
    return GeneratorSpec(
        class_counts={CONTROL: 70, 1: 71},
        length_probs={"control": long_series, "disease": long_series},
        class_means={CONTROL: control, 1: tuple(m * math.exp(log_effect) for m in control)},
        sigma=sigma,
    )
