"""Toolkit configuration: shipped defaults, user overrides, validation."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, replace
from importlib import resources
from typing import Any, Mapping

from markerstack.classifiers import Hyperparams, params_from_dict
from markerstack.dataset import FLATTEN_KINDS, FlattenPolicy, GeneratorSpec
from markerstack.ensemble import StackingConfig
from markerstack.evaluation import CvPlan
from markerstack.seeding import sub_seed
from markerstack.stats import ScreeningConfig

CONFIG_SCHEMA_VERSION = 1

# mappings whose keys are user-chosen rather than fixed by the schema
_OPEN_MAPS = {
    "label_map", "models", "ensemble.meta_overrides",
    "generator.class_counts", "generator.class_means", "generator.length_probs",
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def default_document() -> dict:
    text = resources.files("markerstack").joinpath("defaults.json").read_text(encoding="utf-8")
    return json.loads(text)


def merge(base: Any, override: Any, path: str = "") -> Any:
    """Overlay ``override`` on ``base``; keys unknown to ``base`` are errors
    except inside open mappings."""
    if isinstance(base, dict):
        if not isinstance(override, dict):
            raise ConfigError("expected an object", path)
        if path in _OPEN_MAPS and path not in ("models",):
            return copy.deepcopy(override)
        out = copy.deepcopy(base)
        for key, value in override.items():
            sub = f"{path}.{key}" if path else key
            if key not in base:
                if path == "models":
                    out[key] = copy.deepcopy(value)
                    continue
                raise ConfigError("unknown key", sub)
            out[key] = merge(base[key], value, sub)
        return out
    if isinstance(base, list):
        if not isinstance(override, list):
            raise ConfigError("expected a list", path)
        return copy.deepcopy(override)
    if isinstance(base, bool) != isinstance(override, bool):
        raise ConfigError("expected a boolean" if isinstance(base, bool) else "unexpected boolean", path)
    if isinstance(base, (int, float)) and not isinstance(base, bool) and not isinstance(override, (int, float)):
        raise ConfigError("expected a number", path)
    return override


@dataclass(frozen=True)
class ToolkitConfig:
    seed: int
    n_jobs: int
    label_map: Mapping[str, int]
    flatten: FlattenPolicy
    screening: ScreeningConfig
    screening_policy: FlattenPolicy
    models: Mapping[str, Hyperparams]
    stacking: StackingConfig
    meta_overrides: Mapping[str, Any]
    cv: CvPlan
    generator: GeneratorSpec
    sweep_model: str
    sweep_lengths: tuple[int, ...]
    outputs: Mapping[str, str]
    document: Mapping[str, Any]

    def with_seed(self, seed: int) -> ToolkitConfig:
        doc = copy.deepcopy(dict(self.document))
        doc["seed"] = seed
        return build(doc)

    def benchmark_models(self) -> list[tuple[str, Any]]:
        return list(self.models.items()) + [("Ensemble", self.stacking)]


def _class_map(doc: Mapping, label_map: Mapping[str, int], path: str) -> dict[int, Any]:
    out = {}
    for label, value in doc.items():
        if label not in label_map:
            raise ConfigError(f"label {label!r} not in label_map", f"{path}.{label}")
        out[int(label_map[label])] = value
    return out


def build(doc: Mapping) -> ToolkitConfig:
    """Validate a fully merged document into a :class:`ToolkitConfig`."""
    if doc.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {doc.get('schema_version')!r}", "schema_version")
    seed = doc["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("must be an integer", "seed")
    n_jobs = doc["n_jobs"]
    if not isinstance(n_jobs, int) or n_jobs < 1:
        raise ConfigError("must be an integer >= 1", "n_jobs")

    label_map = dict(doc["label_map"])
    if any(not isinstance(v, int) or isinstance(v, bool) for v in label_map.values()):
        raise ConfigError("class codes must be integers", "label_map")
    if len(set(label_map.values())) != len(label_map):
        raise ConfigError("class codes must be unique", "label_map")

    def section(name, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), name) from None

    flatten = section("flatten", lambda: FlattenPolicy(**doc["flatten"]))
    scr = dict(doc["screening"])
    scr_kind = scr.pop("flatten")
    if scr_kind not in FLATTEN_KINDS:
        raise ConfigError(f"unknown flatten kind {scr_kind!r}", "screening.flatten")
    screening = section("screening", lambda: ScreeningConfig(**{**scr, "tests": tuple(scr["tests"])}))

    models = {}
    for name, spec in doc["models"].items():
        if not isinstance(spec, dict) or "kind" not in spec:
            raise ConfigError("model spec needs a 'kind'", f"models.{name}")
        if name == "Ensemble":
            raise ConfigError("'Ensemble' is reserved for the stacked model", f"models.{name}")
        models[name] = section(f"models.{name}", lambda spec=spec: params_from_dict(spec))

    ens = doc["ensemble"]
    for i, name in enumerate(ens["layer1"]):
        if name not in models:
            raise ConfigError(f"unknown model {name!r}", f"ensemble.layer1[{i}]")
    if ens["layer2"] not in models or models[ens["layer2"]].kind != "logistic":
        raise ConfigError("layer2 must name a logistic model", "ensemble.layer2")
    meta = models[ens["layer2"]]
    overrides = dict(ens["meta_overrides"])
    if overrides:
        meta = section("ensemble.meta_overrides", lambda: replace(meta, **overrides))
    stacking = section("ensemble", lambda: StackingConfig(
        base_specs=tuple((n, models[n]) for n in ens["layer1"]),
        meta_spec=meta,
        meta_feature_mode=ens["meta_feature_mode"],
        scheme=ens["scheme"],
        n_folds=ens["n_folds"],
        holdout_fraction=ens["holdout_fraction"],
        seed=sub_seed(seed, "stacking"),
    ))
    cv = section("cv", lambda: CvPlan(seed=sub_seed(seed, "cv"), **doc["cv"]))

    gen = doc["generator"]
    generator = section("generator", lambda: GeneratorSpec(
        class_counts=_class_map(gen["class_counts"], label_map, "generator.class_counts"),
        length_probs={g: tuple(p) for g, p in gen["length_probs"].items()},
        class_means={c: tuple(v) for c, v in _class_map(gen["class_means"], label_map,
                                                         "generator.class_means").items()},
        marker_names=tuple(gen["marker_names"]),
        sigma=float(gen["sigma"]),
        visit_interval_days=float(gen["visit_interval_days"]),
        age_range=tuple(gen["age_range"]),
    ))

    sweep = doc["sweep"]
    if sweep["model"] != "Ensemble" and sweep["model"] not in models:
        raise ConfigError(f"unknown model {sweep['model']!r}", "sweep.model")
    lengths = tuple(sweep["lengths"])
    if any(not isinstance(L, int) or L < 1 for L in lengths):
        raise ConfigError("lengths must be integers >= 1", "sweep.lengths")

    return ToolkitConfig(
        seed=seed, n_jobs=n_jobs, label_map=label_map, flatten=flatten, screening=screening,
        screening_policy=FlattenPolicy(scr_kind), models=models, stacking=stacking,
        meta_overrides=overrides, cv=cv, generator=generator, sweep_model=sweep["model"],
        sweep_lengths=lengths, outputs=dict(doc["outputs"]), document=copy.deepcopy(dict(doc)),
    )


def load_config(path=None, overrides: Mapping | None = None) -> ToolkitConfig:
    """Defaults, then the JSON file at ``path``, then ``overrides``."""
    doc = default_document()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON: {exc}") from None
        doc = merge(doc, user)
    if overrides:
        doc = merge(doc, overrides)
    return build(doc)
