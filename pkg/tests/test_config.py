import json

import pytest

from markerstack.classifiers import (
    ForestParams,
    KnnParams,
    LogisticParams,
    NaiveBayesParams,
    SvmParams,
    TreeParams,
)
from markerstack.config import ConfigError, build, default_document, load_config, merge
from markerstack.dataset import (
    REFERENCE_CLASS_COUNTS,
    REFERENCE_CLASS_MEANS,
    REFERENCE_LENGTH_COUNTS,
)
from markerstack.seeding import sub_seed


def write(tmp_path, doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path


def test_default_models():
    cfg = load_config()
    assert cfg.models == {
        "LR": LogisticParams(),
        "SVM": SvmParams(),
        "NB": NaiveBayesParams(),
        "KNN": KnnParams(),
        "DT": TreeParams(),
        "RF": ForestParams(),
    }
    assert [n for n, _ in cfg.stacking.base_specs] == ["LR", "SVM", "NB", "KNN", "DT", "RF"]
    assert cfg.stacking.meta_spec == LogisticParams()


def test_default_generator_matches_reference_tables():
    gen = load_config().generator
    assert gen.class_counts == REFERENCE_CLASS_COUNTS
    assert {c: tuple(v) for c, v in gen.class_means.items()} == REFERENCE_CLASS_MEANS
    for group in ("control", "disease"):
        counts = REFERENCE_LENGTH_COUNTS[group]
        total = sum(counts)
        assert gen.length_probs[group] == pytest.approx([c / total for c in counts], abs=1e-15)


def test_seeds_derive_from_global_seed():
    cfg = load_config(overrides={"seed": 5})
    assert cfg.seed == 5
    assert cfg.stacking.seed == sub_seed(5, "stacking")
    assert cfg.cv.seed == sub_seed(5, "cv")
    assert cfg.with_seed(6).cv.seed == sub_seed(6, "cv")


def test_user_file_overrides_defaults(tmp_path):
    path = write(tmp_path, {"models": {"KNN": {"n_neighbors": 3}}, "cv": {"repeats": 2}})
    cfg = load_config(path)
    assert cfg.models["KNN"] == KnnParams(n_neighbors=3)
    assert cfg.cv.repeats == 2
    assert cfg.models["LR"] == LogisticParams()


def test_extra_model_and_meta_override(tmp_path):
    path = write(tmp_path, {
        "models": {"KNN3": {"kind": "knn", "n_neighbors": 3}},
        "ensemble": {"layer1": ["LR", "KNN3"], "meta_overrides": {"max_iter": 500}},
    })
    cfg = load_config(path)
    assert [n for n, _ in cfg.stacking.base_specs] == ["LR", "KNN3"]
    assert cfg.stacking.meta_spec == LogisticParams(max_iter=500)
    assert cfg.meta_overrides == {"max_iter": 500}


@pytest.mark.parametrize("doc, path", [
    ({"colour": 1}, "colour"),
    ({"cv": {"folds": 3}}, "cv.folds"),
    ({"models": {"SVM": {"c": 2}}}, "models.SVM.c"),
    ({"generator": {"sigma": "wide"}}, "generator.sigma"),
    ({"ensemble": {"layer1": ["LR", "XGB"]}}, "ensemble.layer1[1]"),
    ({"ensemble": {"layer2": "SVM"}}, "ensemble.layer2"),
    ({"cv": {"n_folds": 1}}, "cv"),
    ({"generator": {"class_counts": {"DiseaseZ": 4}}}, "generator.class_counts.DiseaseZ"),
    ({"sweep": {"lengths": [0]}}, "sweep.lengths"),
    ({"flatten": {"kind": "median"}}, "flatten"),
    ({"n_jobs": 0}, "n_jobs"),
])
def test_invalid_documents_name_the_path(tmp_path, doc, path):
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, doc))
    assert info.value.path == path
    assert str(info.value).startswith(path)


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_merge_rules():
    base = {"a": 1, "b": {"c": [1, 2]}, "flag": True}
    assert merge(base, {"b": {"c": [3]}}) == {"a": 1, "b": {"c": [3]}, "flag": True}
    with pytest.raises(ConfigError):
        merge(base, {"flag": 1})
    with pytest.raises(ConfigError):
        merge(base, {"a": "x"})


def test_schema_version_checked():
    doc = default_document()
    doc["schema_version"] = 2
    with pytest.raises(ConfigError):
        build(doc)
