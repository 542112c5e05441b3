import json
import logging

import pytest

from reludepth import sweep
from reludepth.errors import (
    InvalidConfigError,
    InvalidInputError,
    MalformedDocumentError,
)


def _doc(**changes):
    doc = {
        "name": "tiny",
        "data": {"generator": "square_feature", "n_train": 60, "n_test": 20,
                 "seed": 5, "params": {"dim": 2, "bound": 1.0}},
        "trials": 2,
        "train": {"iterations": 20, "batch_size": 16, "log_every": 10},
        "configs": [{"hidden": [4]}, {"hidden": [4, 4]}],
    }
    doc.update(changes)
    return doc


def _search(strategy, depths, start, stop, step):
    return {"strategy": strategy, "depths": depths,
            "ranges": [{"depths": depths, "start": start, "stop": stop,
                        "step": step}]}


def test_extract_manifest_defaults():
    doc = _doc()
    del doc["data"]["n_train"], doc["data"]["n_test"]
    m = sweep.extract_manifest(doc)
    assert (m.data.n_train, m.data.n_test) == (3000, 200)
    assert m.seeds == (0, 1)
    assert [c.hidden for c in m.configs] == [(4,), (4, 4)]
    assert m.data.trial_seed(1) == 6


@pytest.mark.parametrize("changes, error", [
    ({"trials": 0}, InvalidConfigError),
    ({"seeds": [1, 2], "trials": 3}, InvalidConfigError),
    ({"train": {"seed": 3}}, InvalidConfigError),
    ({"train": {"momentum": 0.9}}, MalformedDocumentError),
    ({"configs": []}, InvalidConfigError),
    ({"configs": [{"hidden": []}]}, InvalidConfigError),
    ({"data": {"generator": "nope"}}, InvalidConfigError),
    ({"search": _search("spiral", [1], 2, 4, 2)}, InvalidConfigError),
    ({"search": _search("uniform", [3], 4, 2, 1)}, InvalidConfigError),
])
def test_invalid_manifests(changes, error):
    with pytest.raises(error):
        sweep.extract_manifest(_doc(**changes))


def test_missing_name():
    doc = _doc()
    del doc["name"]
    with pytest.raises(MalformedDocumentError):
        sweep.extract_manifest(doc)


def test_search_needs_a_range_for_every_depth():
    search = _search("uniform", [1], 2, 4, 2)
    search["depths"] = [1, 2]
    with pytest.raises(InvalidConfigError):
        sweep.extract_manifest(_doc(search=search))


def test_with_trials_continues_seeds():
    m = sweep.extract_manifest(_doc())
    assert m.with_trials(4).seeds == (0, 1, 2, 3)
    assert m.with_trials(1).seeds == (0,)
    explicit = sweep.extract_manifest(_doc(seeds=[5, 9]))
    with pytest.raises(InvalidConfigError):
        explicit.with_trials(3)


def test_digest_ignores_output_dir():
    m = sweep.extract_manifest(_doc())
    assert m.replace(output_dir="elsewhere").digest() == m.digest()
    assert m.with_trials(3).digest() != m.digest()
    assert len(m.digest()) == 64


def test_count_mlp_params():
    assert sweep.count_mlp_params(10, (60, 60, 60)) == \
        11 * 60 + 61 * 60 + 61 * 60 + 61


def test_coordinate_order():
    assert sweep._coordinate_order(1) == [0]
    assert sweep._coordinate_order(4) == [1, 0, 2, 3]
    assert sweep._coordinate_order(5) == [2, 1, 3, 0, 4]


def test_presets_load():
    names = sweep.preset_names()
    assert "square_feature_depths" in names
    assert "partial_radial_k" in names
    for name in names:
        m = sweep.load_manifest(sweep.resolve_manifest(name))
        assert m.name == name
    with pytest.raises(InvalidInputError):
        sweep.resolve_manifest("no_such_preset")


def test_parameter_distribution_preset_is_balanced():
    m = sweep.load_manifest(sweep.resolve_manifest("parameter_distribution"))
    counts = [sweep.count_mlp_params(10, c.hidden) for c in m.configs]
    assert max(counts) - min(counts) <= 100


def test_load_manifest_rejects_bad_toml(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("name = \n")
    with pytest.raises(MalformedDocumentError):
        sweep.load_manifest(path)


def test_grid_expansion():
    m = sweep.load_manifest(sweep.resolve_manifest("partial_radial_k"))
    points = m.expand()
    assert [label for label, _ in points][:2] == ["k=2", "k=3"]
    assert len(points) == 8
    label, first = points[0]
    assert first.data.params["k"] == 2
    assert not first.data.grid
    with pytest.raises(InvalidConfigError):
        sweep.SweepRunner(m)


def test_sweep_outputs_are_reproducible(tmp_path):
    m = sweep.extract_manifest(_doc())
    first = sweep.run_sweep(m, output_dir=tmp_path / "a")
    sweep.run_sweep(m, output_dir=tmp_path / "b")
    for name in ("manifest.json", "trials.jsonl", "aggregate.csv",
                 "plot.csv"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()

    lines = (tmp_path / "a" / "trials.jsonl").read_text().splitlines()
    assert len(lines) == 4
    for line in lines:
        record = json.loads(line)
        assert record["manifest_hash"] == m.digest()
        assert record["status"] in ("ok", "diverged")
    assert [s.config.hidden for s in first.summaries] == [(4,), (4, 4)]
    assert set(first.best_per_depth()) == {1, 2}
    assert first.summaries[0].n_params == 4 * 3 + 5


def test_coordinate_search_reuses_configs():
    doc = _doc(trials=1, search=_search("coordinate", [2], 2, 4, 2))
    doc["configs"] = []
    result = sweep.run_sweep(sweep.extract_manifest(doc))
    hidden = [s.config.hidden for s in result.summaries]
    assert len(hidden) == 3
    assert len(set(hidden)) == 3
    assert (2, 2) in hidden and (4, 2) in hidden
    assert sum(s.best for s in result.summaries) == 1


def test_uniform_search():
    doc = _doc(trials=1, search=_search("uniform", [1, 2], 2, 6, 2))
    doc["configs"] = []
    result = sweep.run_sweep(sweep.extract_manifest(doc))
    assert [s.config.hidden for s in result.summaries] == [
        (2,), (4,), (6,), (2, 2), (4, 4), (6, 6),
    ]
    assert set(result.best_per_depth()) == {1, 2}


def test_crashed_trials_are_recorded(monkeypatch, caplog):
    def boom(task):
        raise RuntimeError("worker exploded")

    monkeypatch.setattr(sweep, "run_trial", boom)
    m = sweep.extract_manifest(_doc())
    with caplog.at_level(logging.ERROR):
        result = sweep.run_sweep(m)
    assert all(r.status == sweep.STATUS_CRASHED for r in result.records)
    assert all(r.error_id for r in result.records)
    assert result.records[0].error == "worker exploded"
    assert not result.divergence_only
    assert "crashed" in caplog.text


def test_divergence_only(monkeypatch):
    real = sweep.run_trial

    def diverging(task):
        report = real(task)
        report["diverged"] = True
        report["valid"] = True
        return report

    monkeypatch.setattr(sweep, "run_trial", diverging)
    result = sweep.run_sweep(sweep.extract_manifest(_doc(trials=1)))
    assert result.divergence_only
    assert all(s.valid_rate == 0.0 for s in result.summaries)


def test_run_grid_writes_subdirectories(tmp_path):
    doc = _doc(trials=1)
    doc["data"] = {"generator": "partial_radial", "n_train": 40,
                   "n_test": 10, "params": {"dim": 4, "bound": 1.0},
                   "grid": {"k": [2, 3]}}
    doc["configs"] = [{"hidden": [3]}]
    results = sweep.run_grid(sweep.extract_manifest(doc),
                             output_dir=tmp_path)
    assert [label for label, _ in results] == ["k=2", "k=3"]
    assert (tmp_path / "k=2" / "plot.csv").is_file()
    assert (tmp_path / "k=3" / "aggregate.csv").is_file()
