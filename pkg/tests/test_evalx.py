import numpy as np
import pytest
from hypothesis import given, strategies as st

from peerlens.evalx import (ExperimentConfig, ExperimentResult, RunRecord, _holdout_run, aggregate_from_rows,
                            default_anchors, exp_ablation, exp_missing, exp_sampling, exp_temporal,
                            exp_train_size, exp_transfer, exp_unknown, metrics, read_reports, result_digest,
                            seed_list, write_result)
from peerlens.learner import Hyperparams, fit_dataset
from peerlens.pairset import dataset_from_snapshot
from peerlens.synth import synth_snapshot

FAST = ExperimentConfig(mode="gbt", hyperparams=Hyperparams(n_trees=5, max_depth=3), n_jobs=1)


def test_perfect_prediction():
    r = metrics([1, 0, 1, 0], [1, 0, 1, 0])
    assert (r.overall_accuracy, r.balanced_accuracy, r.peering_accuracy, r.non_peering_accuracy,
            r.f1_positive) == (1.0, 1.0, 1.0, 1.0, 1.0)


def test_worked_example():
    r = metrics([1, 1, 1, 0], [1, 1, 0, 0])
    assert r.overall_accuracy == 0.75
    assert r.peering_accuracy == pytest.approx(2 / 3)
    assert r.non_peering_accuracy == 1.0
    assert r.balanced_accuracy == pytest.approx(5 / 6)
    assert r.f1_positive == pytest.approx(0.8)
    assert (r.tp, r.fp, r.tn, r.fn) == (2, 0, 1, 1)


def test_single_class_truth():
    r = metrics([1, 1, 1], [1, 0, 1])
    assert r.non_peering_accuracy is None and r.balanced_accuracy is None
    assert r.overall_accuracy == pytest.approx(2 / 3)


def test_metric_errors():
    with pytest.raises(ValueError):
        metrics([1, 0], [1])
    with pytest.raises(ValueError):
        metrics([], [])
    with pytest.raises(ValueError):
        metrics([2], [1])


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=200))
def test_metric_identities(pairs):
    y = [a for a, _ in pairs]
    p = [b for _, b in pairs]
    r = metrics(y, p)
    tp = sum(1 for a, b in pairs if a == 1 and b == 1)
    tn = sum(1 for a, b in pairs if a == 0 and b == 0)
    fp = sum(1 for a, b in pairs if a == 0 and b == 1)
    fn = sum(1 for a, b in pairs if a == 1 and b == 0)
    assert (r.tp, r.tn, r.fp, r.fn) == (tp, tn, fp, fn) and tp + tn + fp + fn == r.n == len(pairs)
    assert r.overall_accuracy == (tp + tn) / len(pairs)
    assert r.peering_accuracy == (tp / (tp + fn) if tp + fn else None)
    assert r.non_peering_accuracy == (tn / (tn + fp) if tn + fp else None)
    if r.balanced_accuracy is not None:
        assert r.balanced_accuracy == (r.peering_accuracy + r.non_peering_accuracy) / 2
    assert r.f1_positive == (2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else None)
    for v in (r.overall_accuracy, r.balanced_accuracy, r.peering_accuracy, r.non_peering_accuracy, r.f1_positive):
        assert v is None or 0.0 <= v <= 1.0


def test_seed_list():
    assert seed_list(7, 3) == [7, 8, 9]
    with pytest.raises(ValueError):
        seed_list(0, 0)


def test_population_std_and_undefined_skipped():
    runs = [RunRecord("g", s, metrics(y, p)) for s, (y, p) in
            enumerate([([1, 0], [1, 0]), ([1, 0], [0, 0]), ([1, 1], [1, 1])])]
    agg = {a["metric"]: a for a in ExperimentResult("x", {}, runs).aggregate()}
    acc = agg["overall_accuracy"]
    vals = [1.0, 0.5, 1.0]
    m = sum(vals) / 3
    assert acc["mean"] == pytest.approx(m)
    assert acc["std"] == pytest.approx((sum((v - m) ** 2 for v in vals) / 3) ** 0.5)
    bal = agg["balanced_accuracy"]
    assert bal["n_runs"] == 3 and bal["n_defined"] == 2


def test_empty_result_rejected():
    with pytest.raises(ValueError):
        ExperimentResult("x", {}, [])


@pytest.fixture(scope="module")
def ablation(snap200):
    return exp_ablation(snap200, [0, 1], FAST)


def test_ablation_structure(ablation):
    assert ablation.groups() == ["default", "filtered", "optimum"]
    assert all(len(ablation.reports(g)) == 2 for g in ablation.groups())
    assert ablation.config["seeds"] == [0, 1] and ablation.config["variants"] == ["default", "filtered", "optimum"]
    widths = {r.group: r.extra["width"] for r in ablation.runs}
    assert widths == {"default": 82, "filtered": 32, "optimum": 34}
    assert any("optimum mean overall" in n for n in ablation.notes)


def test_results_files_and_recomputed_aggregate(ablation, tmp_path):
    write_result(ablation, tmp_path)
    rows = read_reports(tmp_path)
    assert len(rows) == 6
    recomputed = aggregate_from_rows(rows)
    for a, b in zip(recomputed, ablation.aggregate()):
        assert (a["group"], a["metric"], a["n_runs"]) == (b["group"], b["metric"], b["n_runs"])
        assert a["mean"] == b["mean"] and a["std"] == b["std"]
    import csv
    with open(tmp_path / "aggregate.csv") as fh:
        stored = list(csv.DictReader(fh))
    for a, s in zip(recomputed, stored):
        assert (s["mean"] == "" and a["mean"] is None) or float(s["mean"]) == a["mean"]
    assert (tmp_path / "timings.csv").exists()


def test_experiments_are_deterministic(snap200, ablation, tmp_path):
    again = exp_ablation(snap200, [0, 1], FAST)
    write_result(ablation, tmp_path / "a")
    write_result(again, tmp_path / "b")
    assert result_digest(tmp_path / "a") == result_digest(tmp_path / "b")
    for name in ("reports.csv", "aggregate.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sampling_arms(snap200):
    res = exp_sampling(snap200, [0, 1], FAST)
    assert res.groups() == ["none", "oversample", "undersample", "smote"]
    for s in (0, 1):
        hashes = {r.extra["test_hash"] for r in res.runs if r.seed == s}
        assert len(hashes) == 1
    for r in res.runs:
        if r.group != "none":
            assert r.extra["train_peer"] == r.extra["train_non_peer"]
    n = {r.group: r.report.n for r in res.runs if r.seed == 0}
    assert len(set(n.values())) == 1


def test_train_size(snap200):
    ds = dataset_from_snapshot(snap200, "optimum").dataset
    res = exp_train_size(snap200, (0.1, 0.5), [0], FAST)
    assert res.groups() == ["train_0.1", "train_0.5"] and res.config["fractions"] == [0.1, 0.5]
    assert res.runs[0].extra["n_train"] == int(np.floor(len(ds) * 0.1))


def test_train_size_default_fractions():
    from peerlens.evalx import DEFAULT_TRAIN_FRACTIONS
    assert DEFAULT_TRAIN_FRACTIONS == (0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7)


def test_transfer(snap200):
    res = exp_transfer(snap200, [0], FAST, internal_holdout=True)
    assert res.groups() == ["A_holdout", "B", "C"]
    sizes = res.runs[0].extra
    ds = dataset_from_snapshot(snap200, "optimum").dataset
    assert sizes["n_A"] + sizes["n_B"] + sizes["n_C"] == len(ds)
    assert "0" in res.artifacts["partitions"]
    assert len(exp_transfer(snap200, [0], FAST).groups()) == 2


def test_temporal():
    old = synth_snapshot(150, 5)
    new = synth_snapshot(150, 5, epoch=1)
    res = exp_temporal(old, new, [0], FAST)
    assert res.groups() == ["A", "B", "C"]
    assert 0 < res.runs[0].extra["n_O"] <= res.runs[0].extra["n_A"]
    assert res.config["old_date"] < res.config["new_date"]


def test_missing_arms_and_zero_fraction(snap200):
    res = exp_missing(snap200, (0.0, 0.3), [2], FAST)
    assert res.groups() == ["missing_0.0", "missing_0.3"]
    ds = dataset_from_snapshot(snap200, "optimum").dataset
    base, _ = _holdout_run(ds, FAST, 2)
    assert res.reports("missing_0.0")[0].to_dict(timing=False) == base.to_dict(timing=False)


def test_missing_default_has_five_arms():
    from peerlens.evalx import DEFAULT_MISSING_FRACTIONS
    assert len(DEFAULT_MISSING_FRACTIONS) == 5


def test_unknown(snap200):
    built = dataset_from_snapshot(snap200, "optimum")
    model = fit_dataset(built.dataset, "gbt", Hyperparams(n_trees=5, max_depth=3))
    summary = exp_unknown(snap200, model, built.features.schema, n_anchors=5)
    assert summary.anchors == default_anchors(snap200, 5)
    assert summary.rate is None or 0.0 <= summary.rate <= 1.0
    assert sum(a["n_pairs"] for a in summary.per_anchor) >= summary.n_pairs
    empty = exp_unknown(snap200, model, built.features.schema, anchors=[])
    assert empty.rate is None and empty.n_pairs == 0


def test_default_anchors_by_rank(snap200):
    anchors = default_anchors(snap200, 3)
    rank = snap200.as_rank.set_index("asn")["Rank"]
    common = sorted(snap200.common_asns, key=lambda a: (rank[a], a))
    assert anchors == common[:3]
