import csv
import math

import pytest

import auxcal


def test_metrics_examples():
    p = [0.85, 0.85, 0.35, 0.35]
    y = [True, False, False, True]
    assert auxcal.compute_ece(p, y) == pytest.approx(0.25, abs=1e-12)
    assert auxcal.compute_brier([0.8, 0.3], [True, False]) == pytest.approx(0.065)
    assert auxcal.compute_auroc([0.9, 0.4, 0.6, 0.1], [True, True, False, False]) == 0.75
    value, se = auxcal.bootstrap_se("brier", [0.7] * 10, [True] * 10, n_resamples=20, seed=1)
    assert value == pytest.approx(0.09) and se == pytest.approx(0.0)
    table = auxcal.reliability_table([0.85, 0.85], [True, False])
    assert table[8]["accuracy"] == 0.5
    assert sum(b["proportion"] for b in table) == pytest.approx(1.0)
    assert auxcal.render_reliability_svg(p, y, "m").startswith("<svg")


def test_grading_and_baselines():
    assert auxcal.normalize_answer("The Eiffel Tower!") == "the eiffel tower"
    assert auxcal.grade_answer("Paris, France", ["Paris"])
    assert auxcal.normalized_seq_likelihood([math.log(0.9), math.log(0.4)]) == pytest.approx(0.6)
    assert auxcal.parse_verbalized_percent("I am 95% confident") == pytest.approx(0.95)
    assert auxcal.parse_verbalized_percent("no idea") is None
    assert auxcal.parse_verbalized_qualitative("Somewhat High") == 0.65
    fit = auxcal.fit_platt([0.2, 0.9, 0.6, 0.3], [False, True, True, False])
    assert fit["fitted_mse"] <= fit["initial_mse"]


def test_clustering_and_targets():
    pts = [[0, 0], [0, 1], [1, 0], [10, 10], [10, 11], [11, 10]]
    labels = auxcal.cluster_questions(pts)
    assert labels[0] == labels[1] == labels[2] != labels[3]
    targets = auxcal.assign_calibration_targets(labels, [True, True, False, False, False, True])
    assert targets[0] == pytest.approx(2 / 3)
    assert targets[3] == pytest.approx(1 / 3)


def test_prompts():
    prompt = auxcal.build_qa_prompt("Who?", "trivia", False, [("Q1", "A1")], None)
    assert prompt == "Question: Q1 Answer: A1\nQuestion: Who? Answer:"
    assert auxcal.truncate_at_stop("Paris. Question: next") == "Paris. "


def test_errors_map_to_python():
    with pytest.raises(auxcal.PreconditionError):
        auxcal.compute_auroc([0.1, 0.2], [True, True])
    with pytest.raises(auxcal.AuxcalError):
        auxcal.normalized_seq_likelihood([])


def test_pipeline_on_tiny_synthetic(tmp_path):
    config = {
        "seed": 4,
        "split": {"train": 120, "validation": 40, "test": 40},
        "gateway": {"mode": "replay", "fixture_path": str(tmp_path / "fx.jsonl")},
        "generate": {"icl": 1},
        "train": {"max_steps": 30, "hidden": 4},
        "evaluate": {"bootstrap_resamples": 5},
        "synth": {"clusters": 5, "per_cluster": 40, "dim": 6},
    }
    auxcal.synthesize_fixture_run(config, tmp_path / "raw.jsonl", tmp_path / "fx.jsonl")
    config["paths"] = {"corpus": str(tmp_path / "raw.jsonl")}
    auxcal.run_pipeline(config, tmp_path / "run")
    with open(tmp_path / "run" / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    methods = [r["method"] for r in rows]
    assert "auxiliary_clustering" in methods and "seq_likelihood" in methods
    records = auxcal.load_corpus(tmp_path / "run" / "targets.jsonl")
    assert len(records) == 200 and all("target" in r for r in records)
    assert any(p.suffix == ".svg" for p in (tmp_path / "run" / "report").iterdir())
