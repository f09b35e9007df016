import json
import math
import os
from pathlib import Path

import pytest

import relhal

ROOT = Path(os.environ.get("RELHAL_SOURCE_DIR", Path(__file__).resolve().parents[2]))


def test_entropy_and_gate():
    assert relhal.entropy([0.5, 0.5]) == pytest.approx(1.0)
    assert relhal.entropy([0.5, 0.5], base="e") == pytest.approx(math.log(2))
    assert relhal.max_entropy(4) == pytest.approx(2.0)
    assert relhal.detect(0.9, 0.9)
    assert not relhal.detect(0.89, 0.9)
    with pytest.raises(ValueError):
        relhal.entropy([0.6, 0.6])


def test_calibrate_scores_match_formula():
    f, m = [0.52, 0.48], [0.2, 0.8]
    s = relhal.calibrate_scores(f, m, alpha=0.1)
    for fi, mi, si in zip(f, m, s):
        assert si == pytest.approx(math.log(1.1 * fi) - math.log(0.1 * mi), abs=1e-12)


def test_decode_step_flips_when_truth_gains_late():
    yes_no = ["yes", "no"]
    layers = [[0.0, 0.0]] * 3 + [[math.log(0.1), math.log(0.9)], [0.0, 0.0], [math.log(0.52), math.log(0.48)]]
    out = relhal.decode_step(layers, yes_no)
    assert out["detected"] and out["calibrated"]
    assert out["mid_layer"] == 3
    assert out["chosen_token"] == "yes"
    base = relhal.decode_step(layers, yes_no, mode="baseline")
    assert not base["detected"]
    assert base["chosen_token"] == "yes"


def test_build_dataset_is_balanced():
    questions, manifest = relhal.build_dataset(
        ROOT / "data/fixtures/corpus_50.jsonl",
        rules=ROOT / "data/filter_rules.txt",
        lexicon=ROOT / "data/lexicon.txt",
        synonyms=ROOT / "data/synonyms.txt",
        seed=3,
    )
    yn = [q for q in questions if q["task"] == "yn"]
    assert sum(q["label"] == "yes" for q in yn) == sum(q["label"] == "no" for q in yn)
    assert manifest["yn_ratio"] == "1:1"
    again, _ = relhal.build_dataset(
        ROOT / "data/fixtures/corpus_50.jsonl",
        rules=ROOT / "data/filter_rules.txt",
        lexicon=ROOT / "data/lexicon.txt",
        synonyms=ROOT / "data/synonyms.txt",
        seed=3,
    )
    assert again == questions


def test_evaluate_fixture():
    report = relhal.evaluate(
        ROOT / "tests/data/eval20_questions.jsonl",
        ROOT / "tests/data/eval20_responses.jsonl",
        synonyms=ROOT / "data/synonyms.txt",
    )
    assert report["r_score"] == pytest.approx(2 / 3)
    assert relhal.r_score(0, 0, 0) == 1.0
    assert relhal.halr([True, False, True, True]) == 0.25


def test_toy_model_final_layer_matches_next_token():
    model = relhal.ToyModel(str(ROOT / "data/toy_model.json"))
    layers = model.layer_distributions("is the boy on the table", ["yes", "no"])
    assert len(layers) == model.n_layers + 1
    assert layers[-1] == model.next_token_distribution("is the boy on the table", ["yes", "no"])


def test_cli_round_trip(tmp_path):
    code, out, _ = relhal.run_cli(["synth", "planted", "--planted", "5", "--confident", "5", "--out-dir", str(tmp_path)])
    assert code == 0
    outcomes = relhal.decode_trace(str(tmp_path / "trace.jsonl"))
    assert len(outcomes) == 10
    assert sum(o["calibrated"] for o in outcomes) == 5
    code, _, err = relhal.run_cli(["decode", "--mode", "sometimes"])
    assert code == 2
    assert err
