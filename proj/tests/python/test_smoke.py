import csv
import json
from pathlib import Path

import pytest

import multians as m

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
DDX_GOLD = [
    "Pneumonia",
    "Pulmonary neoplasm",
    "Bronchitis",
    "Tuberculosis",
    "Possible NSTEMI / STEMI",
    "GERD",
    "Unstable angina",
    "Pericarditis",
    "Stable angina",
]


def test_parse_condensed_box():
    schema = m.TagSchema.multi(3, True, m.GoldRegime.MULTI_GOLD)
    parsed = m.parse((FIXTURES / "transcript_condensed.txt").read_text(), schema)
    assert parsed.violations == []
    assert parsed.answers == ["Tuberculosis", "Pneumonia", "Bronchitis"]
    assert parsed.confidences == [0.40, 0.30, 0.30]


def test_percent_confidence_strict_and_lenient():
    text = (FIXTURES / "transcript_rlvr_single.txt").read_text()
    schema = m.TagSchema.single(True)
    assert m.parse(text, schema).violations == ["CONF_OUT_OF_RANGE"]
    lenient = m.parse(text, schema, lenient_confidence=True)
    assert lenient.violations == []
    assert lenient.confidences == [pytest.approx(0.95)]


def test_rewards_match_hand_values():
    gold = m.GoldSpec(DDX_GOLD)
    assert m.r_rlvr_multi(["Pulmonary Embolism", "Pneumonia", "Tuberculosis"], gold) == 2
    tb = m.GoldSpec(["Tuberculosis"])
    box = ["Tuberculosis", "Pneumonia", "Bronchitis"]
    assert m.multi_brier(box, [0.4, 0.3, 0.3], tb) == pytest.approx(0.18)
    assert m.r_rlcr_multi(box, [0.4, 0.3, 0.3], tb) == pytest.approx(0.82)
    assert m.r_rlcr_single("GERD", 0.75, gold) == 0.9375


def test_format_gate_through_score():
    schema = m.TagSchema.multi(2, False, m.GoldRegime.MULTI_GOLD)
    text = m.render(["GERD", "gerd."], [], schema)
    result = m.score(text, schema, m.GoldSpec(["GERD"]))
    assert result["total"] == 0.0
    assert result["format_multiplier"] == 0
    assert result["correctness_sum"] == 2.0


def test_metrics():
    assert m.brier([(0.4, True), (0.3, False), (0.3, False)]) == pytest.approx(0.18)
    assert m.ece([(0.95, True)] * 4) == pytest.approx(0.05)
    assert m.set_confidence([0.5, 0.5], m.GoldRegime.MULTI_GOLD) == 0.75
    assert m.ngram_overlap(["a b c", "a b d"], 2) == pytest.approx(1 / 3)
    assert m.grpo_advantages([2.0, 1.0, 0.0]) == [1.0, 0.0, -1.0]


def test_evaluate_file_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert m.evaluate_file(str(FIXTURES / "evaluate_hand.jsonl"), str(a), seed=5) == []
    m.evaluate_file(str(FIXTURES / "evaluate_hand.jsonl"), str(b), seed=5)
    for name in ["metrics.csv", "records.csv", "points.csv", "reliability.csv", "efficiency.csv"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    with open(a / "metrics.csv") as fh:
        rows = {row["method"]: row for row in csv.DictReader(fh)}
    assert float(rows["rlcr_multi"]["coverage_mean"]) == pytest.approx(0.6)
    assert float(rows["rlcr_multi"]["brier_pooled"]) == pytest.approx(0.097)


def test_bad_input_raises(tmp_path):
    with pytest.raises(m.InputError):
        m.evaluate_file(str(tmp_path / "missing.jsonl"), str(tmp_path))
    with pytest.raises(m.ConfigError):
        m.simulate(json.dumps({"experiments": [{"name": "k_sweep", "mode": "bogus"}]}), str(tmp_path))


def test_simulate_small_sweep(tmp_path):
    config = {
        "experiments": [
            {"name": "k_sweep", "vocab_size": 8, "n_gold": 4, "k_values": [2, 3], "steps": 60, "eval_sets": 200}
        ]
    }
    lines = m.simulate(json.dumps(config), str(tmp_path), seed=1)
    assert len(lines) == 2
    with open(tmp_path / "k_sweep_summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["k"]) for r in rows] == [2, 3]
    assert float(rows[1]["unique_correct"]) > float(rows[0]["unique_correct"])
