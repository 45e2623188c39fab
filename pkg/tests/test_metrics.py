"""Discretization, the seven comparator metrics, and the probe tasks."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from concoct.errors import FormatError, ValidationError
from concoct.evaluator import ScriptedEvaluator
from concoct.gateway import FunctionChatBackend, Gateway
from concoct.metrics import (
    JUDGE_QUESTIONS,
    JudgePairItem,
    Prediction,
    bce_loss,
    discretize,
    discretize_binary,
    judge_pairs,
    marked_accuracy,
    marked_f1,
    marked_node_task,
    metrics,
)

# Hand-tallied confusion set: (p, label) with band 0.1.
#   discretized   0    0    0.5  1    0.5  0.5  0    1    1    1    0.5  0
#   label         0    0    0    0    0.5  0.5  0.5  0.5  1    1    1    1
ORACLE_ITEMS = [
    (0.05, 0.0), (0.10, 0.0), (0.50, 0.0), (0.95, 0.0),
    (0.45, 0.5), (0.55, 0.5), (0.05, 0.5), (0.95, 0.5),
    (0.95, 1.0), (0.80, 1.0), (0.50, 1.0), (0.05, 1.0),
]
ORACLE_EXPECTED = {
    "accuracy": 6 / 12,
    "neutral": 4 / 12,
    "partial": 8 / 12,
    "false_neutral": 2 / 12,
    "true_partial": 4 / 12,
    "major_false": 2 / 12,
}


def test_discretize_band_edges():
    assert discretize(0.39999, 0.1) == 0.0
    assert discretize(0.4, 0.1) == 0.5
    assert discretize(0.5, 0.1) == 0.5
    assert discretize(0.6, 0.1) == 0.5
    assert discretize(0.60001, 0.1) == 1.0


def test_discretize_validation():
    with pytest.raises(ValidationError):
        discretize(1.2)
    with pytest.raises(ValidationError):
        discretize(0.5, band=0.5)


def test_discretize_binary():
    assert discretize_binary(0.49999) == 0.0
    assert discretize_binary(0.5) == 1.0
    assert discretize_binary(0.9) == 1.0


def test_prediction_label_validation():
    with pytest.raises(ValidationError):
        Prediction(0.5, 0.7)


def test_bce_loss_clamps():
    assert bce_loss(0.0, 0.0) == pytest.approx(-math.log(1 - 1e-7))
    assert bce_loss(1.0, 0.0) == pytest.approx(-math.log(1e-7))
    assert bce_loss(0.5, 0.5) == pytest.approx(-math.log(0.5))


def test_metrics_oracle_counts():
    report = metrics([Prediction(p, label) for p, label in ORACLE_ITEMS], band=0.1)
    for key, expected in ORACLE_EXPECTED.items():
        assert report[key] == pytest.approx(expected, abs=1e-12), key
    expected_loss = sum(
        -(label * math.log(min(max(p, 1e-7), 1 - 1e-7))
          + (1 - label) * math.log(1 - min(max(p, 1e-7), 1 - 1e-7)))
        for p, label in ORACLE_ITEMS
    ) / len(ORACLE_ITEMS)
    assert report["loss"] == pytest.approx(expected_loss, rel=1e-12)


def test_metrics_requires_predictions():
    with pytest.raises(ValidationError):
        metrics([])


@given(st.lists(
    st.tuples(st.floats(0.0, 1.0), st.sampled_from([0.0, 0.5, 1.0])),
    min_size=1, max_size=60,
))
def test_metrics_identities(items):
    report = metrics([Prediction(p, label) for p, label in items])
    assert report["neutral"] + report["partial"] == pytest.approx(1.0)
    non_neutral_label = sum(1 for _, label in items if label != 0.5) / len(items)
    committed = report["false_neutral"] + report["true_partial"] + report["major_false"]
    assert committed == pytest.approx(non_neutral_label)


def test_marked_node_task_vague_and_detailed():
    texts = ["plain one", "vivid two", "middling three"]
    table = {}
    means = {"plain one": 0.2, "vivid two": 0.9, "middling three": 0.5}
    for target, mean in means.items():
        for ref in texts:
            if ref != target:
                table[(ref, target)] = mean
    evaluator = ScriptedEvaluator(table)

    vague = marked_node_task(texts, 0, "vague", evaluator)
    assert vague.predicted_index == 0
    assert vague.correct
    assert vague.scores == pytest.approx((0.2, 0.9, 0.5))

    detailed = marked_node_task(texts, 2, "detailed", evaluator)
    assert detailed.predicted_index == 1
    assert not detailed.correct
    assert detailed.decisions == (False, True, False)


def test_marked_node_task_tie_breaks_to_earliest():
    texts = ["one", "two"]
    table = {("one", "two"): 0.5, ("two", "one"): 0.5}
    result = marked_node_task(texts, 1, "vague", ScriptedEvaluator(table))
    assert result.predicted_index == 0
    result = marked_node_task(texts, 1, "detailed", ScriptedEvaluator(table))
    assert result.predicted_index == 0


def test_marked_node_task_validation():
    with pytest.raises(ValidationError):
        marked_node_task(["a", "b"], 0, "weird", ScriptedEvaluator({}))
    with pytest.raises(ValidationError):
        marked_node_task(["a", "b"], 5, "vague", ScriptedEvaluator({}))


def test_marked_accuracy_and_f1():
    def result(predicted, marked, n):
        scores = tuple(0.1 * i for i in range(n))
        from concoct.metrics import MarkedResult

        return MarkedResult(predicted, marked, scores, "vague")

    results = [result(0, 0, 4), result(1, 2, 4)]
    assert marked_accuracy(results) == 0.5
    # Correct item: TP 1.  Wrong item: FP 1 (predicted 1), FN 1 (marked 2).
    assert marked_f1(results) == pytest.approx(2 * 1 / (2 * 1 + 1 + 1))


def test_marked_f1_perfect_is_one():
    from concoct.metrics import MarkedResult

    results = [MarkedResult(2, 2, (0.1, 0.2, 0.05), "vague")]
    assert marked_f1(results) == 1.0


def test_judge_pairs_counterbalances_and_tallies():
    # The judge always answers AAAA: whoever is shown first wins everything.
    gateway = Gateway(FunctionChatBackend(lambda r: "AAAA"))
    items = [JudgePairItem("p", f"story a{i}", f"story b{i}") for i in range(20)]
    report = judge_pairs(gateway, items, "story", seed=3)
    for question in JUDGE_QUESTIONS:
        tally = report[question]
        assert tally["a_wins"] + tally["b_wins"] == 20
        # The seeded coin swaps some but not all presentations.
        assert 0 < tally["a_wins"] < 20
        assert tally["a_rate"] == pytest.approx(tally["a_wins"] / 20)


def test_judge_pairs_swapped_orientation_maps_back():
    def reply(request):
        content = request.messages[0]["content"]
        # The judge prefers the text literally named "good" wherever it sits.
        first = content.split("Story A:\n\n ")[1].split(" \n")[0]
        return "AAAA" if first == "good" else "BBBB"

    gateway = Gateway(FunctionChatBackend(reply))
    items = [JudgePairItem("p", "good", "bad")]
    report = judge_pairs(gateway, items, "story", both_orientations=True)
    for question in JUDGE_QUESTIONS:
        assert report[question]["a_wins"] == 2
        assert report[question]["b_wins"] == 0


def test_judge_pairs_malformed_reply_counts_no_decision():
    gateway = Gateway(FunctionChatBackend(lambda r: "cannot say"))
    report = judge_pairs(gateway, [JudgePairItem("p", "a", "b")], "outline", seed=0)
    for question in JUDGE_QUESTIONS:
        assert report[question]["no_decision"] == 1
        assert report[question]["a_wins"] == 0
        assert report[question]["b_wins"] == 0


def test_judge_pairs_distinct_letters_per_question():
    gateway = Gateway(FunctionChatBackend(lambda r: "ABBA"))
    report = judge_pairs(gateway, [JudgePairItem("p", "a", "b")], "story",
                         both_orientations=True)
    # Over both orientations an orientation-locked verdict cancels out.
    assert report["pacing"]["a_wins"] == 1
    assert report["pacing"]["b_wins"] == 1
    assert report["coherent"]["a_wins"] == 1
    assert report["coherent"]["b_wins"] == 1


def test_judge_pairs_rejects_unknown_kind():
    with pytest.raises(ValidationError):
        judge_pairs(Gateway(FunctionChatBackend(lambda r: "AAAA")), [], "poem")
