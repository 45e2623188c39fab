"""Compare backends, mean-score aggregation, and vaguest-leaf selection."""

from __future__ import annotations

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from concoct.errors import BackendError, ValidationError
from concoct.evaluator import (
    CachingEvaluator,
    HttpEvaluator,
    JudgeEvaluator,
    ScriptedEvaluator,
    m_avg,
    score_leaves,
    select_vaguest,
)
from concoct.gateway import FunctionChatBackend, Gateway, RetryPolicy
from concoct.outline import OutlineNode


class CountingEvaluator:
    def __init__(self, table):
        self.table = table
        self.calls = 0

    def compare(self, t0, t1):
        self.calls += 1
        return self.table[(t0, t1)]


def full_table(scores: dict[tuple[str, str], float]) -> dict[tuple[str, str], float]:
    return dict(scores)


def test_scripted_evaluator_roundtrip(tmp_path):
    path = tmp_path / "scores.json"
    path.write_text(json.dumps({"pairs": [{"t0": "a", "t1": "b", "p": 0.25}]}))
    evaluator = ScriptedEvaluator.from_file(path)
    assert evaluator.compare("a", "b") == 0.25
    with pytest.raises(BackendError, match="no scripted score"):
        evaluator.compare("b", "a")


def test_scripted_evaluator_rejects_bad_probability():
    with pytest.raises(BackendError, match="outside"):
        ScriptedEvaluator({("a", "b"): 1.5})


def test_scripted_evaluator_rejects_malformed_file(tmp_path):
    path = tmp_path / "scores.json"
    path.write_text(json.dumps({"pairs": [{"t0": "a"}]}))
    with pytest.raises(ValidationError, match="malformed"):
        ScriptedEvaluator.from_file(path)


def test_caching_evaluator_calls_backend_once_per_ordered_pair():
    inner = CountingEvaluator({("a", "b"): 0.7, ("b", "a"): 0.2})
    cached = CachingEvaluator(inner)
    assert cached.compare("a", "b") == 0.7
    assert cached.compare("a", "b") == 0.7
    assert cached.compare("b", "a") == 0.2
    assert inner.calls == 2


def test_m_avg_empty_references_is_neutral():
    evaluator = ScriptedEvaluator({})
    assert m_avg(evaluator, "anything", []) == 0.5


def test_m_avg_orders_pairs_reference_first():
    # m_avg scores (reference, target); the reverse direction must not be read.
    evaluator = ScriptedEvaluator({("r1", "t"): 0.9, ("r2", "t"): 0.5})
    assert m_avg(evaluator, "t", ["r1", "r2"]) == pytest.approx(0.7)


def test_m_avg_counts_duplicate_references():
    evaluator = ScriptedEvaluator({("r", "t"): 0.9, ("s", "t"): 0.3})
    assert m_avg(evaluator, "t", ["r", "r", "s"]) == pytest.approx((0.9 + 0.9 + 0.3) / 3)


def make_leaves(n: int) -> list[OutlineNode]:
    return [OutlineNode(str(i + 1), f"leaf {i + 1}") for i in range(n)]


def test_score_leaves_uses_other_leaves_as_references():
    leaves = make_leaves(3)
    table = {
        ("leaf 2", "leaf 1"): 0.2, ("leaf 3", "leaf 1"): 0.4,
        ("leaf 1", "leaf 2"): 0.9, ("leaf 3", "leaf 2"): 0.7,
        ("leaf 1", "leaf 3"): 0.6, ("leaf 2", "leaf 3"): 0.8,
    }
    scores = score_leaves(ScriptedEvaluator(table), leaves)
    assert [s.leaf_id for s in scores] == ["1", "2", "3"]
    assert scores[0].score == pytest.approx(0.3)
    assert scores[1].score == pytest.approx(0.8)
    assert scores[2].score == pytest.approx(0.7)


def test_score_leaves_rejects_empty():
    with pytest.raises(ValidationError):
        score_leaves(ScriptedEvaluator({}), [])


def test_select_vaguest_picks_minimum():
    leaves = make_leaves(3)
    table = {
        ("leaf 2", "leaf 1"): 0.2, ("leaf 3", "leaf 1"): 0.4,
        ("leaf 1", "leaf 2"): 0.9, ("leaf 3", "leaf 2"): 0.7,
        ("leaf 1", "leaf 3"): 0.6, ("leaf 2", "leaf 3"): 0.8,
    }
    chosen, scores = select_vaguest(ScriptedEvaluator(table), leaves)
    assert chosen.id == "1"
    assert len(scores) == len(leaves)


def test_select_vaguest_tie_goes_to_earliest_leaf():
    leaves = make_leaves(2)
    table = {("leaf 2", "leaf 1"): 0.5, ("leaf 1", "leaf 2"): 0.5}
    chosen, _ = select_vaguest(ScriptedEvaluator(table), leaves)
    assert chosen.id == "1"


def test_select_vaguest_excluded_leaves_still_score_as_references():
    leaves = make_leaves(3)
    inner = CountingEvaluator({
        ("leaf 2", "leaf 1"): 0.1, ("leaf 3", "leaf 1"): 0.1,
        ("leaf 1", "leaf 2"): 0.9, ("leaf 3", "leaf 2"): 0.5,
        ("leaf 1", "leaf 3"): 0.9, ("leaf 2", "leaf 3"): 0.6,
    })
    chosen, scores = select_vaguest(inner, leaves, excluded_ids={"1"})
    # "1" has the lowest score but is excluded, so "2" at 0.7 wins over "3" at 0.75.
    assert chosen.id == "2"
    assert len(scores) == 3
    assert inner.calls == 6


def test_select_vaguest_all_excluded():
    leaves = make_leaves(2)
    table = {("leaf 2", "leaf 1"): 0.5, ("leaf 1", "leaf 2"): 0.5}
    with pytest.raises(ValidationError, match="excluded"):
        select_vaguest(ScriptedEvaluator(table), leaves, excluded_ids={"1", "2"})


def test_select_vaguest_matches_brute_force_on_random_tables():
    rng = random.Random(20260814)
    for _ in range(25):
        n = rng.randint(3, 8)
        leaves = make_leaves(n)
        table = {
            (f"leaf {i + 1}", f"leaf {j + 1}"): rng.random()
            for i in range(n) for j in range(n) if i != j
        }
        chosen, scores = select_vaguest(ScriptedEvaluator(table), leaves)

        means = [
            sum(table[(f"leaf {j + 1}", f"leaf {i + 1}")] for j in range(n) if j != i) / (n - 1)
            for i in range(n)
        ]
        expected = min(range(n), key=lambda i: means[i])
        assert chosen.id == str(expected + 1)
        for score, mean in zip(scores, means):
            assert score.score == pytest.approx(mean)


def test_judge_evaluator_maps_replies():
    def scripted(request):
        content = request.messages[0]["content"]
        assert request.temperature == 0.0
        if "vague text" in content.split("Passage (A): ")[1].split("\n")[0]:
            return "Passage (B)"
        return "Passage (A)"

    judge = JudgeEvaluator(Gateway(FunctionChatBackend(scripted)))
    assert judge.compare("vague text", "crisp text") == 1.0
    assert judge.compare("crisp text", "vague text") == 0.0


class _CompareHandler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802 (stdlib naming)
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        if self.path == "/compare":
            payload = {"p": 0.25 if body["t0"] == "a" else 0.75}
        else:
            payload = {"p": [0.5 for _ in body["pairs"]]}
        blob = json.dumps(payload).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def log_message(self, *args):
        pass


def test_http_evaluator_contract():
    server = HTTPServer(("127.0.0.1", 0), _CompareHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        retry = RetryPolicy(sleep=lambda _: None, rng=random.Random(0))
        evaluator = HttpEvaluator(f"http://127.0.0.1:{server.server_address[1]}", retry=retry)
        assert evaluator.compare("a", "b") == 0.25
        assert evaluator.compare("b", "a") == 0.75
        assert evaluator.compare_batch([("a", "b"), ("b", "a")]) == [0.5, 0.5]
    finally:
        server.shutdown()
        server.server_close()
