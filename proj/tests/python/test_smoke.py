"""Smoke tests for the compiled extension module."""

import math

import multiqa


def test_chunking_partitions_words():
    body = " ".join(f"w{i}" for i in range(250))
    chunks = multiqa.chunk_document("d1", "T", body, 100)
    assert [len(c.text.split()) for c in chunks] == [100, 100, 50]
    assert [c.chunk_index for c in chunks] == [0, 1, 2]
    assert " ".join(c.text for c in chunks) == body


def test_rrf_formula():
    fused = dict(multiqa.rrf_fuse([["p", "x"], ["a", "b", "p"]], 60))
    assert math.isclose(fused["p"], 1 / 61 + 1 / 63, rel_tol=0, abs_tol=1e-15)
    assert math.isclose(fused["x"], 1 / 62, rel_tol=0, abs_tol=1e-15)


def test_bm25_toy_ranking():
    index = multiqa.SearchIndex(
        [("d1", "t", "red apple pie"), ("d2", "t", "blue sky"), ("d3", "t", "apple")]
    )
    results = index.search("red apple", 10)
    assert [r[0] for r in results] == ["d1#0", "d3#0"]
    assert index.stats()["doc_count"] == 3
    assert index.search("zebra", 10) == []


def test_metrics_fixed_case():
    m = multiqa.score_question(["A", "D"], [["A"], ["B"], ["C"]])
    assert math.isclose(m["precision"], 0.5)
    assert math.isclose(m["recall"], 1 / 3)
    assert math.isclose(m["f1"], 0.4)
    assert m["tp"] == 1 and m["fp"] == 1 and m["fn"] == 2


def test_parse_answer_list():
    assert multiqa.parse_answer_list("* Carrie\n* Misery\n") == ["Carrie", "Misery"]
    assert multiqa.parse_answer_list("There is no answer.") == []
    assert multiqa.is_abstention("there is no answer")


def test_parse_verification_plan():
    raw = (
        "Thought: check the category first.\n"
        "Verification Questions: \n"
        '* Is "[answer]" a film?\n'
        '* Was the film "[answer]" directed by Radha Mohan? [NEGATION]\n'
    )
    plan = multiqa.parse_verification_plan("some question", raw)
    assert plan[0]["kind"] == "categorical"
    assert plan[1]["kind"] == "factual"
    assert plan[1]["negated"] is True
    assert "[NEGATION]" not in plan[1]["template"]


def test_retention_decision_with_negation():
    kinds = ["categorical", "factual", "factual"]
    negated = [False, False, True]
    assert multiqa.retention_decision(kinds, negated, [True, True, False])
    assert not multiqa.retention_decision(kinds, negated, [True, True, True])
    assert not multiqa.retention_decision(kinds, negated, [False, True, False])


def test_normalization():
    assert multiqa.normalize_answer("  The  Thing ") == "the thing"
    assert multiqa.normalize_for_match('"Carrie"') == "carrie"
    assert multiqa.sha256("abc").startswith("ba7816bf")
