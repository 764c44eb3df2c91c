"""Adjudication, Fleiss' kappa, and annotation-engine protocol tests."""

import itertools
import json
from datetime import datetime, timezone

import numpy as np
import pytest

from mbsent.annotation import (
    AdjudicationConfig,
    Annotation,
    AnnotationEngine,
    AnnotationError,
    Verdict,
    adjudicate,
    export_annotations_jsonl,
    fleiss_kappa,
    self_agreement,
)
from mbsent.corpus import CorpusStore, Document

TS = datetime(2021, 3, 1, tzinfo=timezone.utc)


def ann(annotator, doc, label, rnd=1, probe=False):
    return Annotation(annotator, doc, label, rnd, TS, probe)


# -- Fleiss' kappa against a brute-force oracle -------------------------------


def kappa_brute(matrix):
    """Textbook formulation, plain loops, no shared code with the package."""
    big_n = len(matrix)
    k = len(matrix[0])
    n = sum(matrix[0])
    p_sum = 0.0
    for row in matrix:
        pairs = 0
        for c in row:
            pairs += c * (c - 1)
        p_sum += pairs / (n * (n - 1))
    p_bar = p_sum / big_n
    p_e = 0.0
    for j in range(k):
        col = sum(row[j] for row in matrix) / (big_n * n)
        p_e += col * col
    if p_e >= 1.0:
        return None
    return (p_bar - p_e) / (1.0 - p_e)


def random_matrix(rng, big_n, n, k):
    out = []
    for _ in range(big_n):
        row = [0] * k
        for _ in range(n):
            row[int(rng.integers(k))] += 1
        out.append(row)
    return out


def test_kappa_matches_brute_force_on_200_random_matrices():
    rng = np.random.default_rng(42)
    for trial in range(200):
        n = int(rng.integers(2, 7))
        big_n = int(rng.integers(1, 51))
        k = int(rng.integers(2, 6))
        matrix = random_matrix(rng, big_n, n, k)
        expected = kappa_brute(matrix)
        got = fleiss_kappa(matrix)
        if expected is None:
            assert got is None, f"trial {trial}"
        else:
            assert got == pytest.approx(expected, abs=1e-12), f"trial {trial}"


def test_kappa_unanimous_is_one():
    # every item unanimous, but not all in one category
    assert fleiss_kappa([[3, 0, 0], [0, 3, 0], [0, 0, 3]]) == 1.0
    assert fleiss_kappa([[5, 0], [0, 5]]) == 1.0


def test_kappa_hand_worked_case():
    # P_1 = 1, P_2 = 1/3, P_bar = 2/3, P_e = 13/18, kappa = -1/5
    assert fleiss_kappa([[3, 0, 0], [2, 0, 1]]) == pytest.approx(-0.2, abs=1e-12)


def test_kappa_degenerate_single_category_is_none():
    assert fleiss_kappa([[4, 0], [4, 0], [4, 0]]) is None
    assert fleiss_kappa([[2], [2]]) is None


def test_kappa_input_validation():
    with pytest.raises(AnnotationError):
        fleiss_kappa([[2, 1], [1, 1]])  # ragged
    with pytest.raises(AnnotationError):
        fleiss_kappa([[1, 0]])  # single rating
    with pytest.raises(AnnotationError):
        fleiss_kappa([[2, -1, 2]])
    with pytest.raises(AnnotationError):
        fleiss_kappa([1, 2, 3])


# -- adjudication truth table --------------------------------------------------


CFG3 = AdjudicationConfig(annotators_per_item=3, probe_fraction=0.0)
LABELS = (-1, 0, 1)


def r1_annotations(labels):
    return [ann(f"a{i}", "d", lab) for i, lab in enumerate(labels)]


@pytest.mark.parametrize("votes", list(itertools.product(LABELS, repeat=3)))
def test_round1_truth_table_n3(votes):
    result = adjudicate("d", r1_annotations(votes), CFG3)
    counts = {lab: votes.count(lab) for lab in LABELS}
    top = max(counts.values())
    if top == 3:
        assert result.verdict == Verdict.GOLD
        assert result.gold.provenance == "unanimous_r1"
        assert result.gold.label == votes[0]
        assert result.gold.adjudication_round == 1
    elif top == 2:
        winner = next(lab for lab, c in counts.items() if c == 2)
        assert result.verdict == Verdict.GOLD
        assert result.gold.provenance == "majority_r1"
        assert result.gold.label == winner
    else:
        assert result.verdict == Verdict.NEEDS_ROUND2
        assert result.gold is None


@pytest.mark.parametrize("votes", list(itertools.product(LABELS, repeat=3)))
def test_round2_truth_table_n3(votes):
    # round 1 splits three ways, so everything rides on round 2
    anns = r1_annotations((-1, 0, 1))
    anns += [ann(f"a{i}", "d", lab, rnd=2) for i, lab in enumerate(votes)]
    result = adjudicate("d", anns, CFG3)
    counts = {lab: votes.count(lab) for lab in LABELS}
    top = max(counts.values())
    if top >= 2:
        winner = next(lab for lab, c in counts.items() if c == top)
        assert result.verdict == Verdict.GOLD
        assert result.gold.provenance == "majority_r2"
        assert result.gold.label == winner
        assert result.gold.adjudication_round == 2
    else:
        assert result.verdict == Verdict.REMOVED


@pytest.mark.parametrize("votes", list(itertools.product(LABELS, repeat=2)))
def test_round1_truth_table_n2(votes):
    cfg = AdjudicationConfig(annotators_per_item=2, probe_fraction=0.0)
    result = adjudicate("d", [ann(f"a{i}", "d", lab) for i, lab in enumerate(votes)], cfg)
    if votes[0] == votes[1]:
        assert result.verdict == Verdict.GOLD
        assert result.gold.provenance == "unanimous_r1"
    else:
        # 1-1 is not a strict majority of 2
        assert result.verdict == Verdict.NEEDS_ROUND2


def test_majority_is_strict_for_n5():
    cfg = AdjudicationConfig(annotators_per_item=5, probe_fraction=0.0)
    # 3 of 5 is a strict majority
    anns = [ann(f"a{i}", "d", lab) for i, lab in enumerate([1, 1, 1, 0, -1])]
    result = adjudicate("d", anns, cfg)
    assert result.gold.label == 1 and result.gold.provenance == "majority_r1"
    # 2-2-1 is not
    anns = [ann(f"a{i}", "d", lab) for i, lab in enumerate([1, 1, 0, 0, -1])]
    assert adjudicate("d", anns, cfg).verdict == Verdict.NEEDS_ROUND2


def test_adjudicate_incomplete_round1_raises():
    with pytest.raises(AnnotationError, match="incomplete"):
        adjudicate("d", r1_annotations((1, 1)), CFG3)


def test_adjudicate_rejects_foreign_doc():
    anns = r1_annotations((1, 1, 1))
    anns.append(ann("a3", "other", 1))
    with pytest.raises(AnnotationError, match="mixed"):
        adjudicate("d", anns, CFG3)


def test_probe_votes_do_not_count_toward_adjudication():
    anns = r1_annotations((1, 1, 0))
    anns.append(ann("a0", "d", -1, probe=True))
    result = adjudicate("d", anns, CFG3)
    assert result.gold.label == 1 and result.gold.provenance == "majority_r1"


def test_first_vote_per_annotator_wins():
    # a duplicate slipped into the list is ignored, not double counted
    anns = r1_annotations((1, 0, 0)) + [ann("a0", "d", 0)]
    result = adjudicate("d", anns, CFG3)
    assert result.gold.label == 0


# -- self-agreement -------------------------------------------------------------


def test_self_agreement_rates():
    anns = [
        ann("a", "d1", 1), ann("a", "d1", 1),          # consistent probe
        ann("a", "d2", 0), ann("a", "d2", 1),          # inconsistent probe
        ann("b", "d3", -1), ann("b", "d3", -1),        # consistent probe
        ann("c", "d4", 1),                              # no probe for c
    ]
    rates, overall = self_agreement(anns)
    assert rates == {"a": 0.5, "b": 1.0}
    assert overall == pytest.approx(2 / 3)


def test_self_agreement_empty():
    rates, overall = self_agreement([])
    assert rates == {} and overall is None


# -- engine ----------------------------------------------------------------------


def make_store(tmp_path, num_docs=4):
    store = CorpusStore(str(tmp_path / "store.jsonl"))
    for i in range(num_docs):
        doc_id = f"d{i:02d}"
        store.add_document(
            Document(doc_id, f"متن {i}", ("متن",), 0, f"p{i}")
        )
    for a in ("a1", "a2", "a3"):
        store.add_annotator(a)
    return store


def test_engine_serves_fewest_rated_first(tmp_path):
    store = make_store(tmp_path)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=0.0))
    task = eng.next_task("a1", 1)
    assert task == ("d00", False)
    eng.submit("a1", "d00", 1, 1)
    # d00 now has one vote; everything else has zero, d01 wins the tie-break
    assert eng.next_task("a1", 1) == ("d01", False)
    assert eng.next_task("a2", 1) == ("d01", False)
    eng.submit("a2", "d01", 1, 1)
    eng.submit("a3", "d02", 1, 1)
    # all of d00..d02 have one vote, d03 has zero
    assert eng.next_task("a2", 1) == ("d03", False)


def test_engine_exclude_hides_docs(tmp_path):
    store = make_store(tmp_path)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=0.0))
    assert eng.next_task("a1", 1, exclude={"d00", "d01"}) == ("d02", False)


def test_engine_never_reserves_own_doc(tmp_path):
    store = make_store(tmp_path, num_docs=2)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=0.0))
    eng.submit("a1", "d00", 1, 1)
    eng.submit("a1", "d01", 0, 1)
    assert eng.next_task("a1", 1) is None


def test_engine_duplicate_submission_rejected(tmp_path):
    store = make_store(tmp_path)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=0.0))
    eng.submit("a1", "d00", 1, 1)
    with pytest.raises(AnnotationError, match="duplicate"):
        eng.submit("a1", "d00", 0, 1)


def test_engine_probe_requires_prior_label(tmp_path):
    store = make_store(tmp_path)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=0.0))
    with pytest.raises(AnnotationError, match="probe"):
        eng.submit("a1", "d00", 1, 1, probe=True)
    eng.submit("a1", "d00", 1, 1)
    assert eng.submit("a1", "d00", 1, 1, probe=True) is None


def test_engine_unknown_ids(tmp_path):
    store = make_store(tmp_path)
    eng = AnnotationEngine(store)
    with pytest.raises(AnnotationError, match="unknown annotator"):
        eng.next_task("nobody", 1)
    with pytest.raises(AnnotationError, match="unknown annotator"):
        eng.submit("nobody", "d00", 1, 1)
    with pytest.raises(AnnotationError, match="unknown doc"):
        eng.submit("a1", "missing", 1, 1)


def test_engine_adjudicates_on_round_completion(tmp_path):
    store = make_store(tmp_path, num_docs=1)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=0.0))
    assert eng.submit("a1", "d00", 1, 1) is None
    assert eng.submit("a2", "d00", 1, 1) is None
    result = eng.submit("a3", "d00", 0, 1)
    assert result.verdict == Verdict.GOLD
    assert store.golds["d00"].label == 1
    assert store.golds["d00"].provenance == "majority_r1"
    # a gold doc stops being served
    assert eng.next_task("a1", 1) is None


def test_engine_round2_flow(tmp_path):
    store = make_store(tmp_path, num_docs=1)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=0.0))
    for a, lab in (("a1", -1), ("a2", 0)):
        eng.submit(a, "d00", lab, 1)
    result = eng.submit("a3", "d00", 1, 1)
    assert result.verdict == Verdict.NEEDS_ROUND2
    assert eng.next_task("a1", 2) == ("d00", False)
    for a, lab in (("a1", 1), ("a2", 1)):
        eng.submit(a, "d00", lab, 2)
    result = eng.submit("a3", "d00", 0, 2)
    assert result.verdict == Verdict.GOLD
    assert store.golds["d00"].provenance == "majority_r2"
    assert store.golds["d00"].label == 1


def test_engine_round2_removal(tmp_path):
    store = make_store(tmp_path, num_docs=1)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=0.0))
    for a, lab in (("a1", -1), ("a2", 0), ("a3", 1)):
        eng.submit(a, "d00", lab, 1)
    for a, lab in (("a1", 1), ("a2", 0)):
        eng.submit(a, "d00", lab, 2)
    result = eng.submit("a3", "d00", -1, 2)
    assert result.verdict == Verdict.REMOVED
    assert "d00" not in store.golds


def test_engine_no_round2_task_before_deadlock(tmp_path):
    store = make_store(tmp_path, num_docs=2)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=0.0))
    assert eng.next_task("a1", 2) is None
    eng.submit("a1", "d00", 1, 1)
    assert eng.next_task("a1", 2) is None  # round 1 incomplete


def test_engine_probe_draw_is_seeded(tmp_path):
    cfg = AdjudicationConfig(probe_fraction=1.0)
    stores = []
    for sub in ("x", "y"):
        store = make_store(tmp_path / sub)
        eng = AnnotationEngine(store, cfg, seed=7)
        eng.submit("a1", "d00", 1, 1)
        task = eng.next_task("a1", 1)
        stores.append(task)
        assert task == ("d00", True)  # only own doc, fraction 1.0
    assert stores[0] == stores[1]


def test_engine_probe_never_drawn_without_history(tmp_path):
    store = make_store(tmp_path)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=1.0))
    doc_id, is_probe = eng.next_task("a1", 1)
    assert not is_probe


def test_adjudicate_all_counts(tmp_path):
    store = make_store(tmp_path, num_docs=3)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=0.0))
    for a in ("a1", "a2", "a3"):
        eng.submit(a, "d00", 1, 1)          # unanimous gold
    for a, lab in (("a1", -1), ("a2", 0), ("a3", 1)):
        eng.submit(a, "d01", lab, 1)        # three-way split
    eng.submit("a1", "d02", 1, 1)            # pending
    outcomes = eng.adjudicate_all()
    assert outcomes == {"gold": 1, "needs_round2": 1, "removed": 0, "pending": 1}


def test_agreement_report(tmp_path):
    store = make_store(tmp_path, num_docs=2)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=0.0))
    for a in ("a1", "a2", "a3"):
        eng.submit(a, "d00", 1, 1)
    for a, lab in (("a1", 0), ("a2", 0), ("a3", 1)):
        eng.submit(a, "d01", lab, 1)
    eng.submit("a1", "d00", 1, 1, probe=True)
    report = eng.agreement_report()
    assert report.raw_interagreement == 0.5
    expected = kappa_brute([[0, 0, 3], [0, 2, 1]])
    assert report.fleiss_kappa == pytest.approx(expected, abs=1e-12)
    assert report.self_agreement == {"a1": 1.0}
    assert report.overall_self_agreement == 1.0
    js = report.to_json()
    assert set(js) == {
        "fleiss_kappa", "raw_interagreement", "self_agreement",
        "overall_self_agreement",
    }


def test_agreement_report_empty(tmp_path):
    store = make_store(tmp_path)
    report = AnnotationEngine(store).agreement_report()
    assert report.fleiss_kappa is None
    assert report.raw_interagreement is None
    assert report.overall_self_agreement is None


def test_store_replay_preserves_engine_state(tmp_path):
    path = tmp_path / "store.jsonl"
    store = CorpusStore(str(path))
    store.add_document(Document("d0", "متن", ("متن",), 0, "p0"))
    for a in ("a1", "a2", "a3"):
        store.add_annotator(a)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=0.0))
    for a in ("a1", "a2", "a3"):
        eng.submit(a, "d0", 0, 1)
    store.close()

    reopened = CorpusStore(str(path))
    assert len(reopened.annotations) == 3
    assert reopened.golds["d0"].label == 0
    assert reopened.annotators == {"a1", "a2", "a3"}
    reopened.close()


def test_export_annotations_jsonl(tmp_path):
    store = make_store(tmp_path, num_docs=1)
    eng = AnnotationEngine(store, AdjudicationConfig(probe_fraction=0.0))
    eng.submit("a1", "d00", 1, 1)
    eng.submit("a2", "d00", -1, 1)
    out = tmp_path / "anns.jsonl"
    assert export_annotations_jsonl(store, str(out)) == 2
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["annotator_id"] for r in rows] == ["a1", "a2"]
    assert rows[0]["label"] == 1 and rows[1]["label"] == -1
    round_trip = Annotation.from_json(rows[0])
    assert round_trip.doc_id == "d00" and not round_trip.probe


def test_annotation_validation():
    with pytest.raises(AnnotationError):
        ann("a", "d", 2).validate()
    with pytest.raises(AnnotationError):
        Annotation("a", "d", 1, 3, TS).validate()
    with pytest.raises(AnnotationError):
        AdjudicationConfig(annotators_per_item=1).validate()
    with pytest.raises(AnnotationError):
        AdjudicationConfig(probe_fraction=1.5).validate()
