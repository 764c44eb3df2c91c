"""Two-round labeling protocol: task scheduling, adjudication by majority
vote, and agreement statistics (Fleiss' kappa, raw inter-agreement,
per-annotator self-agreement).

Round 1 serves every document to `annotators_per_item` distinct annotators.
A unanimous round-1 vote yields a gold label immediately, a strict majority
(> n/2) also yields one, and anything else sends the document to round 2.
Round 2 repeats the vote with fresh labels; a strict majority wins, a tie
removes the document from the corpus.

A seeded fraction of round-1 tasks are probes: the same document is served
again to the same annotator, and the repeated labels feed self-agreement.
Probe annotations never enter the vote.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

import numpy as np

from .corpus import CorpusError, CorpusStore, GoldRecord, VALID_LABELS


class AnnotationError(Exception):
    """Protocol violation: bad label, duplicate vote, unknown annotator."""


@dataclass
class Annotation:
    annotator_id: str
    doc_id: str
    label: int
    round: int
    submitted_at: datetime
    probe: bool = False

    def validate(self) -> None:
        if self.label not in VALID_LABELS:
            raise AnnotationError(f"label {self.label} outside {{-1, 0, +1}}")
        if self.round not in (1, 2):
            raise AnnotationError(f"round must be 1 or 2, got {self.round}")

    def to_json(self) -> dict:
        return {
            "annotator_id": self.annotator_id,
            "doc_id": self.doc_id,
            "label": self.label,
            "round": self.round,
            "submitted_at": self.submitted_at.isoformat(),
            "probe": self.probe,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Annotation":
        return cls(
            annotator_id=obj["annotator_id"],
            doc_id=obj["doc_id"],
            label=obj["label"],
            round=obj["round"],
            submitted_at=datetime.fromisoformat(obj["submitted_at"]),
            probe=obj.get("probe", False),
        )


@dataclass
class AdjudicationConfig:
    annotators_per_item: int = 3
    probe_fraction: float = 0.05

    def validate(self) -> None:
        if self.annotators_per_item < 2:
            raise AnnotationError("annotators_per_item must be >= 2")
        if not 0.0 <= self.probe_fraction <= 1.0:
            raise AnnotationError("probe_fraction must be in [0, 1]")


class Verdict(Enum):
    GOLD = "gold"
    NEEDS_ROUND2 = "needs_round2"
    REMOVED = "removed"


@dataclass
class AdjudicationResult:
    verdict: Verdict
    gold: GoldRecord | None = None


@dataclass
class AgreementReport:
    fleiss_kappa: float | None
    raw_interagreement: float | None
    self_agreement: dict[str, float]
    overall_self_agreement: float | None

    def to_json(self) -> dict:
        return {
            "fleiss_kappa": self.fleiss_kappa,
            "raw_interagreement": self.raw_interagreement,
            "self_agreement": dict(sorted(self.self_agreement.items())),
            "overall_self_agreement": self.overall_self_agreement,
        }


def _round_votes(annotations: list[Annotation], rnd: int) -> dict[str, int]:
    """One non-probe label per annotator for the given round."""
    votes: dict[str, int] = {}
    for ann in annotations:
        if ann.round == rnd and not ann.probe and ann.annotator_id not in votes:
            votes[ann.annotator_id] = ann.label
    return votes


def _majority(labels: list[int], n: int) -> int | None:
    """Label held by a strict majority (> n/2) of the n votes, if any."""
    for label in VALID_LABELS:
        if labels.count(label) * 2 > n:
            return label
    return None


def adjudicate(
    doc_id: str, annotations: list[Annotation], config: AdjudicationConfig
) -> AdjudicationResult:
    config.validate()
    n = config.annotators_per_item
    for ann in annotations:
        ann.validate()
        if ann.doc_id != doc_id:
            raise AnnotationError(f"annotation for {ann.doc_id!r} mixed into {doc_id!r}")

    r1 = _round_votes(annotations, 1)
    if len(r1) < n:
        raise AnnotationError(
            f"doc {doc_id!r}: round 1 incomplete ({len(r1)}/{n} annotators)"
        )
    labels = list(r1.values())
    if len(set(labels)) == 1:
        return AdjudicationResult(
            Verdict.GOLD, GoldRecord(doc_id, labels[0], 1, "unanimous_r1")
        )
    winner = _majority(labels, n)
    if winner is not None:
        return AdjudicationResult(
            Verdict.GOLD, GoldRecord(doc_id, winner, 1, "majority_r1")
        )

    r2 = _round_votes(annotations, 2)
    if len(r2) < n:
        return AdjudicationResult(Verdict.NEEDS_ROUND2)
    winner = _majority(list(r2.values()), n)
    if winner is not None:
        return AdjudicationResult(
            Verdict.GOLD, GoldRecord(doc_id, winner, 2, "majority_r2")
        )
    return AdjudicationResult(Verdict.REMOVED)


def fleiss_kappa(matrix) -> float | None:
    """Fleiss' kappa for an N x k matrix of per-item category counts.

    Every item must carry the same number of ratings n >= 2. Returns None
    when expected agreement is 1 (all ratings in a single category), where
    kappa is undefined.
    """
    counts = np.asarray(matrix, dtype=np.float64)
    if counts.ndim != 2 or counts.shape[0] < 1:
        raise AnnotationError("matrix must be 2-D with at least one item")
    if (counts < 0).any():
        raise AnnotationError("counts must be nonnegative")
    row_sums = counts.sum(axis=1)
    n = row_sums[0]
    if not (row_sums == n).all():
        raise AnnotationError("ragged matrix: unequal ratings per item")
    if n < 2:
        raise AnnotationError("need at least 2 ratings per item")

    big_n = counts.shape[0]
    p_i = ((counts**2).sum(axis=1) - n) / (n * (n - 1))
    p_bar = p_i.mean()
    p_j = counts.sum(axis=0) / (big_n * n)
    p_e = (p_j**2).sum()
    if p_e >= 1.0:
        return None
    return float((p_bar - p_e) / (1.0 - p_e))


def self_agreement(
    annotations: list[Annotation],
) -> tuple[dict[str, float], float | None]:
    """Per-annotator and overall self-agreement over round-1 probe items.

    A probe item is an (annotator, doc) pair with at least two round-1
    annotations; it counts as consistent when all its labels coincide.
    The overall rate weights each annotator by probe count.
    """
    groups: dict[tuple[str, str], list[int]] = {}
    for ann in annotations:
        if ann.round == 1:
            groups.setdefault((ann.annotator_id, ann.doc_id), []).append(ann.label)

    probes: dict[str, int] = {}
    consistent: dict[str, int] = {}
    for (annotator_id, _), labels in groups.items():
        if len(labels) < 2:
            continue
        probes[annotator_id] = probes.get(annotator_id, 0) + 1
        if len(set(labels)) == 1:
            consistent[annotator_id] = consistent.get(annotator_id, 0) + 1

    rates = {a: consistent.get(a, 0) / probes[a] for a in probes}
    total = sum(probes.values())
    overall = sum(consistent.values()) / total if total else None
    return rates, overall


class AnnotationEngine:
    """Serves tasks, accepts labels, and adjudicates over a CorpusStore."""

    def __init__(
        self,
        store: CorpusStore,
        config: AdjudicationConfig | None = None,
        seed: int = 0,
    ):
        self.store = store
        self.config = config or AdjudicationConfig()
        self.config.validate()
        self.rng = np.random.default_rng(seed)

    # -- scheduling ----------------------------------------------------------

    def _annotations_for(self, doc_id: str) -> list[Annotation]:
        return [a for a in self.store.annotations if a.doc_id == doc_id]

    def _r1_votes(self, doc_id: str) -> dict[str, int]:
        return _round_votes(self._annotations_for(doc_id), 1)

    def needs_round2(self, doc_id: str) -> bool:
        anns = self._annotations_for(doc_id)
        r1 = _round_votes(anns, 1)
        if len(r1) < self.config.annotators_per_item:
            return False
        result = adjudicate(doc_id, anns, self.config)
        return result.verdict == Verdict.NEEDS_ROUND2

    def vote_count(self, doc_id: str, rnd: int) -> int:
        return len(_round_votes(self._annotations_for(doc_id), rnd))

    def next_task(
        self, annotator_id: str, rnd: int, exclude: set[str] | None = None
    ) -> tuple[str, bool] | None:
        """Next doc for this annotator, as (doc_id, is_probe), or None.

        Deterministic given store state and the engine's RNG stream: open
        docs are served fewest-ratings-first with doc_id as tie-break.
        ``exclude`` removes docs from consideration (a server uses it to
        keep concurrently handed-out tasks within the per-item quota).
        """
        if annotator_id not in self.store.annotators:
            raise AnnotationError(f"unknown annotator {annotator_id!r}")
        if rnd not in (1, 2):
            raise AnnotationError(f"round must be 1 or 2, got {rnd}")
        n = self.config.annotators_per_item
        exclude = exclude or set()

        if rnd == 1:
            own_docs = sorted(
                {
                    a.doc_id
                    for a in self.store.annotations
                    if a.annotator_id == annotator_id and a.round == 1 and not a.probe
                }
            )
            if own_docs and self.config.probe_fraction > 0:
                if self.rng.random() < self.config.probe_fraction:
                    probe_doc = own_docs[int(self.rng.integers(len(own_docs)))]
                    return probe_doc, True
            candidates = []
            for doc_id in sorted(self.store.documents):
                if doc_id in self.store.golds or doc_id in exclude:
                    continue
                votes = self._r1_votes(doc_id)
                if annotator_id in votes or len(votes) >= n:
                    continue
                candidates.append((len(votes), doc_id))
        else:
            candidates = []
            for doc_id in sorted(self.store.documents):
                if doc_id in self.store.golds or doc_id in exclude:
                    continue
                if not self.needs_round2(doc_id):
                    continue
                votes = _round_votes(self._annotations_for(doc_id), 2)
                if annotator_id in votes or len(votes) >= n:
                    continue
                candidates.append((len(votes), doc_id))

        if not candidates:
            return None
        candidates.sort()
        return candidates[0][1], False

    # -- submission ----------------------------------------------------------

    def submit(
        self,
        annotator_id: str,
        doc_id: str,
        label: int,
        rnd: int,
        probe: bool = False,
        submitted_at: datetime | None = None,
    ) -> AdjudicationResult | None:
        """Persist one label; adjudicate when the doc's round completes.

        Returns the adjudication result if this submission completed a
        round, else None.
        """
        if annotator_id not in self.store.annotators:
            raise AnnotationError(f"unknown annotator {annotator_id!r}")
        if doc_id not in self.store.documents:
            raise AnnotationError(f"unknown doc {doc_id!r}")
        ann = Annotation(
            annotator_id=annotator_id,
            doc_id=doc_id,
            label=label,
            round=rnd,
            submitted_at=submitted_at or datetime.now(timezone.utc),
            probe=probe,
        )
        ann.validate()

        existing = _round_votes(self._annotations_for(doc_id), rnd)
        if not probe and annotator_id in existing:
            raise AnnotationError(
                f"duplicate annotation by {annotator_id!r} on {doc_id!r} round {rnd}"
            )
        if probe and annotator_id not in existing:
            raise AnnotationError(
                f"probe for {doc_id!r} without a prior label by {annotator_id!r}"
            )
        self.store.add_annotation(ann)

        if probe:
            return None
        votes = _round_votes(self._annotations_for(doc_id), rnd)
        if len(votes) < self.config.annotators_per_item:
            return None
        result = adjudicate(doc_id, self._annotations_for(doc_id), self.config)
        if result.verdict == Verdict.GOLD and doc_id not in self.store.golds:
            self.store.add_gold(result.gold)
        return result

    # -- statistics ----------------------------------------------------------

    def adjudicate_all(self) -> dict[str, int]:
        """Adjudicate every fully annotated doc lacking a gold record."""
        outcomes = {"gold": 0, "needs_round2": 0, "removed": 0, "pending": 0}
        n = self.config.annotators_per_item
        for doc_id in sorted(self.store.documents):
            if doc_id in self.store.golds:
                outcomes["gold"] += 1
                continue
            anns = self._annotations_for(doc_id)
            if len(_round_votes(anns, 1)) < n:
                outcomes["pending"] += 1
                continue
            result = adjudicate(doc_id, anns, self.config)
            if result.verdict == Verdict.GOLD:
                self.store.add_gold(result.gold)
            outcomes[result.verdict.value] += 1
        return outcomes

    def agreement_report(self) -> AgreementReport:
        n = self.config.annotators_per_item
        rows = []
        unanimous = 0
        for doc_id in sorted(self.store.documents):
            votes = self._r1_votes(doc_id)
            if len(votes) != n:
                continue
            labels = list(votes.values())
            rows.append([labels.count(lab) for lab in VALID_LABELS])
            if len(set(labels)) == 1:
                unanimous += 1
        kappa = fleiss_kappa(np.array(rows)) if rows else None
        raw = unanimous / len(rows) if rows else None
        per_annotator, overall = self_agreement(self.store.annotations)
        return AgreementReport(
            fleiss_kappa=kappa,
            raw_interagreement=raw,
            self_agreement=per_annotator,
            overall_self_agreement=overall,
        )


def export_annotations_jsonl(store: CorpusStore, path: str) -> int:
    written = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ann in store.annotations:
            fh.write(json.dumps(ann.to_json(), ensure_ascii=False) + "\n")
            written += 1
    return written
