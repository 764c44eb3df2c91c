"""Corpus storage: raw post ingestion, selection filters, documents,
gold labels, and corpus statistics.

Persistence is an append-only JSONL record log. Every mutation appends one
record and flushes it to disk before returning; all indexes are rebuilt by
replaying the log on open. Mutations are serialized through a single lock,
reads work on plain dict snapshots.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone

VALID_LABELS = (-1, 0, 1)
SOURCES = ("twitter", "instagram")


class CorpusError(Exception):
    """Invalid record or store operation."""


@dataclass
class RawPost:
    id: str
    source: str
    text: str
    author_id: str
    timestamp: datetime
    like_count: int
    comment_count: int
    domain_tag: str

    def validate(self) -> None:
        if not self.id:
            raise CorpusError("post id must be nonempty")
        if self.source not in SOURCES:
            raise CorpusError(f"unknown source {self.source!r}")
        if not self.text:
            raise CorpusError(f"post {self.id}: text must be nonempty")
        if self.like_count < 0 or self.comment_count < 0:
            raise CorpusError(f"post {self.id}: counts must be >= 0")


@dataclass
class SelectionConfig:
    min_comment_count: int = 0
    min_like_count: int = 0
    allowed_domains: frozenset[str] = frozenset()
    active_author_allowlist: frozenset[str] | None = None
    ad_marker_patterns: tuple[str, ...] = ()

    def validate(self) -> None:
        if self.min_comment_count < 0 or self.min_like_count < 0:
            raise CorpusError("selection thresholds must be >= 0")
        if any(not p for p in self.ad_marker_patterns):
            raise CorpusError("ad marker patterns must be nonempty strings")

    def accepts(self, post: RawPost) -> bool:
        if post.comment_count < self.min_comment_count:
            return False
        if post.like_count < self.min_like_count:
            return False
        if self.allowed_domains and post.domain_tag not in self.allowed_domains:
            return False
        if (
            self.active_author_allowlist is not None
            and post.author_id not in self.active_author_allowlist
        ):
            return False
        return not any(marker in post.text for marker in self.ad_marker_patterns)


@dataclass
class Document:
    doc_id: str
    raw_text: str
    tokens: tuple[str, ...]
    emoji_count: int
    source_post: str

    @property
    def token_count(self) -> int:
        return len(self.tokens)


@dataclass
class GoldRecord:
    doc_id: str
    label: int
    adjudication_round: int
    provenance: str  # unanimous_r1 | majority_r1 | majority_r2

    _ROUND_OF = {"unanimous_r1": 1, "majority_r1": 1, "majority_r2": 2}

    def validate(self) -> None:
        if self.label not in VALID_LABELS:
            raise CorpusError(f"gold label {self.label} outside {{-1, 0, +1}}")
        expected = self._ROUND_OF.get(self.provenance)
        if expected is None:
            raise CorpusError(f"unknown provenance {self.provenance!r}")
        if expected != self.adjudication_round:
            raise CorpusError(
                f"provenance {self.provenance} inconsistent with round "
                f"{self.adjudication_round}"
            )


@dataclass
class CorpusStats:
    class_counts: dict[int, int]
    length_histogram: dict[int, int]
    emoji_histogram: dict[int, int]
    mean_length_by_label: dict[int, float]
    skipped_unlabeled: int = 0

    def to_json(self) -> dict:
        return {
            "class_counts": {str(k): v for k, v in sorted(self.class_counts.items())},
            "length_histogram": {
                str(k): v for k, v in sorted(self.length_histogram.items())
            },
            "emoji_histogram": {
                str(k): v for k, v in sorted(self.emoji_histogram.items())
            },
            "mean_length_by_label": {
                str(k): v for k, v in sorted(self.mean_length_by_label.items())
            },
            "skipped_unlabeled": self.skipped_unlabeled,
        }


@dataclass
class IngestReport:
    accepted: int
    diagnostics: list[str] = field(default_factory=list)


def parse_timestamp(value: str) -> datetime:
    # RFC 3339 "Z" suffix is not accepted by 3.10's fromisoformat
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def post_from_json(obj: dict) -> RawPost:
    try:
        post = RawPost(
            id=str(obj["id"]),
            source=str(obj["source"]),
            text=str(obj["text"]),
            author_id=str(obj["author_id"]),
            timestamp=parse_timestamp(str(obj["timestamp"])),
            like_count=int(obj["like_count"]),
            comment_count=int(obj["comment_count"]),
            domain_tag=str(obj["domain_tag"]),
        )
    except KeyError as exc:
        raise CorpusError(f"missing key {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise CorpusError(str(exc)) from exc
    post.validate()
    return post


def escape_tsv(text: str) -> str:
    return (
        text.replace("\\", "\\\\")
        .replace("\t", "\\t")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def unescape_tsv(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            out.append({"t": "\t", "n": "\n", "r": "\r", "\\": "\\"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


class CorpusStore:
    """Append-only store for posts, documents, annotations, and gold labels.

    Single writer, many readers: `_lock` serializes every append, readers
    see whole records only (the log is flushed per record).
    """

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self.posts: dict[str, RawPost] = {}
        self.documents: dict[str, Document] = {}
        self.annotations: list = []  # annotation.Annotation, kept untyped here
        self.golds: dict[str, GoldRecord] = {}
        self.annotators: set[str] = set()
        self._replay()
        self._log = open(self.path, "a", encoding="utf-8")

    def close(self) -> None:
        self._log.close()

    # -- log plumbing ------------------------------------------------------

    def _replay(self) -> None:
        if not os.path.exists(self.path):
            parent = os.path.dirname(os.path.abspath(self.path))
            os.makedirs(parent, exist_ok=True)
            return
        from .annotation import Annotation  # cycle kept import-local

        with open(self.path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"{self.path}:{line_no}: corrupt record") from exc
                kind = rec.get("kind")
                if kind == "post":
                    post = post_from_json(rec["post"])
                    self.posts[post.id] = post
                elif kind == "document":
                    d = rec["document"]
                    self.documents[d["doc_id"]] = Document(
                        doc_id=d["doc_id"],
                        raw_text=d["raw_text"],
                        tokens=tuple(d["tokens"]),
                        emoji_count=d["emoji_count"],
                        source_post=d["source_post"],
                    )
                elif kind == "annotation":
                    self.annotations.append(Annotation.from_json(rec["annotation"]))
                elif kind == "gold":
                    g = rec["gold"]
                    gold = GoldRecord(
                        doc_id=g["doc_id"],
                        label=g["label"],
                        adjudication_round=g["adjudication_round"],
                        provenance=g["provenance"],
                    )
                    self.golds[gold.doc_id] = gold
                elif kind == "annotator":
                    self.annotators.add(rec["annotator_id"])
                else:
                    raise CorpusError(f"{self.path}:{line_no}: unknown kind {kind!r}")

    def _append(self, record: dict) -> None:
        self._log.write(json.dumps(record, ensure_ascii=False) + "\n")
        self._log.flush()
        os.fsync(self._log.fileno())

    # -- posts -------------------------------------------------------------

    def add_post(self, post: RawPost) -> None:
        post.validate()
        with self._lock:
            if post.id in self.posts:
                raise CorpusError(f"duplicate post id {post.id!r}")
            self._append(
                {
                    "kind": "post",
                    "post": {
                        "id": post.id,
                        "source": post.source,
                        "text": post.text,
                        "author_id": post.author_id,
                        "timestamp": post.timestamp.isoformat(),
                        "like_count": post.like_count,
                        "comment_count": post.comment_count,
                        "domain_tag": post.domain_tag,
                    },
                }
            )
            self.posts[post.id] = post

    def ingest(self, path: str, fmt: str = "jsonl") -> IngestReport:
        """Load posts from a JSONL file; bad lines are reported, not fatal."""
        if fmt != "jsonl":
            raise CorpusError(f"unsupported ingest format {fmt!r}")
        report = IngestReport(accepted=0)
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    if not isinstance(obj, dict):
                        raise CorpusError("record is not an object")
                    post = post_from_json(obj)
                    self.add_post(post)
                except (json.JSONDecodeError, CorpusError) as exc:
                    report.diagnostics.append(f"{path}:{line_no}: {exc}")
                    continue
                report.accepted += 1
        return report

    def select(self, config: SelectionConfig) -> list[RawPost]:
        config.validate()
        return [
            post
            for _, post in sorted(self.posts.items())
            if config.accepts(post)
        ]

    # -- documents / annotations / gold -------------------------------------

    def add_document(self, doc: Document) -> None:
        with self._lock:
            if doc.doc_id in self.documents:
                raise CorpusError(f"duplicate doc id {doc.doc_id!r}")
            self._append(
                {
                    "kind": "document",
                    "document": {
                        "doc_id": doc.doc_id,
                        "raw_text": doc.raw_text,
                        "tokens": list(doc.tokens),
                        "emoji_count": doc.emoji_count,
                        "source_post": doc.source_post,
                    },
                }
            )
            self.documents[doc.doc_id] = doc

    def add_annotator(self, annotator_id: str) -> None:
        if not annotator_id:
            raise CorpusError("annotator id must be nonempty")
        with self._lock:
            if annotator_id in self.annotators:
                return
            self._append({"kind": "annotator", "annotator_id": annotator_id})
            self.annotators.add(annotator_id)

    def add_annotation(self, annotation) -> None:
        with self._lock:
            self._append({"kind": "annotation", "annotation": annotation.to_json()})
            self.annotations.append(annotation)

    def add_gold(self, gold: GoldRecord) -> None:
        gold.validate()
        with self._lock:
            if gold.doc_id in self.golds:
                raise CorpusError(f"doc {gold.doc_id!r} already adjudicated")
            self._append(
                {
                    "kind": "gold",
                    "gold": {
                        "doc_id": gold.doc_id,
                        "label": gold.label,
                        "adjudication_round": gold.adjudication_round,
                        "provenance": gold.provenance,
                    },
                }
            )
            self.golds[gold.doc_id] = gold

    def labeled_corpus(self) -> list[tuple[Document, GoldRecord]]:
        return [
            (self.documents[doc_id], gold)
            for doc_id, gold in sorted(self.golds.items())
            if doc_id in self.documents
        ]


def compute_stats(
    corpus: list[tuple[Document, GoldRecord | None]]
) -> CorpusStats:
    """Class balance, length and emoji histograms, and mean length per label.

    Documents without a gold record are skipped and counted.
    """
    class_counts: dict[int, int] = {}
    length_histogram: dict[int, int] = {}
    emoji_histogram: dict[int, int] = {}
    length_sums: dict[int, int] = {}
    skipped = 0
    for doc, gold in corpus:
        if gold is None:
            skipped += 1
            continue
        class_counts[gold.label] = class_counts.get(gold.label, 0) + 1
        length_histogram[doc.token_count] = (
            length_histogram.get(doc.token_count, 0) + 1
        )
        emoji_histogram[doc.emoji_count] = emoji_histogram.get(doc.emoji_count, 0) + 1
        length_sums[gold.label] = length_sums.get(gold.label, 0) + doc.token_count
    means = {
        label: length_sums[label] / class_counts[label] for label in length_sums
    }
    return CorpusStats(
        class_counts=class_counts,
        length_histogram=length_histogram,
        emoji_histogram=emoji_histogram,
        mean_length_by_label=means,
        skipped_unlabeled=skipped,
    )


def export_tsv(
    corpus: list[tuple[Document, GoldRecord]], path: str
) -> int:
    """Write one `doc_id<TAB>label<TAB>raw_text` line per gold record.

    Tabs, newlines, and backslashes in the text are backslash-escaped so the
    file round-trips losslessly through read_labeled_tsv.
    """
    written = 0
    with open(path, "w", encoding="utf-8") as fh:
        for doc, gold in corpus:
            fh.write(
                f"{escape_tsv(doc.doc_id)}\t{gold.label}\t{escape_tsv(doc.raw_text)}\n"
            )
            written += 1
    return written


def read_labeled_tsv(path: str) -> list[tuple[str, int, str]]:
    """Read an exported corpus back as (doc_id, label, raw_text) rows."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusError(f"{path}:{line_no}: expected 3 tab-separated fields")
            doc_id, label_text, text = parts
            try:
                label = int(label_text)
            except ValueError as exc:
                raise CorpusError(f"{path}:{line_no}: bad label {label_text!r}") from exc
            if label not in VALID_LABELS:
                raise CorpusError(f"{path}:{line_no}: label {label} outside {{-1,0,+1}}")
            rows.append((unescape_tsv(doc_id), label, unescape_tsv(text)))
    return rows
