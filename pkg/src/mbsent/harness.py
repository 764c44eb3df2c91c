"""Experiment plumbing: splits, metrics, model comparison, synthetic data.

The split is 90/6/4 by default with the rounding remainder going to train.
Metrics come straight off a 3x3 confusion matrix (rows gold, columns
predicted, class order -1, 0, +1); macro values are unweighted means and a
zero denominator yields 0 rather than NaN.

``compare`` runs an architecture x embedding grid, one JSON file per cell,
and is resumable: completed cells are skipped on rerun, failed cells are
recomputed.
"""

import csv
import json
import os
import re
from dataclasses import dataclass

import numpy as np

from . import embeddings, models


class HarnessError(Exception):
    pass


LABELS = (-1, 0, 1)


@dataclass(frozen=True)
class LabeledExample:
    doc_id: str
    tokens: tuple
    label: int

    def __post_init__(self):
        if self.label not in LABELS:
            raise HarnessError(f"label must be one of {LABELS}, got {self.label!r}")


@dataclass
class SplitSpec:
    train_fraction: float = 0.90
    test_fraction: float = 0.06
    val_fraction: float = 0.04
    seed: int = 0
    stratified: bool = True

    def validate(self):
        total = self.train_fraction + self.test_fraction + self.val_fraction
        if abs(total - 1.0) > 1e-9:
            raise HarnessError(f"split fractions sum to {total}, expected 1")
        for f in (self.train_fraction, self.test_fraction, self.val_fraction):
            if not 0.0 <= f <= 1.0:
                raise HarnessError(f"split fraction {f} outside [0, 1]")


def _label_of(example):
    if hasattr(example, "label"):
        return example.label
    return example[1]


def _part_size(n_total, fraction):
    # a nonzero fraction always claims at least one item
    if fraction <= 0.0:
        return 0
    return max(1, round(n_total * fraction))


def _allocate(counts, total):
    """Largest-remainder apportionment of ``total`` over class counts."""
    n = sum(counts.values())
    shares = {c: counts[c] * total / n for c in counts}
    alloc = {c: min(int(shares[c]), counts[c]) for c in counts}
    order = sorted(counts, key=lambda c: (-(shares[c] % 1.0), str(c)))
    assigned = sum(alloc.values())
    i = 0
    while assigned < total:
        c = order[i % len(order)]
        if alloc[c] < counts[c]:
            alloc[c] += 1
            assigned += 1
        i += 1
    return alloc


def split(examples, spec):
    """Partition into (train, test, val), disjoint and exhaustive.

    Stratified mode apportions each class by largest remainder so the
    global test/val sizes are hit exactly while every class stays within
    one item of its proportional share. Output order follows the input.
    """
    spec.validate()
    examples = list(examples)
    n = len(examples)
    if n < 10:
        raise HarnessError(f"corpus of {n} items is too small to split (need >= 10)")
    test_n = _part_size(n, spec.test_fraction)
    val_n = _part_size(n, spec.val_fraction)
    if test_n + val_n >= n:
        raise HarnessError("split leaves no training items")
    rng = np.random.default_rng(spec.seed)

    test_idx, val_idx = set(), set()
    if spec.stratified:
        by_class = {}
        for i, ex in enumerate(examples):
            by_class.setdefault(_label_of(ex), []).append(i)
        counts = {c: len(ids) for c, ids in by_class.items()}
        test_alloc = _allocate(counts, test_n)
        remaining = {c: counts[c] - test_alloc[c] for c in counts}
        val_alloc = _allocate(remaining, val_n)
        for c in sorted(by_class, key=str):
            ids = np.array(by_class[c])
            rng.shuffle(ids)
            t = test_alloc[c]
            v = val_alloc[c]
            test_idx.update(ids[:t].tolist())
            val_idx.update(ids[t : t + v].tolist())
    else:
        perm = rng.permutation(n)
        test_idx.update(perm[:test_n].tolist())
        val_idx.update(perm[test_n : test_n + val_n].tolist())

    train, test, val = [], [], []
    for i, ex in enumerate(examples):
        if i in test_idx:
            test.append(ex)
        elif i in val_idx:
            val.append(ex)
        else:
            train.append(ex)
    return train, test, val


@dataclass
class MetricsReport:
    confusion: np.ndarray
    accuracy: float
    precision: tuple
    recall: tuple
    f1: tuple
    macro_precision: float
    macro_recall: float
    macro_f1: float

    @classmethod
    def from_confusion(cls, confusion):
        cm = np.asarray(confusion, dtype=np.int64)
        if cm.shape != (3, 3) or (cm < 0).any():
            raise HarnessError("confusion matrix must be 3x3 with nonnegative counts")
        total = int(cm.sum())
        if total == 0:
            raise HarnessError("empty confusion matrix")
        diag = np.diag(cm)
        prec, rec, f1 = [], [], []
        for c in range(3):
            col = cm[:, c].sum()
            row = cm[c, :].sum()
            p = diag[c] / col if col else 0.0
            r = diag[c] / row if row else 0.0
            f = 2 * p * r / (p + r) if (p + r) else 0.0
            prec.append(float(p))
            rec.append(float(r))
            f1.append(float(f))
        return cls(
            confusion=cm,
            accuracy=float(diag.sum() / total),
            precision=tuple(prec),
            recall=tuple(rec),
            f1=tuple(f1),
            macro_precision=float(np.mean(prec)),
            macro_recall=float(np.mean(rec)),
            macro_f1=float(np.mean(f1)),
        )

    def to_json(self):
        return {
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            "precision": list(self.precision),
            "recall": list(self.recall),
            "f1": list(self.f1),
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }


def evaluate(model, dataset, table=None):
    """MetricsReport for a labeled dataset.

    With ``table`` the dataset is LabeledExamples and gets encoded here;
    without it the dataset must already be (DocumentMatrix, label) pairs.
    """
    if not dataset:
        raise HarnessError("cannot evaluate on an empty dataset")
    if table is not None:
        dataset = encode_dataset(dataset, table, model.config.padded_length)
    cm = np.zeros((3, 3), dtype=np.int64)
    cls_of = {label: i for i, label in enumerate(LABELS)}
    for dm, label in dataset:
        pred, _p = models.predict_encoded(model, dm)
        cm[cls_of[label], cls_of[pred]] += 1
    return MetricsReport.from_confusion(cm)


def encode_dataset(examples, table, padded_length):
    """LabeledExamples -> (DocumentMatrix, label) pairs."""
    return [
        (embeddings.encode(table, list(ex.tokens), padded_length), ex.label)
        for ex in examples
    ]


def _cell_filename(architecture, embedding_label):
    safe = re.sub(r"[^A-Za-z0-9_.-]", "_", embedding_label)
    return f"cell_{architecture}_{safe}.json"


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def compare(
    cells,
    examples,
    tables,
    out_dir,
    spec=None,
    clock="wall",
    padded_length=None,
    overrides=None,
):
    """Train/evaluate an (architecture, embedding label) grid.

    Writes one JSON per cell plus comparison.csv and timing.csv. A cell
    that raises is recorded as failed and the grid continues; rerunning
    recomputes only failed or missing cells. Returns the cell summaries
    in grid order.
    """
    spec = spec or SplitSpec()
    overrides = overrides or {}
    os.makedirs(out_dir, exist_ok=True)
    for _arch, label in cells:
        if label not in tables:
            raise HarnessError(f"no embedding table for label {label!r}")
    train_ex, test_ex, val_ex = split(examples, spec)
    if padded_length is None:
        padded_length = embeddings.padded_length_for(
            [len(ex.tokens) for ex in examples]
        )

    results = []
    for architecture, emb_label in cells:
        cell_path = os.path.join(out_dir, _cell_filename(architecture, emb_label))
        if os.path.exists(cell_path):
            try:
                with open(cell_path, encoding="utf-8") as fh:
                    prior = json.load(fh)
            except (OSError, json.JSONDecodeError):
                prior = None
            if prior and prior.get("status") == "ok":
                results.append(prior)
                continue
        cell = {
            "architecture": architecture,
            "embedding_label": emb_label,
            "status": "failed",
            "f1_macro": None,
            "accuracy": None,
            "mean_epoch_seconds": None,
            "epoch_seconds": [],
            "error": None,
        }
        try:
            table = tables[emb_label]
            config = models.ModelConfig.default(
                architecture,
                padded_length,
                table.dim,
                seed=spec.seed,
                **overrides.get(architecture, {}),
            )
            model = models.build(config)
            enc_train = encode_dataset(train_ex, table, padded_length)
            enc_val = encode_dataset(val_ex, table, padded_length)
            trace = models.train(model, enc_train, enc_val, clock=clock)
            report = evaluate(model, test_ex, table)
            secs = [e.seconds for e in trace.epochs]
            cell.update(
                status="ok",
                f1_macro=report.macro_f1,
                accuracy=report.accuracy,
                mean_epoch_seconds=float(np.mean(secs)),
                epoch_seconds=secs,
            )
        except Exception as exc:
            cell["error"] = f"{type(exc).__name__}: {exc}"
        with open(cell_path, "w", encoding="utf-8") as fh:
            json.dump(cell, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
        results.append(cell)

    comparison_rows = [
        (
            c["architecture"],
            c["embedding_label"],
            "" if c["f1_macro"] is None else repr(c["f1_macro"]),
            "" if c["accuracy"] is None else repr(c["accuracy"]),
            "" if c["mean_epoch_seconds"] is None else repr(c["mean_epoch_seconds"]),
        )
        for c in results
    ]
    _write_csv(
        os.path.join(out_dir, "comparison.csv"),
        ("architecture", "embedding_label", "f1_macro", "accuracy", "mean_epoch_seconds"),
        comparison_rows,
    )
    timing_rows = [
        (c["architecture"], c["embedding_label"], epoch + 1, repr(s))
        for c in results
        for epoch, s in enumerate(c["epoch_seconds"])
    ]
    _write_csv(
        os.path.join(out_dir, "timing.csv"),
        ("architecture", "embedding_label", "epoch", "seconds"),
        timing_rows,
    )
    return results


def write_trace_csv(trace, path):
    """Per-epoch training trace (loss/accuracy curves, seconds per epoch)."""
    rows = [
        (
            i + 1,
            repr(e.train_loss),
            repr(e.train_accuracy),
            "" if e.val_loss is None else repr(e.val_loss),
            "" if e.val_accuracy is None else repr(e.val_accuracy),
            repr(e.seconds),
        )
        for i, e in enumerate(trace.epochs)
    ]
    _write_csv(
        path, ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds"), rows
    )


_CONSONANTS = "bdfgklmnprst"
_VOWELS = "aeiou"
_KEYWORDS = {-1: "zur", 0: "zam", 1: "zil"}


def _filler_name(i):
    # consonant-vowel syllables: pronounceable, no repeated characters runs,
    # and never contains 'z' so keywords cannot collide
    out = []
    for _ in range(3):
        out.append(_CONSONANTS[i % len(_CONSONANTS)])
        i //= len(_CONSONANTS)
        out.append(_VOWELS[i % len(_VOWELS)])
        i //= len(_VOWELS)
    return "".join(out)


def synth_corpus(num_docs, vocab_size, seed, dim=16, min_len=4, max_len=9):
    """A linearly separable toy corpus plus a matching embedding table.

    Each document is filler tokens plus exactly one class keyword; classes
    are assigned round-robin so they stay balanced. Vectors are seeded
    standard normals, so any correct model can memorize the mapping.
    """
    if num_docs < 9:
        raise HarnessError("synthetic corpus needs at least 9 documents")
    if vocab_size < 1:
        raise HarnessError("vocab_size must be >= 1")
    rng = np.random.default_rng(seed)
    fillers = [_filler_name(i) for i in range(vocab_size)]
    vocab = fillers + [_KEYWORDS[c] for c in LABELS]
    word_vectors = {w: rng.normal(0.0, 0.6, size=dim) for w in vocab}
    table = embeddings.EmbeddingTable(dim=dim, word_vectors=word_vectors, ngram_vectors={})

    examples = []
    for i in range(num_docs):
        label = LABELS[i % 3]
        length = int(rng.integers(min_len, max_len + 1))
        tokens = [fillers[int(j)] for j in rng.integers(0, vocab_size, size=length - 1)]
        slot = int(rng.integers(0, length))
        tokens.insert(slot, _KEYWORDS[label])
        examples.append(LabeledExample(doc_id=f"synth-{i:05d}", tokens=tuple(tokens), label=label))
    return examples, table
