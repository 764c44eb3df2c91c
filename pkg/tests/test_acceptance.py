"""Acceptance gate: one test per top-level guarantee, each with its own
runtime budget.

Oracles here are deliberately self-contained reimplementations (plain loops,
no shared code with the package) so a defect cannot hide in both sides.
Run with -v for the per-criterion pass/fail lines.
"""

import itertools
import json
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pytest

from mbsent import embeddings, harness, models, normalize
from mbsent.annotation import AdjudicationConfig, Annotation, Verdict, adjudicate, fleiss_kappa
from mbsent.embeddings import EmbeddingTable
from mbsent.harness import SplitSpec
from mbsent.layers import (
    Bidirectional,
    Conv1D,
    Dense,
    GlobalMaxPool,
    GRULayer,
    LSTMLayer,
    ReLU,
    gradient_check,
    softmax_cross_entropy,
)

GOLDEN = Path(__file__).parent / "data" / "normalizer_golden.jsonl"

# proven toy shapes: d=8, L=10, hidden <= 8, filters <= 4
TOY_SHAPES = {
    "cnn": {"filters": 4, "filter_size": 3},
    "lstm": {"hidden_dims": (6, 4)},
    "cnn_gru": {"filters": 4, "filter_size": 3, "hidden_dims": (5,)},
    "bigru": {"hidden_dims": (4,)},
    "bilstm": {"hidden_dims": (4,)},
}


class budget:
    """Context manager asserting the block stays under a wall-time limit."""

    def __init__(self, seconds):
        self.limit = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.elapsed = time.perf_counter() - self.t0
        if exc_type is None:
            assert self.elapsed < self.limit, (
                f"took {self.elapsed:.2f}s, budget {self.limit}s"
            )
        return False


# -- agreement oracle ----------------------------------------------------------


def kappa_textbook(matrix):
    rows = [list(map(float, row)) for row in matrix]
    n_items = len(rows)
    n_raters = sum(rows[0])
    k = len(rows[0])
    p_item = []
    for row in rows:
        s = sum(c * (c - 1) for c in row)
        p_item.append(s / (n_raters * (n_raters - 1)))
    p_bar = sum(p_item) / n_items
    p_e = 0.0
    for j in range(k):
        share = sum(row[j] for row in rows) / (n_items * n_raters)
        p_e += share * share
    if p_e == 1.0:
        return None
    return (p_bar - p_e) / (1.0 - p_e)


def test_primary_agreement_oracle():
    with budget(5.0) as b:
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(200):
            n_raters = int(rng.integers(2, 7))
            n_items = int(rng.integers(1, 51))
            k = int(rng.integers(2, 6))
            matrix = np.zeros((n_items, k), dtype=int)
            for i in range(n_items):
                votes = rng.integers(0, k, size=n_raters)
                for v in votes:
                    matrix[i, v] += 1
            expected = kappa_textbook(matrix.tolist())
            got = fleiss_kappa(matrix.tolist())
            if expected is None:
                assert got is None
            else:
                worst = max(worst, abs(got - expected))
        assert worst < 1e-12

        unanimous = [[3, 0, 0], [0, 3, 0], [0, 0, 3]]
        assert fleiss_kappa(unanimous) == 1.0
        assert abs(fleiss_kappa([[3, 0, 0], [2, 0, 1]]) - (-0.2)) < 1e-12
        assert fleiss_kappa([[3, 0, 0], [3, 0, 0]]) is None
    print(f"[PASS] agreement oracle: 200 matrices, max |err| {worst:.2e}, "
          f"{b.elapsed:.2f}s")


# -- normalizer golden suite ----------------------------------------------------


RULE_FAMILIES = {
    "emoji naming": ("emoji_",),
    "noise removal": ("url_", "mention_", "hashtag_", "number_", "datetime_"),
    "character normalization": ("arabic_", "tatweel", "diacritics", "mixed_arabic"),
    "punctuation removal": ("persian_punct", "latin_punct", "zwnj_", "underscore", "symbols"),
    "de-elongation": ("elong_",),
}

_FUZZ_PARTS = (
    "سلام", "عالییییی", "خیییلی", "نههههه", "هههههه", "cooool", "بد",
    "قیمت", "کیفیت", "می‌خواهم", "‌لبه‌", "يك", "كتاب",
    "مدرســـه", "اَسب", "دوست‌داشتنی", "😊", "🌹🌹🌹", "❤️", "😂😂",
    "\U0001FAE0", "@user_55", "#کتاب", "#fun", "http://t.co/x1",
    "https://a.io/p?q=1", "www.site.ir", "۲۵۰۰۰", "١٢٣", "42", "3.14",
    "2021/03/01", "14:30", "1400-01-01", "!!!", "؟؟؟", "،", "...", "_",
    "(خوب)", "\"نقل\"", "a.b", "سلاام",
)


def fuzz_text(rng):
    n = int(rng.integers(1, 9))
    parts = [_FUZZ_PARTS[int(rng.integers(0, len(_FUZZ_PARTS)))] for _ in range(n)]
    sep = [" ", "  ", "", "\t"][int(rng.integers(0, 4))]
    return sep.join(parts)


def test_primary_normalizer_golden_suite():
    with budget(10.0) as b:
        inv = normalize.EmojiInventory.default()
        rows = [
            json.loads(line)
            for line in GOLDEN.read_text(encoding="utf-8").splitlines()
        ]
        assert len(rows) >= 40

        tags = [r["tag"] for r in rows]
        for family, prefixes in RULE_FAMILIES.items():
            assert any(t.startswith(p) for t in tags for p in prefixes), family
        assert sum(t.startswith("tbl1_") for t in tags) == 4

        for row in rows:
            report = normalize.normalize(row["text"], inv)
            got = [t.encode("utf-8") for t in report.tokens]
            want = [t.encode("utf-8") for t in row["tokens"]]
            assert got == want, row["tag"]
            again = normalize.normalize(" ".join(report.tokens), inv)
            assert again.tokens == report.tokens, row["tag"]

        rng = np.random.default_rng(23)
        for _ in range(10_000):
            text = fuzz_text(rng)
            first = normalize.normalize(text, inv).tokens
            second = normalize.normalize(" ".join(first), inv).tokens
            assert second == first, text
    print(f"[PASS] normalizer golden suite: {len(rows)} fixtures byte-exact, "
          f"idempotent on 10000 fuzz inputs, {b.elapsed:.2f}s")


# -- gradient checks -------------------------------------------------------------


def layer_compositions(rng):
    """One loss_fn + params per layer kind, at toy scale."""
    d, L = 8, 10

    def ce(fwd, bwd, label):
        def loss_fn():
            loss, _, dlogits = softmax_cross_entropy(fwd(), label)
            bwd(dlogits)
            return loss
        return loss_fn

    out = []

    dense = Dense(d, 3, rng)
    x = rng.normal(size=d)
    out.append(("dense", ce(lambda: dense.forward(x), dense.backward, 0),
                dense.params()))

    conv = Conv1D(4, 3, d, rng)
    relu = ReLU()
    pool = GlobalMaxPool()
    conv_head = Dense(4, 3, rng)
    X1 = rng.normal(size=(L, d))
    out.append((
        "conv_relu_pool",
        ce(lambda: conv_head.forward(pool.forward(relu.forward(conv.forward(X1)))),
           lambda dl: conv.backward(relu.backward(pool.backward(conv_head.backward(dl)))),
           1),
        conv.params() + conv_head.params(),
    ))

    for name, cls in (("lstm", LSTMLayer), ("gru", GRULayer)):
        layer = cls(d, 6, rng)
        head = Dense(6, 3, rng)
        X2 = rng.normal(size=(L, d))
        out.append((
            name,
            ce(lambda layer=layer, head=head, X2=X2: head.forward(layer.forward(X2, L)),
               lambda dl, layer=layer, head=head: layer.backward(head.backward(dl)),
               2),
            layer.params() + head.params(),
        ))

        seq = cls(d, 5, rng, return_sequences=True)
        R = rng.normal(size=(L, 5))
        X3 = rng.normal(size=(L, d))

        def seq_loss(seq=seq, R=R, X3=X3):
            outp = seq.forward(X3, L)
            seq.backward(R)
            return float((outp * R).sum())

        out.append((f"{name}_sequences", seq_loss, seq.params()))

    bi = Bidirectional(GRULayer(d, 4, rng), GRULayer(d, 4, rng))
    bi_head = Dense(8, 3, rng)
    X4 = rng.normal(size=(L, d))
    out.append((
        "bidirectional",
        ce(lambda: bi_head.forward(bi.forward(X4, L)),
           lambda dl: bi.backward(bi_head.backward(dl)),
           0),
        bi.params() + bi_head.params(),
    ))
    return out


def test_primary_gradient_checks():
    with budget(60.0) as b:
        worst_layers = 0.0
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            for name, loss_fn, params in layer_compositions(rng):
                err = gradient_check(loss_fn, params)
                assert err < 1e-4, (name, seed, err)
                worst_layers = max(worst_layers, err)

        d, L = 8, 10
        worst_archs = 0.0
        for seed in range(20):
            rng = np.random.default_rng(2000 + seed)
            X = rng.normal(size=(L, d))
            label = (-1, 0, 1)[seed % 3]
            for arch, shape in TOY_SHAPES.items():
                config = models.ModelConfig.default(arch, L, d, seed=seed, **shape)
                model = models.build(config)
                err = models.model_gradient_check(model, X, L, label)
                assert err < 1e-4, (arch, seed, err)
                worst_archs = max(worst_archs, err)
    print(f"[PASS] gradient checks: layers max {worst_layers:.2e}, "
          f"architectures max {worst_archs:.2e} over 20 seeds, {b.elapsed:.1f}s")


# -- overfit oracle ---------------------------------------------------------------


def overfit_run(arch, overrides, examples, table, seed=0):
    train_ex, test_ex, _val = harness.split(examples, SplitSpec(seed=seed))
    config = models.ModelConfig.default(arch, 9, table.dim, seed=seed, **overrides)
    model = models.build(config)
    enc_train = harness.encode_dataset(train_ex, table, config.padded_length)
    trace = models.train(model, enc_train, clock="none")
    best_train = max(e.train_accuracy for e in trace.epochs)
    test_report = harness.evaluate(model, test_ex, table)
    return best_train, test_report.accuracy


def test_primary_overfit_oracle():
    with budget(180.0) as b:
        examples, table = harness.synth_corpus(200, 50, 7)

        cnn_train, cnn_test = overfit_run(
            "cnn", {"filters": 16, "epochs": 30, "batch_size": 16,
                    "learning_rate": 0.01}, examples, table,
        )
        assert cnn_train >= 0.99, cnn_train
        assert cnn_test >= 0.90, cnn_test

        lstm_train, _ = overfit_run(
            "lstm", {"hidden_dims": (16, 8), "epochs": 10, "batch_size": 16,
                     "learning_rate": 0.01}, examples, table,
        )
        assert lstm_train >= 0.95, lstm_train

        bigru_train, _ = overfit_run(
            "bigru", {"hidden_dims": (12,), "epochs": 10, "batch_size": 16,
                      "learning_rate": 0.01}, examples, table,
        )
        assert bigru_train >= 0.95, bigru_train
    print(f"[PASS] overfit oracle: cnn train {cnn_train:.3f} test {cnn_test:.3f}, "
          f"lstm {lstm_train:.3f}, bigru {bigru_train:.3f}, {b.elapsed:.1f}s")


# -- protocol exactness ------------------------------------------------------------


TS = datetime(2021, 3, 1, tzinfo=timezone.utc)
CFG3 = AdjudicationConfig(annotators_per_item=3, probe_fraction=0.0)


def votes_to_annotations(votes, rnd=1):
    return [Annotation(f"a{i}", "d", lab, rnd, TS, False)
            for i, lab in enumerate(votes)]


def test_primary_protocol_exactness():
    examples = [
        harness.LabeledExample(f"d{i:04d}", ("tok",), (-1, 0, 1)[i % 3])
        for i in range(1000)
    ]
    train, test, val = harness.split(examples, SplitSpec())
    assert (len(train), len(test), len(val)) == (900, 60, 40)
    ids = {ex.doc_id for ex in train} | {ex.doc_id for ex in test} | {ex.doc_id for ex in val}
    assert len(ids) == 1000

    assert models.LABEL_TO_CLASS == {-1: 0, 0: 1, 1: 2}
    assert models.CLASS_TO_LABEL == {v: k for k, v in models.LABEL_TO_CLASS.items()}
    config = models.ModelConfig.default("cnn", 10, 8, seed=0, **TOY_SHAPES["cnn"])
    model = models.build(config)
    rng = np.random.default_rng(0)
    label, probs = models.predict_encoded(
        model, embeddings.DocumentMatrix(rng.normal(size=(10, 8)), 10)
    )
    assert probs.shape == (3,)
    assert label == models.CLASS_TO_LABEL[int(np.argmax(probs))]

    # round 1, exhaustive over 3 raters x 3 labels
    for votes in itertools.product((-1, 0, 1), repeat=3):
        result = adjudicate("d", votes_to_annotations(votes), CFG3)
        top = max(votes.count(lab) for lab in (-1, 0, 1))
        if top == 3:
            assert result.verdict == Verdict.GOLD
            assert result.gold.provenance == "unanimous_r1"
        elif top == 2:
            assert result.verdict == Verdict.GOLD
            assert result.gold.provenance == "majority_r1"
            assert votes.count(result.gold.label) == 2
        else:
            assert result.verdict == Verdict.NEEDS_ROUND2

    # round 2 after a three-way round-1 split
    for votes in itertools.product((-1, 0, 1), repeat=3):
        anns = votes_to_annotations((-1, 0, 1))
        anns += votes_to_annotations(votes, rnd=2)
        result = adjudicate("d", anns, CFG3)
        top = max(votes.count(lab) for lab in (-1, 0, 1))
        if top >= 2:
            assert result.verdict == Verdict.GOLD
            assert result.gold.provenance == "majority_r2"
            assert votes.count(result.gold.label) == top
        else:
            assert result.verdict == Verdict.REMOVED
    print("[PASS] protocol exactness: split 900/60/40, class order (-1,0,1)->(0,1,2), "
          "adjudication table exhaustive")


# -- OOV composition ----------------------------------------------------------------


def oov_brute(table, token):
    wrapped = f"<{token}>"
    total = np.zeros(table.dim)
    for length in range(table.ngram_min, table.ngram_max + 1):
        for start in range(len(wrapped) - length + 1):
            vec = table.ngram_vectors.get(wrapped[start:start + length])
            if vec is not None:
                total = total + vec
    return total


def test_primary_oov_composition():
    rng = np.random.default_rng(31)
    alphabet = "abcde"
    worst = 0.0
    for _ in range(1000):
        dim = int(rng.integers(1, 5))
        nmin = int(rng.integers(2, 4))
        nmax = nmin + int(rng.integers(0, 3))
        grams = {}
        for _ in range(int(rng.integers(1, 30))):
            length = int(rng.integers(nmin, nmax + 1))
            gram = "".join(rng.choice(list(alphabet + "<>"), size=length))
            grams[gram] = rng.normal(size=dim)
        table = EmbeddingTable(
            dim=dim, word_vectors={"known": rng.normal(size=dim)},
            ngram_vectors=grams, ngram_min=nmin, ngram_max=nmax,
        )
        token = "".join(rng.choice(list(alphabet), size=int(rng.integers(1, 8))))
        got = embeddings.lookup(table, token)
        want = oov_brute(table, token)
        worst = max(worst, float(np.max(np.abs(got - want))) if got.size else 0.0)
        assert np.allclose(got, want, atol=1e-9)
        assert embeddings.lookup(table, "known") is table.word_vectors["known"]
    print(f"[PASS] OOV composition: 1000 tables, max |err| {worst:.2e}")


# -- determinism ---------------------------------------------------------------------


def train_artifacts(out_dir, tag):
    examples, table = harness.synth_corpus(30, 8, 2, dim=6)
    train_ex, _test, val_ex = harness.split(examples, SplitSpec(seed=1))
    config = models.ModelConfig.default(
        "cnn", 9, 6, seed=1, filters=4, filter_size=3, epochs=2, batch_size=8,
    )
    model = models.build(config)
    enc_train = harness.encode_dataset(train_ex, table, config.padded_length)
    enc_val = harness.encode_dataset(val_ex, table, config.padded_length)
    trace = models.train(model, enc_train, enc_val, clock="none")
    ckpt = out_dir / f"{tag}.checkpoint.json"
    csvp = out_dir / f"{tag}.trace.csv"
    models.save_checkpoint(model, str(ckpt), table.fingerprint())
    harness.write_trace_csv(trace, str(csvp))
    return ckpt.read_bytes(), csvp.read_bytes()


def compare_artifacts(out_dir):
    examples, table = harness.synth_corpus(30, 8, 2, dim=6)
    cells = [("cnn", "toy"), ("bigru", "toy")]
    overrides = {
        "cnn": {"filters": 4, "filter_size": 3, "epochs": 1, "batch_size": 8},
        "bigru": {"hidden_dims": (4,), "epochs": 1, "batch_size": 8},
    }
    harness.compare(
        cells, examples, {"toy": table}, str(out_dir),
        spec=SplitSpec(seed=1), clock="none", overrides=overrides,
    )
    return {
        p.name: p.read_bytes()
        for p in sorted(out_dir.iterdir())
        if p.suffix in (".csv", ".json")
    }


def test_primary_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    ckpt1, trace1 = train_artifacts(a, "run")
    ckpt2, trace2 = train_artifacts(b, "run")
    assert ckpt1 == ckpt2
    assert trace1 == trace2

    ca, cb = tmp_path / "ca", tmp_path / "cb"
    files1 = compare_artifacts(ca)
    files2 = compare_artifacts(cb)
    assert files1.keys() == files2.keys()
    assert set(files1) >= {"comparison.csv", "timing.csv"}
    for name in files1:
        assert files1[name] == files2[name], name
    print("[PASS] determinism: train checkpoint+trace and compare CSVs "
          "bitwise-identical across reruns")


# -- comparison grid -----------------------------------------------------------------


def test_primary_comparison_grid(tmp_path):
    with budget(600.0) as b:
        examples, table = harness.synth_corpus(60, 10, 5, dim=8)
        archs = list(models.ARCHITECTURES)
        cells = [(arch, "toy") for arch in archs]
        overrides = {
            arch: {**TOY_SHAPES[arch], "epochs": 2, "batch_size": 16}
            for arch in archs
        }
        results = harness.compare(
            cells, examples, {"toy": table}, str(tmp_path),
            spec=SplitSpec(seed=3), clock="none", overrides=overrides,
        )
        assert [c["status"] for c in results] == ["ok"] * 5

        comparison = (tmp_path / "comparison.csv").read_text(encoding="utf-8")
        lines = comparison.splitlines()
        assert len(lines) == 6
        for line in lines[1:]:
            fields = line.split(",")
            assert len(fields) == 5
            assert all(fields), line
        assert [line.split(",")[0] for line in lines[1:]] == archs

        timing = (tmp_path / "timing.csv").read_text(encoding="utf-8").splitlines()
        assert len(timing) == 1 + 5 * 2
    print(f"[PASS] comparison grid: 5 architectures x 1 embedding, "
          f"no failed cells, {b.elapsed:.1f}s")
