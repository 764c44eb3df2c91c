"""Command line front end.

Exit codes: 0 success, 1 usage error (bad flags, unknown subcommand),
2 data error (unreadable or malformed files, protocol violations).

Subcommands cover the whole workflow: ingest raw posts, select and
normalize them into documents, run the annotation service, adjudicate,
inspect agreement and corpus statistics, train and evaluate classifiers,
run the architecture x embedding comparison grid, predict single texts,
export the labeled corpus, and generate the synthetic benchmark corpus.
"""

import argparse
import json
import os
import sys

from . import annotation, corpus, embeddings, harness, models, normalize
from .annotation import AdjudicationConfig, AnnotationEngine, AnnotationError
from .corpus import CorpusError, CorpusStore, Document, SelectionConfig
from .embeddings import EmbeddingFormatError
from .harness import HarnessError, LabeledExample, SplitSpec
from .models import ModelError

DATA_ERRORS = (
    CorpusError,
    AnnotationError,
    EmbeddingFormatError,
    ModelError,
    HarnessError,
)


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class _Formatter(argparse.ArgumentDefaultsHelpFormatter, argparse.RawDescriptionHelpFormatter):
    pass


def _arch_defaults_table():
    lines = ["architecture defaults:"]
    header = f"  {'arch':8} {'filters':>7} {'size':>4} {'hidden':>10} {'dropout':>14} {'lr':>6} {'epochs':>6} {'batch':>5}"
    lines.append(header)
    for arch in models.ARCHITECTURES:
        d = models.ARCH_DEFAULTS[arch]
        lines.append(
            f"  {arch:8} {str(d['filters'] or '-'):>7} {str(d['filter_size'] or '-'):>4} "
            f"{str(list(d['hidden_dims']) or '-'):>10} {str(list(d['dropout_rates'])):>14} "
            f"{d['learning_rate']:>6} {d['epochs']:>6} {d['batch_size']:>5}"
        )
    return "\n".join(lines)


def _csv_ints(text):
    return tuple(int(x) for x in text.split(",") if x)


def _csv_floats(text):
    return tuple(float(x) for x in text.split(",") if x)


def _csv_strs(text):
    return tuple(x for x in text.split(",") if x)


def _load_inventory(args):
    if getattr(args, "emoji_tsv", None):
        return normalize.EmojiInventory.from_tsv(args.emoji_tsv)
    return normalize.EmojiInventory.default()


def _read_examples(path, inventory):
    """Labeled TSV -> normalized LabeledExamples, in file order."""
    examples = []
    for doc_id, label, text in corpus.read_labeled_tsv(path):
        report = normalize.normalize(text, inventory)
        examples.append(
            LabeledExample(doc_id=doc_id, tokens=tuple(report.tokens), label=label)
        )
    return examples


def _model_overrides(args):
    overrides = {}
    for name in ("filters", "filter_size", "hidden_dims", "dropout_rates",
                 "learning_rate", "epochs", "batch_size"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return overrides


# -- subcommand handlers ------------------------------------------------------


def cmd_ingest(args):
    store = CorpusStore(args.corpus)
    try:
        report = store.ingest(args.input, fmt=args.format)
    finally:
        store.close()
    for diag in report.diagnostics:
        print(diag, file=sys.stderr)
    print(f"ingested {report.accepted} posts ({len(report.diagnostics)} rejected)")
    return 0


def cmd_select(args):
    config = SelectionConfig(
        min_comment_count=args.min_comments,
        min_like_count=args.min_likes,
        allowed_domains=frozenset(args.domains or ()),
        active_author_allowlist=(
            frozenset(args.authors) if args.authors is not None else None
        ),
        ad_marker_patterns=tuple(args.ad_markers or ()),
    )
    config.validate()
    inventory = _load_inventory(args)
    store = CorpusStore(args.corpus)
    try:
        selected = store.select(config)
        added = 0
        for post in selected:
            if post.id in store.documents:
                continue
            report = normalize.normalize(post.text, inventory)
            store.add_document(
                Document(
                    doc_id=post.id,
                    raw_text=post.text,
                    tokens=tuple(report.tokens),
                    emoji_count=report.emoji_count,
                    source_post=post.id,
                )
            )
            added += 1
    finally:
        store.close()
    print(f"selected {len(selected)} posts, added {added} new documents")
    return 0


def cmd_normalize(args):
    inventory = _load_inventory(args)
    fh = sys.stdin if args.input == "-" else open(args.input, encoding="utf-8")
    try:
        for line in fh:
            report = normalize.normalize(line.rstrip("\n"), inventory)
            print(" ".join(report.tokens))
    finally:
        if fh is not sys.stdin:
            fh.close()
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    token = args.token or os.environ.get("MBSENT_TOKEN") or None
    store = CorpusStore(args.corpus)
    config = AdjudicationConfig(
        annotators_per_item=args.annotators_per_item,
        probe_fraction=args.probe_fraction,
    )
    app = create_app(store, config=config, token=token, seed=args.seed)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_adjudicate(args):
    store = CorpusStore(args.corpus)
    try:
        engine = AnnotationEngine(
            store,
            AdjudicationConfig(annotators_per_item=args.annotators_per_item),
        )
        outcomes = engine.adjudicate_all()
    finally:
        store.close()
    print(json.dumps(outcomes, sort_keys=True))
    return 0


def cmd_agreement(args):
    store = CorpusStore(args.corpus)
    try:
        engine = AnnotationEngine(
            store,
            AdjudicationConfig(annotators_per_item=args.annotators_per_item),
        )
        report = engine.agreement_report()
    finally:
        store.close()
    print(json.dumps(report.to_json(), ensure_ascii=False, indent=2))
    return 0


def cmd_stats(args):
    store = CorpusStore(args.corpus)
    try:
        labeled = [
            (doc, store.golds.get(doc_id))
            for doc_id, doc in sorted(store.documents.items())
        ]
        stats = corpus.compute_stats(labeled)
    finally:
        store.close()
    text = json.dumps(stats.to_json(), ensure_ascii=False, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_train(args):
    inventory = _load_inventory(args)
    examples = _read_examples(args.corpus, inventory)
    table = embeddings.load_text_vectors(args.embeddings)
    padded = args.padded_length or embeddings.padded_length_for(
        [len(ex.tokens) for ex in examples]
    )
    overrides = _model_overrides(args)
    # a conv window must fit even when the corpus is all short documents
    min_len = overrides.get("filter_size") or models.ARCH_DEFAULTS[args.arch]["filter_size"] or 1
    config = models.ModelConfig.default(
        args.arch, max(padded, min_len), table.dim, seed=args.seed, **overrides
    )
    if args.no_split:
        train_ex, val_ex = examples, []
    else:
        train_ex, _test_ex, val_ex = harness.split(examples, SplitSpec(seed=args.seed))
    model = models.build(config)
    enc_train = harness.encode_dataset(train_ex, table, config.padded_length)
    enc_val = harness.encode_dataset(val_ex, table, config.padded_length)
    trace = models.train(model, enc_train, enc_val or None, clock=args.clock)
    os.makedirs(args.out_dir, exist_ok=True)
    ckpt_path = os.path.join(args.out_dir, f"{args.arch}.checkpoint.json")
    trace_path = os.path.join(args.out_dir, f"{args.arch}.trace.csv")
    models.save_checkpoint(model, ckpt_path, table.fingerprint())
    harness.write_trace_csv(trace, trace_path)
    last = trace.epochs[-1]
    print(
        f"trained {args.arch} for {config.epochs} epochs on {len(enc_train)} docs: "
        f"train_acc={last.train_accuracy:.4f}"
        + (f" val_acc={last.val_accuracy:.4f}" if last.val_accuracy is not None else "")
    )
    print(f"wrote {ckpt_path} and {trace_path}")
    return 0


def cmd_evaluate(args):
    inventory = _load_inventory(args)
    examples = _read_examples(args.corpus, inventory)
    table = embeddings.load_text_vectors(args.embeddings)
    model = models.load_checkpoint(args.checkpoint, fingerprint=table.fingerprint())
    report = harness.evaluate(model, examples, table)
    text = json.dumps(report.to_json(), indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_compare(args):
    for arch in args.archs:
        if arch not in models.ARCHITECTURES:
            raise HarnessError(f"unknown architecture {arch!r}")
    inventory = _load_inventory(args)
    examples = _read_examples(args.corpus, inventory)
    tables = {}
    for spec in args.embeddings:
        label, _, path = spec.partition("=")
        if not label or not path:
            raise HarnessError(f"--embeddings takes LABEL=PATH, got {spec!r}")
        tables[label] = embeddings.load_text_vectors(path)
    overrides = {}
    if args.overrides:
        with open(args.overrides, encoding="utf-8") as fh:
            raw = json.load(fh)
        overrides = {
            arch: {k: tuple(v) if isinstance(v, list) else v for k, v in ov.items()}
            for arch, ov in raw.items()
        }
    cells = [(arch, label) for arch in args.archs for label in sorted(tables)]
    results = harness.compare(
        cells,
        examples,
        tables,
        args.out_dir,
        spec=SplitSpec(seed=args.seed),
        clock=args.clock,
        padded_length=args.padded_length,
        overrides=overrides,
    )
    failed = [c for c in results if c["status"] != "ok"]
    for cell in results:
        status = cell["status"]
        detail = (
            f"f1_macro={cell['f1_macro']:.4f} accuracy={cell['accuracy']:.4f}"
            if status == "ok"
            else cell["error"]
        )
        print(f"{cell['architecture']} x {cell['embedding_label']}: {status} ({detail})")
    print(f"wrote {os.path.join(args.out_dir, 'comparison.csv')} ({len(failed)} failed cells)")
    return 0


def cmd_predict(args):
    inventory = _load_inventory(args)
    table = embeddings.load_text_vectors(args.embeddings)
    model = models.load_checkpoint(args.checkpoint, fingerprint=table.fingerprint())
    texts = []
    if args.text is not None:
        texts.append(args.text)
    if args.input:
        with open(args.input, encoding="utf-8") as fh:
            texts.extend(line.rstrip("\n") for line in fh if line.strip())
    if not texts:
        raise HarnessError("nothing to predict: pass --text or --input")
    for text in texts:
        report = normalize.normalize(text, inventory)
        label, probs = models.predict(model, report.tokens, table)
        print(
            json.dumps(
                {"label": label, "probabilities": [float(p) for p in probs],
                 "tokens": report.tokens},
                ensure_ascii=False,
            )
        )
    return 0


def cmd_export(args):
    store = CorpusStore(args.corpus)
    try:
        written = corpus.export_tsv(store.labeled_corpus(), args.out)
        ann_written = None
        if args.annotations:
            ann_written = annotation.export_annotations_jsonl(store, args.annotations)
    finally:
        store.close()
    print(f"wrote {written} labeled rows to {args.out}")
    if ann_written is not None:
        print(f"wrote {ann_written} annotations to {args.annotations}")
    return 0


def cmd_synth(args):
    examples, table = harness.synth_corpus(
        args.num_docs, args.vocab_size, args.seed, dim=args.dim
    )
    os.makedirs(args.out_dir, exist_ok=True)
    corpus_path = os.path.join(args.out_dir, "synth.tsv")
    vec_path = os.path.join(args.out_dir, "synth.vec")
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(f"{ex.doc_id}\t{ex.label}\t{' '.join(ex.tokens)}\n")
    embeddings.save_text_vectors(table, vec_path)
    print(f"wrote {len(examples)} docs to {corpus_path} and vectors to {vec_path}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="mbsent", description=__doc__, formatter_class=_Formatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, handler, help_text, epilog=None):
        p = sub.add_parser(
            name, help=help_text, description=help_text,
            formatter_class=_Formatter, epilog=epilog,
        )
        p.set_defaults(func=handler)
        return p

    p = add("ingest", cmd_ingest, "read raw posts into a corpus store")
    p.add_argument("--corpus", required=True, help="corpus store path (JSONL log)")
    p.add_argument("--input", required=True, help="raw posts file")
    p.add_argument("--format", default="jsonl", choices=["jsonl"], help="input format")

    p = add("select", cmd_select, "filter posts and normalize them into documents")
    p.add_argument("--corpus", required=True, help="corpus store path")
    p.add_argument("--min-comments", type=int, default=0, help="minimum comment count")
    p.add_argument("--min-likes", type=int, default=0, help="minimum like count")
    p.add_argument("--domains", type=_csv_strs, default=None,
                   help="comma-separated domain tags (empty = all)")
    p.add_argument("--authors", type=_csv_strs, default=None,
                   help="comma-separated active-author allowlist (omit = all)")
    p.add_argument("--ad-markers", type=_csv_strs, default=None,
                   help="comma-separated substrings marking advertisements")
    p.add_argument("--emoji-tsv", default=None, help="custom emoji name table")

    p = add("normalize", cmd_normalize, "normalize text lines to token lines")
    p.add_argument("--input", default="-", help="text file, or - for stdin")
    p.add_argument("--emoji-tsv", default=None, help="custom emoji name table")

    p = add("serve", cmd_serve, "run the annotation HTTP service")
    p.add_argument("--corpus", required=True, help="corpus store path")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--port", type=int, default=8321, help="bind port")
    p.add_argument("--token", default=None,
                   help="shared auth token (default: MBSENT_TOKEN env var; unset = no auth)")
    p.add_argument("--annotators-per-item", type=int, default=3,
                   help="ratings required per document per round")
    p.add_argument("--probe-fraction", type=float, default=0.05,
                   help="fraction of served tasks that are blind self-agreement probes")
    p.add_argument("--seed", type=int, default=0, help="scheduling RNG seed")

    p = add("adjudicate", cmd_adjudicate, "derive gold labels for completed documents")
    p.add_argument("--corpus", required=True, help="corpus store path")
    p.add_argument("--annotators-per-item", type=int, default=3,
                   help="ratings required per document per round")

    p = add("agreement", cmd_agreement, "print the agreement report")
    p.add_argument("--corpus", required=True, help="corpus store path")
    p.add_argument("--annotators-per-item", type=int, default=3,
                   help="ratings required per document per round")

    p = add("stats", cmd_stats, "print corpus statistics")
    p.add_argument("--corpus", required=True, help="corpus store path")
    p.add_argument("--out", default=None, help="also write the JSON here")

    train_epilog = _arch_defaults_table()
    p = add("train", cmd_train, "train one architecture on a labeled TSV corpus",
            epilog=train_epilog)
    p.add_argument("--arch", required=True, choices=models.ARCHITECTURES,
                   help="architecture name")
    p.add_argument("--corpus", required=True, help="labeled TSV (doc_id, label, text)")
    p.add_argument("--embeddings", required=True, help="word vector file")
    p.add_argument("--out-dir", default=".", help="where to write checkpoint and trace")
    p.add_argument("--seed", type=int, default=0, help="weights/shuffle/split seed")
    p.add_argument("--padded-length", type=int, default=None,
                   help="document length cap (default: 99th percentile of corpus)")
    p.add_argument("--no-split", action="store_true",
                   help="train on every row instead of the 90/6/4 split")
    p.add_argument("--clock", default="wall", choices=["wall", "none"],
                   help="epoch timing source; none writes 0.0 for reproducible output")
    p.add_argument("--filters", type=int, default=None, help="override: conv filters")
    p.add_argument("--filter-size", type=int, default=None, help="override: conv window")
    p.add_argument("--hidden-dims", type=_csv_ints, default=None,
                   help="override: comma-separated recurrent sizes")
    p.add_argument("--dropout-rates", type=_csv_floats, default=None,
                   help="override: comma-separated dropout rates")
    p.add_argument("--learning-rate", type=float, default=None, help="override: Adam step size")
    p.add_argument("--epochs", type=int, default=None, help="override: training epochs")
    p.add_argument("--batch-size", type=int, default=None, help="override: minibatch size")
    p.add_argument("--emoji-tsv", default=None, help="custom emoji name table")

    p = add("evaluate", cmd_evaluate, "evaluate a checkpoint on a labeled TSV corpus")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--corpus", required=True, help="labeled TSV (doc_id, label, text)")
    p.add_argument("--embeddings", required=True, help="word vector file")
    p.add_argument("--out", default=None, help="also write the metrics JSON here")
    p.add_argument("--emoji-tsv", default=None, help="custom emoji name table")

    p = add("compare", cmd_compare, "train/evaluate an architecture x embedding grid",
            epilog=train_epilog)
    p.add_argument("--corpus", required=True, help="labeled TSV (doc_id, label, text)")
    p.add_argument("--embeddings", action="append", required=True,
                   metavar="LABEL=PATH", help="word vector file, repeatable")
    p.add_argument("--archs", type=_csv_strs, default=models.ARCHITECTURES,
                   help="comma-separated architectures")
    p.add_argument("--out-dir", default="compare_out", help="cell/CSV output directory")
    p.add_argument("--seed", type=int, default=0, help="split/weights seed")
    p.add_argument("--padded-length", type=int, default=None,
                   help="document length cap (default: 99th percentile of corpus)")
    p.add_argument("--clock", default="wall", choices=["wall", "none"],
                   help="epoch timing source; none writes 0.0 for reproducible output")
    p.add_argument("--overrides", default=None,
                   help="JSON file: {architecture: {hyperparameter: value}}")
    p.add_argument("--emoji-tsv", default=None, help="custom emoji name table")

    p = add("predict", cmd_predict, "predict sentiment for raw text")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--embeddings", required=True, help="word vector file")
    p.add_argument("--text", default=None, help="one text to classify")
    p.add_argument("--input", default=None, help="file with one text per line")
    p.add_argument("--emoji-tsv", default=None, help="custom emoji name table")

    p = add("export", cmd_export, "write the labeled corpus as TSV")
    p.add_argument("--corpus", required=True, help="corpus store path")
    p.add_argument("--out", required=True, help="output TSV path")
    p.add_argument("--annotations", default=None,
                   help="also export every annotation as JSONL here")

    p = add("synth", cmd_synth, "generate the synthetic benchmark corpus")
    p.add_argument("--num-docs", type=int, default=200, help="documents to generate")
    p.add_argument("--vocab-size", type=int, default=50, help="filler vocabulary size")
    p.add_argument("--seed", type=int, default=0, help="generation seed")
    p.add_argument("--dim", type=int, default=16, help="embedding dimension")
    p.add_argument("--out-dir", default=".", help="where to write synth.tsv and synth.vec")

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args) or 0
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
