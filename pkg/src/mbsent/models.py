"""The five sentiment classifiers, their training loop, and checkpointing.

Each model maps a zero-padded (L, d) document matrix to 3-class logits over
{negative, neutral, positive}. Class indices map to sentiment labels via
{0: -1, 1: 0, 2: +1}. Embedding rows are frozen inputs, never parameters.

Architectures (dropout values are the per-architecture defaults):

  cnn      conv1d(128 filters, size 3) > relu > global max pool
           > dropout 0.5 > dense(3)
  lstm     lstm(128, sequences) > dropout 0.4 > lstm(64) > dropout 0.4
           > dense(3)
  cnn_gru  conv1d(64, size 3) > relu > dropout 0.2 > gru(64)
           > dropout 0.3 > dropout 0.5 > dense(3)
  bigru    spatial dropout 0.3 > bidirectional gru(64) > dense(3)
  bilstm   bidirectional lstm(40) > dropout 0.4 > dense(3)

Recurrent layers run over the true (unpadded) length; the CNN front ends
consume pad rows as-is, and the gru in cnn_gru reads the full convolved
sequence.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .layers import (
    Adam,
    Bidirectional,
    Conv1D,
    Dense,
    Dropout,
    GlobalMaxPool,
    GRULayer,
    LSTMLayer,
    ReLU,
    SpatialDropout,
    gradient_check as _layer_gradient_check,
    softmax,
    softmax_cross_entropy,
)

CHECKPOINT_VERSION = 1
ARCHITECTURES = ("cnn", "lstm", "cnn_gru", "bigru", "bilstm")
CLASS_TO_LABEL = {0: -1, 1: 0, 2: 1}
LABEL_TO_CLASS = {-1: 0, 0: 1, 1: 2}


class ModelError(Exception):
    pass


ARCH_DEFAULTS = {
    "cnn": dict(
        filters=128, filter_size=3, hidden_dims=(), dropout_rates=(0.5,),
        learning_rate=0.001, epochs=5, batch_size=8,
    ),
    "lstm": dict(
        filters=None, filter_size=None, hidden_dims=(128, 64), dropout_rates=(0.4, 0.4),
        learning_rate=0.001, epochs=5, batch_size=128,
    ),
    "cnn_gru": dict(
        filters=64, filter_size=3, hidden_dims=(64,), dropout_rates=(0.2, 0.3, 0.5),
        learning_rate=0.001, epochs=5, batch_size=256,
    ),
    "bigru": dict(
        filters=None, filter_size=None, hidden_dims=(64,), dropout_rates=(0.3,),
        learning_rate=0.001, epochs=6, batch_size=256,
    ),
    "bilstm": dict(
        filters=None, filter_size=None, hidden_dims=(40,), dropout_rates=(0.4,),
        learning_rate=0.008, epochs=5, batch_size=256,
    ),
}


@dataclass
class ModelConfig:
    architecture: str
    padded_length: int
    embedding_dim: int
    seed: int = 0
    filters: int | None = None
    filter_size: int | None = None
    hidden_dims: tuple = ()
    dropout_rates: tuple = ()
    learning_rate: float = 0.001
    epochs: int = 5
    batch_size: int = 8

    @classmethod
    def default(cls, architecture, padded_length, embedding_dim, seed=0, **overrides):
        if architecture not in ARCH_DEFAULTS:
            raise ModelError(f"unknown architecture: {architecture!r}")
        kwargs = dict(ARCH_DEFAULTS[architecture])
        kwargs.update(overrides)
        cfg = cls(
            architecture=architecture,
            padded_length=padded_length,
            embedding_dim=embedding_dim,
            seed=seed,
            **kwargs,
        )
        cfg.validate()
        return cfg

    def validate(self):
        if self.architecture not in ARCHITECTURES:
            raise ModelError(f"unknown architecture: {self.architecture!r}")
        if self.padded_length < 1:
            raise ModelError("padded_length must be >= 1")
        if self.embedding_dim < 1:
            raise ModelError("embedding_dim must be >= 1")
        if self.epochs < 1:
            raise ModelError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ModelError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ModelError("learning_rate must be positive")
        for r in self.dropout_rates:
            if not 0.0 <= r < 1.0:
                raise ModelError(f"dropout rate {r} outside [0, 1)")
        if self.architecture in ("cnn", "cnn_gru"):
            if not self.filters or not self.filter_size:
                raise ModelError(f"{self.architecture} needs filters and filter_size")
            if self.padded_length < self.filter_size:
                raise ModelError("padded_length shorter than filter_size")

    def to_json(self):
        return {
            "architecture": self.architecture,
            "padded_length": self.padded_length,
            "embedding_dim": self.embedding_dim,
            "seed": self.seed,
            "filters": self.filters,
            "filter_size": self.filter_size,
            "hidden_dims": list(self.hidden_dims),
            "dropout_rates": list(self.dropout_rates),
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
        }

    @classmethod
    def from_json(cls, obj):
        try:
            cfg = cls(
                architecture=obj["architecture"],
                padded_length=int(obj["padded_length"]),
                embedding_dim=int(obj["embedding_dim"]),
                seed=int(obj["seed"]),
                filters=obj["filters"],
                filter_size=obj["filter_size"],
                hidden_dims=tuple(obj["hidden_dims"]),
                dropout_rates=tuple(obj["dropout_rates"]),
                learning_rate=float(obj["learning_rate"]),
                epochs=int(obj["epochs"]),
                batch_size=int(obj["batch_size"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed model config: {exc}") from None
        cfg.validate()
        return cfg


@dataclass
class EpochStats:
    train_loss: float
    train_accuracy: float
    val_loss: float | None
    val_accuracy: float | None
    seconds: float


@dataclass
class TrainingTrace:
    epochs: list = field(default_factory=list)

    def to_json(self):
        return [
            {
                "epoch": i + 1,
                "train_loss": e.train_loss,
                "train_accuracy": e.train_accuracy,
                "val_loss": e.val_loss,
                "val_accuracy": e.val_accuracy,
                "seconds": e.seconds,
            }
            for i, e in enumerate(self.epochs)
        ]


class _Model:
    """Shared plumbing: parameter listing and the loss helper."""

    def __init__(self, config):
        config.validate()
        self.config = config

    def params(self):
        out = []
        for layer in self._layers:
            out.extend(layer.params())
        return out

    def forward(self, X, n, rng=None):
        raise NotImplementedError

    def backward(self, dlogits):
        raise NotImplementedError


class CnnModel(_Model):
    def __init__(self, config, rng):
        super().__init__(config)
        c = config
        self.conv = Conv1D(c.filters, c.filter_size, c.embedding_dim, rng, name="conv")
        self.relu = ReLU()
        self.pool = GlobalMaxPool()
        self.drop = Dropout(c.dropout_rates[0])
        self.out = Dense(c.filters, 3, rng, name="out")
        self._layers = [self.conv, self.relu, self.pool, self.drop, self.out]

    def forward(self, X, n, rng=None):
        y = self.pool.forward(self.relu.forward(self.conv.forward(X)))
        return self.out.forward(self.drop.forward(y, rng))

    def backward(self, dlogits):
        dy = self.drop.backward(self.out.backward(dlogits))
        self.conv.backward(self.relu.backward(self.pool.backward(dy)))


class LstmModel(_Model):
    def __init__(self, config, rng):
        super().__init__(config)
        c = config
        h1, h2 = c.hidden_dims
        self.rnn1 = LSTMLayer(c.embedding_dim, h1, rng, return_sequences=True, name="lstm1")
        self.drop1 = Dropout(c.dropout_rates[0])
        self.rnn2 = LSTMLayer(h1, h2, rng, name="lstm2")
        self.drop2 = Dropout(c.dropout_rates[1])
        self.out = Dense(h2, 3, rng, name="out")
        self._layers = [self.rnn1, self.drop1, self.rnn2, self.drop2, self.out]

    def forward(self, X, n, rng=None):
        seq = self.drop1.forward(self.rnn1.forward(X, n), rng)
        h = self.drop2.forward(self.rnn2.forward(seq, n), rng)
        return self.out.forward(h)

    def backward(self, dlogits):
        dh = self.drop2.backward(self.out.backward(dlogits))
        dseq = self.drop1.backward(self.rnn2.backward(dh))
        self.rnn1.backward(dseq)


class CnnGruModel(_Model):
    def __init__(self, config, rng):
        super().__init__(config)
        c = config
        self.conv = Conv1D(c.filters, c.filter_size, c.embedding_dim, rng, name="conv")
        self.relu = ReLU()
        self.drop1 = Dropout(c.dropout_rates[0])
        self.rnn = GRULayer(c.filters, c.hidden_dims[0], rng, name="gru")
        self.drop2 = Dropout(c.dropout_rates[1])
        self.drop3 = Dropout(c.dropout_rates[2])
        self.out = Dense(c.hidden_dims[0], 3, rng, name="out")
        self._layers = [self.conv, self.relu, self.drop1, self.rnn, self.drop2, self.drop3, self.out]

    def forward(self, X, n, rng=None):
        # the gru reads the whole convolved sequence; conv output rows exist
        # even for all-pad input, so there is no true-length mask here
        seq = self.drop1.forward(self.relu.forward(self.conv.forward(X)), rng)
        h = self.rnn.forward(seq, seq.shape[0])
        h = self.drop3.forward(self.drop2.forward(h, rng), rng)
        return self.out.forward(h)

    def backward(self, dlogits):
        dh = self.drop2.backward(self.drop3.backward(self.out.backward(dlogits)))
        dseq = self.drop1.backward(self.rnn.backward(dh))
        self.conv.backward(self.relu.backward(dseq))


class BigruModel(_Model):
    def __init__(self, config, rng):
        super().__init__(config)
        c = config
        h = c.hidden_dims[0]
        self.sdrop = SpatialDropout(c.dropout_rates[0])
        self.rnn = Bidirectional(
            GRULayer(c.embedding_dim, h, rng, name="gru_fwd"),
            GRULayer(c.embedding_dim, h, rng, name="gru_bwd"),
        )
        self.out = Dense(2 * h, 3, rng, name="out")
        self._layers = [self.sdrop, self.rnn, self.out]

    def forward(self, X, n, rng=None):
        h = self.rnn.forward(self.sdrop.forward(X, rng), n)
        return self.out.forward(h)

    def backward(self, dlogits):
        self.sdrop.backward(self.rnn.backward(self.out.backward(dlogits)))


class BilstmModel(_Model):
    def __init__(self, config, rng):
        super().__init__(config)
        c = config
        h = c.hidden_dims[0]
        self.rnn = Bidirectional(
            LSTMLayer(c.embedding_dim, h, rng, name="lstm_fwd"),
            LSTMLayer(c.embedding_dim, h, rng, name="lstm_bwd"),
        )
        self.drop = Dropout(c.dropout_rates[0])
        self.out = Dense(2 * h, 3, rng, name="out")
        self._layers = [self.rnn, self.drop, self.out]

    def forward(self, X, n, rng=None):
        h = self.drop.forward(self.rnn.forward(X, n), rng)
        return self.out.forward(h)

    def backward(self, dlogits):
        self.rnn.backward(self.drop.backward(self.out.backward(dlogits)))


_BUILDERS = {
    "cnn": CnnModel,
    "lstm": LstmModel,
    "cnn_gru": CnnGruModel,
    "bigru": BigruModel,
    "bilstm": BilstmModel,
}


def build(config):
    """Construct an initialized model; same seed gives identical weights."""
    if config.architecture not in _BUILDERS:
        raise ModelError(f"unknown architecture: {config.architecture!r}")
    rng = np.random.default_rng(config.seed)
    return _BUILDERS[config.architecture](config, rng)


def _check_dims(model, dataset, what):
    L, d = model.config.padded_length, model.config.embedding_dim
    for dm, _label in dataset:
        if dm.matrix.shape != (L, d):
            raise ModelError(
                f"{what} item shaped {dm.matrix.shape}, model expects {(L, d)}"
            )


def _eval_stats(model, dataset):
    """Mean loss and accuracy in evaluation mode (dropout off)."""
    total = 0.0
    correct = 0
    for dm, label in dataset:
        logits = model.forward(dm.matrix, dm.true_length)
        loss, p, _ = softmax_cross_entropy(logits, LABEL_TO_CLASS[label])
        total += loss
        if CLASS_TO_LABEL[int(np.argmax(p))] == label:
            correct += 1
    return float(total / len(dataset)), correct / len(dataset)


def train(model, train_set, val_set=None, clock="wall"):
    """Mini-batch Adam over (DocumentMatrix, label) pairs, labels in {-1,0,+1}.

    One RNG seeded from the config drives both the per-epoch shuffle and the
    dropout masks, so a fixed seed reproduces the trace and final weights
    exactly. ``clock="none"`` records 0.0 for every epoch's seconds, which
    keeps serialized traces byte-stable across runs.
    """
    if clock not in ("wall", "none"):
        raise ModelError(f"unknown clock mode: {clock!r}")
    if not train_set:
        raise ModelError("empty training set")
    _check_dims(model, train_set, "training")
    if val_set:
        _check_dims(model, val_set, "validation")
    cfg = model.config
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params(), cfg.learning_rate)
    order = np.arange(len(train_set))
    trace = TrainingTrace()
    for _epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        rng.shuffle(order)
        loss_sum = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            opt.zero_grad()
            scale = 1.0 / len(batch)
            for idx in batch:
                dm, label = train_set[idx]
                logits = model.forward(dm.matrix, dm.true_length, rng=rng)
                loss, _p, dlogits = softmax_cross_entropy(logits, LABEL_TO_CLASS[label])
                model.backward(dlogits * scale)
                loss_sum += loss
            opt.step()
        train_loss = float(loss_sum / len(order))
        _, train_acc = _eval_stats(model, train_set)
        val_loss, val_acc = _eval_stats(model, val_set) if val_set else (None, None)
        seconds = time.perf_counter() - t0 if clock == "wall" else 0.0
        trace.epochs.append(EpochStats(train_loss, train_acc, val_loss, val_acc, seconds))
    return trace


def predict_encoded(model, dm):
    """(label, probabilities) for an already-encoded document."""
    logits = model.forward(dm.matrix, dm.true_length)
    p = softmax(logits)
    return CLASS_TO_LABEL[int(np.argmax(p))], p


def predict(model, tokens, table):
    """(label, probabilities) for a token list, encoding it first."""
    from . import embeddings

    dm = embeddings.encode(table, tokens, model.config.padded_length)
    return predict_encoded(model, dm)


def model_gradient_check(model, X, n, label, delta=1e-5):
    """Central-difference check of the whole model at one input.

    ``label`` is a sentiment value in {-1, 0, +1}; dropout stays off.
    """
    cls = LABEL_TO_CLASS[label]

    def loss_fn():
        logits = model.forward(X, n)
        loss, _p, dlogits = softmax_cross_entropy(logits, cls)
        model.backward(dlogits)
        return loss

    return _layer_gradient_check(loss_fn, model.params(), delta=delta)


def save_checkpoint(model, path, fingerprint):
    """Versioned JSON checkpoint; byte-identical for identical weights."""
    names = [p.name for p in model.params()]
    if len(set(names)) != len(names):
        raise ModelError("duplicate parameter names in model")
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "fingerprint": fingerprint,
        "config": model.config.to_json(),
        "weights": {p.name: p.value.tolist() for p in model.params()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path, fingerprint=None):
    """Rebuild a model from a checkpoint, verifying version and fingerprint."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelError(f"corrupt checkpoint {path}: {exc}") from None
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ModelError(f"corrupt checkpoint {path}: not a checkpoint object")
    if payload["format_version"] != CHECKPOINT_VERSION:
        raise ModelError(
            f"checkpoint format {payload['format_version']} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    if fingerprint is not None and payload.get("fingerprint") != fingerprint:
        raise ModelError("checkpoint was built against a different embedding table")
    try:
        config = ModelConfig.from_json(payload["config"])
        weights = payload["weights"]
    except KeyError as exc:
        raise ModelError(f"corrupt checkpoint {path}: missing {exc}") from None
    model = build(config)
    params = {p.name: p for p in model.params()}
    if set(weights) != set(params):
        raise ModelError(f"corrupt checkpoint {path}: weight names do not match")
    for name, value in weights.items():
        arr = np.asarray(value, dtype=np.float64)
        if arr.shape != params[name].value.shape:
            raise ModelError(
                f"corrupt checkpoint {path}: {name} shaped {arr.shape}, "
                f"expected {params[name].value.shape}"
            )
        params[name].value[...] = arr
    return model
