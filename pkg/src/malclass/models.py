"""The four sequence classifiers, assembled from the nn layers.

All models share one interface:

- ``compute_loss(inputs, lengths, labels, train, want_grads)`` runs a full
  forward (and backward when requested) pass and returns the mean loss;
- ``predict_proba(inputs, lengths)`` returns softmax rows in eval mode;
- ``params()`` lists (name, Tensor) pairs for the optimizer / checkpoints.

Architectures:

- text_cnn:  embedding -> parallel width-{3,4,5} convolutions (128 maps
  each) -> ReLU -> max-over-time -> concat -> dropout -> affine -> softmax
- char_cnn:  70-dim one-hot chars -> six conv stages (pooling after stages
  1, 2 and 6) -> two 128-wide affine+ReLU+dropout blocks -> softmax
- text_rnn:  embedding -> bi-LSTM (128 per direction) -> final-state concat
  -> dropout -> affine -> softmax
- text_rcnn: embedding -> bi-recurrence; per position concat
  [left context; embedding; right context] -> affine+tanh -> max-over-time
  -> dropout -> affine -> softmax
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import checkpoint
from .embeddings import EmbeddingTable
from .errors import CheckpointError, ConfigError, ShapeMismatchError
from .nn.layers import (Affine, Conv1d, Dropout, Embedding, LSTM, MaxOverTime,
                        MaxPool1d, Relu, SoftmaxCrossEntropy, TanhAct)
from .tokens import PAD

MODEL_KINDS = ("char_cnn", "text_cnn", "text_rnn", "text_rcnn")

# Zhang-style small config: (width, pool width) per conv stage.
CHAR_CNN_STAGES = ((7, 3), (7, 3), (3, 0), (3, 0), (3, 0), (3, 3))
TEXT_CNN_WIDTHS = (3, 4, 5)


@dataclass
class ClassifierSpec:
    kind: str
    num_classes: int
    vocab_size: int = 0            # word models; includes reserved entries
    embedding_dim: int = 200
    hidden: int = 128
    dropout: float = 0.5
    max_len: int = 128             # 1014 for char_cnn
    conv_channels: int = 256       # char_cnn feature maps
    alphabet_size: int = 70
    embedding_trainable: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must be in [0, 1)")
        if self.kind != "char_cnn" and self.vocab_size < 4:
            raise ConfigError(f"{self.kind} needs a vocabulary")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_config(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_config(cls, config: dict) -> "ClassifierSpec":
        known = {k: v for k, v in config.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class Prediction:
    probabilities: np.ndarray
    class_index: int
    label: str


class _ModelBase:
    def __init__(self, spec: ClassifierSpec):
        self.spec = spec
        self.loss_layer = SoftmaxCrossEntropy()
        self._params: list = []
        self._frozen: list = []

    def params(self):
        return self._params

    def persistent_tensors(self):
        """Everything a checkpoint must carry: trainable params plus frozen
        tensors that cannot be reconstructed (e.g. a frozen pretrained
        embedding). The char one-hot table is rebuilt, not stored."""
        return self._params + self._frozen

    def zero_grads(self):
        for _, p in self._params:
            p.zero_grad()

    def _register(self, *layers):
        for layer in layers:
            self._params.extend(layer.params())

    def _register_embedding(self, emb: Embedding):
        if emb.trainable:
            self._params.extend(emb.params())
        else:
            self._frozen.append((f"{emb.name}.table", emb.table))

    def compute_loss(self, inputs, lengths, labels, *, train: bool,
                     want_grads: bool) -> float:
        if want_grads:
            self.zero_grads()
        logits = self._forward(inputs, lengths, train)
        loss = self.loss_layer.forward(logits, labels)
        if want_grads:
            self._backward(self.loss_layer.backward())
        return loss

    def predict_proba(self, inputs, lengths, batch_size: int = 256) -> np.ndarray:
        rows = []
        for start in range(0, len(inputs), batch_size):
            logits = self._forward(inputs[start:start + batch_size],
                                   lengths[start:start + batch_size], train=False)
            rows.append(SoftmaxCrossEntropy.probabilities(logits))
        return np.concatenate(rows, axis=0)

    def _forward(self, inputs, lengths, train):  # pragma: no cover - abstract
        raise NotImplementedError

    def _backward(self, dlogits):  # pragma: no cover - abstract
        raise NotImplementedError


def _make_embedding(spec: ClassifierSpec, table: EmbeddingTable | None, rng):
    if table is not None:
        if table.matrix.shape != (spec.vocab_size, spec.embedding_dim):
            raise ShapeMismatchError(
                f"embedding table is {table.matrix.shape}, spec wants "
                f"({spec.vocab_size}, {spec.embedding_dim})")
        matrix = table.matrix.astype(spec.np_dtype)
    else:
        matrix = rng.uniform(-0.05, 0.05,
                             size=(spec.vocab_size, spec.embedding_dim)).astype(spec.np_dtype)
    matrix[PAD] = 0.0
    return Embedding(matrix, pad_index=PAD,
                     trainable=spec.embedding_trainable, name="embedding")


class TextCnn(_ModelBase):
    def __init__(self, spec, rng, dropout_rng, table=None):
        super().__init__(spec)
        dt = spec.np_dtype
        self.embedding = _make_embedding(spec, table, rng)
        self.branches = []
        for w in TEXT_CNN_WIDTHS:
            conv = Conv1d(w, spec.embedding_dim, spec.hidden, rng, dt, name=f"conv{w}")
            self.branches.append((conv, Relu(), MaxOverTime()))
        self.dropout = Dropout(spec.dropout, dropout_rng)
        self.head = Affine(spec.hidden * len(TEXT_CNN_WIDTHS), spec.num_classes,
                           rng, dt, name="head")
        self._register_embedding(self.embedding)
        self._register(*(b[0] for b in self.branches), self.head)
        self._emb_shape = None

    def _forward(self, inputs, lengths, train):
        emb = self.embedding.forward(inputs)
        self._emb_shape = emb.shape
        pooled = []
        for conv, relu, pool in self.branches:
            y = relu.forward(conv.forward(emb))
            valid = np.maximum(lengths - conv.width + 1, 0)
            pooled.append(pool.forward(y, valid))
        feat = np.concatenate(pooled, axis=1)
        return self.head.forward(self.dropout.forward(feat, train))

    def _backward(self, dlogits):
        dfeat = self.dropout.backward(self.head.backward(dlogits))
        demb = np.zeros(self._emb_shape, dtype=self.spec.np_dtype)
        h = self.spec.hidden
        for k, (conv, relu, pool) in enumerate(self.branches):
            dpool = dfeat[:, k * h:(k + 1) * h]
            demb += conv.backward(relu.backward(pool.backward(dpool)))
        self.embedding.backward(demb)


class CharCnn(_ModelBase):
    def __init__(self, spec, rng, dropout_rng, table=None):
        super().__init__(spec)
        dt = spec.np_dtype
        onehot = np.zeros((spec.alphabet_size + 1, spec.alphabet_size), dtype=dt)
        onehot[1:] = np.eye(spec.alphabet_size, dtype=dt)
        self.onehot = Embedding(onehot, pad_index=0, trainable=False, name="onehot")
        self.stages = []
        length, channels = spec.max_len, spec.alphabet_size
        for n, (width, pool_w) in enumerate(CHAR_CNN_STAGES, start=1):
            if length < width:
                raise ConfigError(
                    f"char_cnn: max_len {spec.max_len} too short for stage {n}")
            conv = Conv1d(width, channels, spec.conv_channels, rng, dt, name=f"conv{n}")
            pool = MaxPool1d(pool_w) if pool_w else None
            self.stages.append((conv, Relu(), pool))
            length = length - width + 1
            if pool:
                length = (length - pool_w) // pool_w + 1
            channels = spec.conv_channels
        if length < 1:
            raise ConfigError(f"char_cnn: max_len {spec.max_len} too short")
        self._flat_dim = length * channels
        self.fc1 = Affine(self._flat_dim, spec.hidden, rng, dt, name="fc1")
        self.fc2 = Affine(spec.hidden, spec.hidden, rng, dt, name="fc2")
        self.relu1, self.relu2 = Relu(), Relu()
        self.drop1 = Dropout(spec.dropout, dropout_rng)
        self.drop2 = Dropout(spec.dropout, dropout_rng)
        self.head = Affine(spec.hidden, spec.num_classes, rng, dt, name="head")
        self._register(*(s[0] for s in self.stages), self.fc1, self.fc2, self.head)
        self._conv_shape = None

    def _forward(self, inputs, lengths, train):
        x = self.onehot.forward(inputs)
        for conv, relu, pool in self.stages:
            x = relu.forward(conv.forward(x))
            if pool:
                x = pool.forward(x)
        self._conv_shape = x.shape
        flat = x.reshape(x.shape[0], self._flat_dim)
        h = self.drop1.forward(self.relu1.forward(self.fc1.forward(flat)), train)
        h = self.drop2.forward(self.relu2.forward(self.fc2.forward(h)), train)
        return self.head.forward(h)

    def _backward(self, dlogits):
        dh = self.head.backward(dlogits)
        dh = self.fc2.backward(self.relu2.backward(self.drop2.backward(dh)))
        dflat = self.fc1.backward(self.relu1.backward(self.drop1.backward(dh)))
        dx = dflat.reshape(self._conv_shape)
        for conv, relu, pool in reversed(self.stages):
            if pool:
                dx = pool.backward(dx)
            dx = conv.backward(relu.backward(dx))
        # one-hot lookup is frozen; nothing to propagate


class TextRnn(_ModelBase):
    def __init__(self, spec, rng, dropout_rng, table=None):
        super().__init__(spec)
        dt = spec.np_dtype
        self.embedding = _make_embedding(spec, table, rng)
        self.fwd = LSTM(spec.embedding_dim, spec.hidden, rng, dt, name="lstm_fwd")
        self.bwd = LSTM(spec.embedding_dim, spec.hidden, rng, dt,
                        go_backward=True, name="lstm_bwd")
        self.dropout = Dropout(spec.dropout, dropout_rng)
        self.head = Affine(2 * spec.hidden, spec.num_classes, rng, dt, name="head")
        self._register_embedding(self.embedding)
        self._register(self.fwd, self.bwd, self.head)

    def _forward(self, inputs, lengths, train):
        emb = self.embedding.forward(inputs)
        _, h_fwd = self.fwd.forward(emb, lengths)
        _, h_bwd = self.bwd.forward(emb, lengths)
        feat = np.concatenate([h_fwd, h_bwd], axis=1)
        return self.head.forward(self.dropout.forward(feat, train))

    def _backward(self, dlogits):
        dfeat = self.dropout.backward(self.head.backward(dlogits))
        h = self.spec.hidden
        demb = self.fwd.backward(None, np.ascontiguousarray(dfeat[:, :h]))
        demb += self.bwd.backward(None, np.ascontiguousarray(dfeat[:, h:]))
        self.embedding.backward(demb)


class TextRcnn(_ModelBase):
    def __init__(self, spec, rng, dropout_rng, table=None):
        super().__init__(spec)
        dt = spec.np_dtype
        self.embedding = _make_embedding(spec, table, rng)
        self.fwd = LSTM(spec.embedding_dim, spec.hidden, rng, dt, name="lstm_fwd")
        self.bwd = LSTM(spec.embedding_dim, spec.hidden, rng, dt,
                        go_backward=True, name="lstm_bwd")
        self.proj = Affine(2 * spec.hidden + spec.embedding_dim, spec.hidden,
                           rng, dt, name="proj")
        self.tanh = TanhAct()
        self.pool = MaxOverTime()
        self.dropout = Dropout(spec.dropout, dropout_rng)
        self.head = Affine(spec.hidden, spec.num_classes, rng, dt, name="head")
        self._register_embedding(self.embedding)
        self._register(self.fwd, self.bwd, self.proj, self.head)
        self._shapes = None

    def _forward(self, inputs, lengths, train):
        emb = self.embedding.forward(inputs)
        out_f, _ = self.fwd.forward(emb, lengths)
        out_b, _ = self.bwd.forward(emb, lengths)
        # left/right context: recurrent state up to (not including) each token
        left = np.zeros_like(out_f)
        left[:, 1:] = out_f[:, :-1]
        right = np.zeros_like(out_b)
        right[:, :-1] = out_b[:, 1:]
        feats = np.concatenate([left, emb, right], axis=2)
        b, length, width = feats.shape
        self._shapes = (b, length, width)
        act = self.tanh.forward(self.proj.forward(feats.reshape(b * length, width)))
        pooled = self.pool.forward(act.reshape(b, length, self.spec.hidden), lengths)
        return self.head.forward(self.dropout.forward(pooled, train))

    def _backward(self, dlogits):
        b, length, width = self._shapes
        h, d = self.spec.hidden, self.spec.embedding_dim
        dpooled = self.dropout.backward(self.head.backward(dlogits))
        dact = self.pool.backward(dpooled).reshape(b * length, h)
        dfeats = self.proj.backward(self.tanh.backward(dact)).reshape(b, length, width)
        dleft = dfeats[:, :, :h]
        demb = dfeats[:, :, h:h + d].copy()
        dright = dfeats[:, :, h + d:]
        dout_f = np.zeros((b, length, h), dtype=self.spec.np_dtype)
        dout_f[:, :-1] = dleft[:, 1:]
        dout_b = np.zeros((b, length, h), dtype=self.spec.np_dtype)
        dout_b[:, 1:] = dright[:, :-1]
        demb += self.fwd.backward(dout_f, None)
        demb += self.bwd.backward(dout_b, None)
        self.embedding.backward(demb)


_MODEL_CLASSES = {
    "text_cnn": TextCnn,
    "char_cnn": CharCnn,
    "text_rnn": TextRnn,
    "text_rcnn": TextRcnn,
}


def build(spec: ClassifierSpec, seed: int = 0,
          embedding_table: EmbeddingTable | None = None):
    """Construct a classifier with seeded initialization."""
    init_ss, drop_ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(init_ss)
    dropout_rng = np.random.default_rng(drop_ss)
    cls = _MODEL_CLASSES[spec.kind]
    return cls(spec, rng, dropout_rng, table=embedding_table)


def predict(model, inputs, lengths, class_labels) -> list[Prediction]:
    """Eval-mode predictions; argmax ties resolve to the lowest class index."""
    probs = model.predict_proba(inputs, lengths)
    if probs.shape[1] != len(class_labels):
        raise ShapeMismatchError(
            f"model emits {probs.shape[1]} classes, got {len(class_labels)} labels")
    out = []
    for row in probs:
        idx = int(np.argmax(row))
        out.append(Prediction(row, idx, class_labels[idx]))
    return out


def save_model(path, model, extra_config: dict | None = None) -> None:
    """Write the model to a checkpoint; `extra_config` (e.g. taxonomy level,
    setting flags, seed) is merged into the header's config echo."""
    config = model.spec.to_config()
    if extra_config:
        config.update(extra_config)
    checkpoint.save(path, model.spec.kind, config,
                    [(name, p.data) for name, p in model.persistent_tensors()])


def load_model(path):
    """Rebuild a classifier from a checkpoint. Returns (model, header)."""
    header, tensors = checkpoint.load(path)
    config = header["config"]
    spec = ClassifierSpec.from_config(config)
    model = build(spec, seed=int(config.get("seed", 0)))
    expected = dict(model.persistent_tensors())
    if set(expected) != set(tensors):
        raise CheckpointError(
            f"{path}: tensor names do not match a {spec.kind} model")
    for name, p in expected.items():
        if tuple(p.shape) != tensors[name].shape:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {tensors[name].shape}, "
                f"expected {tuple(p.shape)}")
        p.data[...] = tensors[name].astype(p.dtype)
    return model, header
