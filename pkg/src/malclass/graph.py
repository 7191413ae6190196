"""Transductive text-GCN over a heterogeneous response-word graph.

Graph construction follows the response/word scheme: a response node links
to the words it contains with TF-IDF weights (natural-log IDF over response
nodes), word nodes link to each other with positive PMI estimated from
sliding co-occurrence windows, and every node carries a unit self-loop.
Responses shorter than the window width count as a single window.

The classifier is two propagation layers over identity node features,
softmax(A_hat . ReLU(A_hat W0) W1), trained full-batch with one update per
epoch. Test responses participate as unlabelled nodes (their labels never
enter the loss or early stopping), which is also why prediction on texts
outside the graph is unsupported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DivergenceError, EmptyCorpusError
from .nn.layers import SoftmaxCrossEntropy, glorot_uniform
from .nn.optim import Adam
from .nn.tensor import Tensor
from .nn.training import EarlyStopper
from .tokens import Vocabulary, tokenize

__all__ = ["GcnSpec", "TextGraph", "build_graph", "normalize", "train_gcn", "GcnResult"]


@dataclass
class GcnSpec:
    num_classes: int
    hidden: int = 128
    learning_rate: float = 0.02
    dropout: float = 0.5
    window: int = 20
    dtype: str = "float32"

    def __post_init__(self):
        if min(self.num_classes, self.hidden, self.window) <= 0 or self.learning_rate <= 0:
            raise ConfigError("GCN spec values must be positive")

    def to_config(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class TextGraph:
    """Response nodes first (graph order = example order), then word nodes."""

    n_docs: int
    words: list[str]
    adjacency: sp.csr_matrix          # symmetric, unit diagonal
    doc_labels: list[str]             # label id per response node

    @property
    def n_nodes(self) -> int:
        return self.n_docs + len(self.words)

    def dump_edges(self, path):
        """TSV edge list `src dst weight` (upper triangle, no self-loops)."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        with open(path, "w", encoding="utf-8") as fh:
            for i, j, w in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i}\t{j}\t{w!r}\n")

    def dump_nodes(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(self.n_docs):
                fh.write(f"{i}\tdoc\t{self.doc_labels[i]}\n")
            for k, w in enumerate(self.words):
                fh.write(f"{self.n_docs + k}\tword\t{w}\n")


def _doc_tokens(examples, vocab: Vocabulary) -> list[list[str]]:
    """Response tokens restricted to vocabulary membership."""
    return [
        [t for t in tokenize(ex.response_text) if t in vocab]
        for ex in examples
    ]


def build_graph(examples, vocab: Vocabulary, window: int = 20) -> TextGraph:
    """Graph over the responses of all splits (train + validation + test)."""
    if not examples:
        raise EmptyCorpusError("no examples to build a graph from")
    docs = _doc_tokens(examples, vocab)
    n_docs = len(docs)

    # word nodes: vocabulary order, restricted to words that occur
    present = {t for toks in docs for t in toks}
    words = [t for t in vocab.index_to_token if t in present]
    word_of = {w: n_docs + k for k, w in enumerate(words)}

    rows, cols, vals = [], [], []

    # response-word edges: tf * ln(N/df)
    df: dict[str, int] = {}
    for toks in docs:
        for t in set(toks):
            df[t] = df.get(t, 0) + 1
    for i, toks in enumerate(docs):
        counts: dict[str, int] = {}
        for t in toks:
            counts[t] = counts.get(t, 0) + 1
        for t, c in counts.items():
            # a word occurring in every response has idf 0; the edge is kept
            # (explicit zero) so the edge set mirrors token occurrence
            weight = c * math.log(n_docs / df[t])
            j = word_of[t]
            rows += [i, j]
            cols += [j, i]
            vals += [weight, weight]

    # word-word edges: positive PMI over sliding windows
    n_windows = 0
    w_count: dict[str, int] = {}
    pair_count: dict[tuple[str, str], int] = {}
    for toks in docs:
        if len(toks) <= window:
            spans = [toks] if toks else []
        else:
            spans = [toks[s:s + window] for s in range(len(toks) - window + 1)]
        for span in spans:
            n_windows += 1
            distinct = sorted(set(span))
            for t in distinct:
                w_count[t] = w_count.get(t, 0) + 1
            for a in range(len(distinct)):
                for b in range(a + 1, len(distinct)):
                    pair = (distinct[a], distinct[b])
                    pair_count[pair] = pair_count.get(pair, 0) + 1
    for (ta, tb), c in pair_count.items():
        pmi = math.log(c * n_windows / (w_count[ta] * w_count[tb]))
        if pmi > 0.0:
            i, j = word_of[ta], word_of[tb]
            rows += [i, j]
            cols += [j, i]
            vals += [pmi, pmi]

    n = n_docs + len(words)
    for i in range(n):
        rows.append(i)
        cols.append(i)
        vals.append(1.0)
    adjacency = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return TextGraph(n_docs, words, adjacency, [ex.label for ex in examples])


def normalize(graph: TextGraph) -> sp.csr_matrix:
    """Symmetric normalization D^-1/2 (A) D^-1/2; A already holds the
    self-loops, so every degree is positive."""
    a = graph.adjacency
    deg = np.asarray(a.sum(axis=1)).ravel()
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    d = sp.diags(d_inv_sqrt)
    return (d @ a @ d).tocsr()


@dataclass
class GcnResult:
    probabilities: np.ndarray       # (n_docs, num_classes) at the best epoch
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    weights: dict = field(default_factory=dict)


def _gcn_forward(a_hat, w0, w1, drop_mask=None):
    h_pre = a_hat @ w0
    h = np.maximum(h_pre, 0.0)
    h_used = h if drop_mask is None else h * drop_mask
    logits = a_hat @ (h_used @ w1)
    return h_pre, h_used, logits


def _masked_ce(logits, node_ids, node_labels):
    probs = SoftmaxCrossEntropy.probabilities(logits[node_ids])
    picked = probs[np.arange(len(node_ids)), node_labels]
    return float(-np.log(np.maximum(picked, 1e-30)).mean()), probs


def train_gcn(graph: TextGraph, spec: GcnSpec, train_labels: dict[int, int],
              val_labels: dict[int, int], max_epochs: int = 100,
              patience: int = 10, seed: int = 0) -> GcnResult:
    """Full-batch training with early stopping on validation-node loss.

    `train_labels`/`val_labels` map response-node indices to class indices;
    pass an empty val map to disable early stopping. Returns probability
    rows for every response node at the best epoch.
    """
    if not train_labels:
        raise ConfigError("train_labels must not be empty")
    bad = [i for i in list(train_labels) + list(val_labels) if not 0 <= i < graph.n_docs]
    if bad:
        raise ConfigError(f"label node ids outside response range: {bad[:5]}")

    dtype = np.float32 if spec.dtype == "float32" else np.float64
    a_hat = normalize(graph).astype(dtype)
    n = graph.n_nodes
    init_ss, drop_ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(init_ss)
    drop_rng = np.random.default_rng(drop_ss)
    w0 = Tensor(glorot_uniform(rng, n, spec.hidden, (n, spec.hidden), dtype))
    w1 = Tensor(glorot_uniform(rng, spec.hidden, spec.num_classes,
                               (spec.hidden, spec.num_classes), dtype))
    optimizer = Adam([("w0", w0), ("w1", w1)], lr=spec.learning_rate)
    stopper = EarlyStopper(patience)
    result = GcnResult(probabilities=np.zeros((graph.n_docs, spec.num_classes)))
    best = None

    train_ids = np.fromiter(train_labels.keys(), dtype=np.int64)
    train_y = np.fromiter((train_labels[i] for i in train_ids), dtype=np.int64)
    val_ids = np.fromiter(val_labels.keys(), dtype=np.int64)
    val_y = np.fromiter((val_labels[i] for i in val_ids), dtype=np.int64)

    for epoch in range(1, max_epochs + 1):
        # one full-batch gradient step
        if spec.dropout > 0.0:
            keep = 1.0 - spec.dropout
            drop_mask = (drop_rng.random((n, spec.hidden)) < keep).astype(dtype) / keep
        else:
            drop_mask = None
        h_pre, h_used, logits = _gcn_forward(a_hat, w0.data, w1.data, drop_mask)
        train_loss, probs = _masked_ce(logits, train_ids, train_y)
        if not math.isfinite(train_loss):
            raise DivergenceError(f"GCN loss diverged at epoch {epoch}")
        dlogits = np.zeros_like(logits)
        d = probs.copy()
        d[np.arange(len(train_ids)), train_y] -= 1.0
        dlogits[train_ids] = d / len(train_ids)
        dm = a_hat @ dlogits                      # A_hat is symmetric
        w1.grad += h_used.T @ dm
        dh = dm @ w1.data.T
        if drop_mask is not None:
            dh = dh * drop_mask
        dh_pre = np.where(h_pre > 0.0, dh, 0.0)
        w0.grad += a_hat @ dh_pre
        optimizer.step()

        # eval-mode forward for monitoring and checkpoint selection
        _, _, eval_logits = _gcn_forward(a_hat, w0.data, w1.data, None)
        entry = {"epoch": epoch, "train_loss": train_loss}
        if len(val_ids):
            val_loss, _ = _masked_ce(eval_logits, val_ids, val_y)
            if not math.isfinite(val_loss):
                raise DivergenceError(f"GCN validation loss diverged at epoch {epoch}")
            entry["val_loss"] = val_loss
            if stopper.update(epoch, val_loss):
                best = (w0.data.copy(), w1.data.copy())
            result.history.append(entry)
            if stopper.should_stop:
                break
        else:
            best = (w0.data.copy(), w1.data.copy())
            stopper.best_epoch = epoch
            result.history.append(entry)

    w0.data, w1.data = best
    _, _, final_logits = _gcn_forward(a_hat, w0.data, w1.data, None)
    result.probabilities = SoftmaxCrossEntropy.probabilities(final_logits[:graph.n_docs])
    result.best_epoch = stopper.best_epoch
    result.best_val_loss = stopper.best
    result.weights = {"w0": w0.data, "w1": w1.data}
    return result
