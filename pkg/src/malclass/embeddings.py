"""Pretrained word-vector loading for the word-level classifiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, FileError
from .tokens import PAD, Vocabulary

__all__ = ["EmbeddingTable", "load_pretrained_embeddings", "random_embeddings"]

INIT_RANGE = 0.05


@dataclass
class EmbeddingTable:
    """|V| x dim weight matrix; row 0 (PAD) is all-zero and stays frozen."""

    matrix: np.ndarray
    trainable: bool = True
    coverage: float = 0.0

    def __post_init__(self):
        if np.any(self.matrix[PAD] != 0.0):
            raise ValueError("PAD row must be zero")


def random_embeddings(vocab: Vocabulary, dim: int = 200, seed: int = 0,
                      dtype=np.float32) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(len(vocab), dim)).astype(dtype)
    matrix[PAD] = 0.0
    return EmbeddingTable(matrix, trainable=True, coverage=0.0)


def load_pretrained_embeddings(path, vocab: Vocabulary, dim: int = 200,
                               seed: int = 0, dtype=np.float32) -> EmbeddingTable:
    """Read whitespace-separated `token v1 ... vdim` vectors.

    Vocabulary tokens found in the file get the pretrained row; the rest are
    initialised uniform(-0.05, 0.05). A word2vec-style count/dim header line
    is skipped if present. Raises DimensionMismatchError when the file width
    differs from `dim`.
    """
    table = random_embeddings(vocab, dim, seed, dtype)
    covered = 0
    try:
        fh = open(path, encoding="utf-8", errors="replace")
    except OSError as exc:
        raise FileError(f"cannot read embeddings {path}: {exc}") from exc
    with fh:
        first = True
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if first:
                first = False
                if len(parts) == 2 and all(p.isdigit() for p in parts):
                    continue  # header line
            if len(parts) < 2:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DimensionMismatchError(
                    f"{path}: vector for {token!r} has {len(values)} dims, expected {dim}"
                )
            idx = vocab.token_to_index.get(token)
            if idx is None or idx == PAD:
                continue
            table.matrix[idx] = np.asarray([float(v) for v in values], dtype=dtype)
            covered += 1
    n_real = len(vocab) - 3  # reserved tokens are never in the file
    table.coverage = covered / n_real if n_real else 0.0
    return table
