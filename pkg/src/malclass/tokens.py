"""Tokenization, word vocabulary and character alphabet encodings."""

from __future__ import annotations

import re

import numpy as np

__all__ = [
    "tokenize",
    "Vocabulary",
    "build_vocab",
    "encode_words",
    "CharAlphabet",
    "encode_chars",
    "PAD", "UNK", "SEP",
]

PAD, UNK, SEP = 0, 1, 2
PAD_TOKEN, UNK_TOKEN, SEP_TOKEN = "<pad>", "<unk>", "<sep>"
_RESERVED = (PAD_TOKEN, UNK_TOKEN, SEP_TOKEN)

_URL_RE = re.compile(r"https?://\S+|www\.\S+")
_MENTION_RE = re.compile(r"@\w+")
# placeholders first so they survive as single tokens
_TOKEN_RE = re.compile(r"<url>|@user|'[^\W\d_]+|[^\W_]+|\S")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation.

    User mentions collapse to ``@user`` and URLs to ``<url>``; apostrophe
    suffixes stay attached ("i'll" -> ["i", "'ll"]).
    """
    text = text.lower().replace("’", "'")
    text = _URL_RE.sub("<url>", text)
    text = _MENTION_RE.sub("@user", text)
    return _TOKEN_RE.findall(text)


class Vocabulary:
    """Token-to-index map with reserved PAD/UNK/SEP entries."""

    def __init__(self, tokens: list[str]):
        self.index_to_token = list(_RESERVED) + list(tokens)
        self.token_to_index = {t: i for i, t in enumerate(self.index_to_token)}
        if len(self.token_to_index) != len(self.index_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, UNK)

    def decode(self, indices) -> list[str]:
        """Tokens for an index sequence, with PAD positions dropped."""
        return [self.index_to_token[i] for i in indices if i != PAD]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.index_to_token:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            toks = [line.rstrip("\n") for line in fh]
        if tuple(toks[:3]) != _RESERVED:
            raise ValueError(f"{path}: not a vocabulary file (missing reserved tokens)")
        return cls(toks[3:])


def build_vocab(texts, max_size: int = 36000) -> Vocabulary:
    """Keep the `max_size` most frequent tokens, ties broken lexicographically."""
    counts: dict[str, int] = {}
    for text in texts:
        for tok in tokenize(text):
            counts[tok] = counts.get(tok, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([tok for tok, _ in ranked[:max_size]])


def encode_words(tokens: list[str], vocab: Vocabulary, max_len: int = 128):
    """Index sequence, right-padded; over-long input keeps the LAST `max_len`
    tokens so the response tail survives truncation.

    Returns (indices int32 of length max_len, true length).
    """
    kept = tokens[-max_len:]
    out = np.full(max_len, PAD, dtype=np.int32)
    for i, tok in enumerate(kept):
        out[i] = vocab.index(tok)
    return out, len(kept)


# 26 letters + 10 digits + 33 punctuation/symbols (incl. space) + newline = 70.
_ALPHABET = (
    "abcdefghijklmnopqrstuvwxyz"
    "0123456789"
    "-,;.!?:'\"/\\|_@#$%^&*~`+=<>()[]{} "
    "\n"
)


class CharAlphabet:
    """Fixed 70-symbol character table.

    Index 0 is the out-of-alphabet / padding slot (an all-zero one-hot row);
    alphabet characters occupy indices 1..70.
    """

    def __init__(self):
        self.symbols = _ALPHABET
        assert len(self.symbols) == 70 and len(set(self.symbols)) == 70
        self.char_to_index = {c: i + 1 for i, c in enumerate(self.symbols)}

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, char: str) -> int:
        return self.char_to_index.get(char, 0)

    def onehot_table(self, dtype=np.float32) -> np.ndarray:
        """(71, 70) lookup table; row 0 is the zero vector."""
        table = np.zeros((len(self.symbols) + 1, len(self.symbols)), dtype=dtype)
        table[1:] = np.eye(len(self.symbols), dtype=dtype)
        return table


def encode_chars(text: str, alphabet: CharAlphabet, max_len: int = 1014):
    """Character index sequence: lowercased, first `max_len` chars kept,
    right-padded with the zero slot. Out-of-alphabet chars map to the zero
    slot as well.

    Returns (indices int32 of length max_len, true length).
    """
    chars = text.lower()[:max_len]
    out = np.zeros(max_len, dtype=np.int32)
    for i, ch in enumerate(chars):
        out[i] = alphabet.index(ch)
    return out, len(chars)
