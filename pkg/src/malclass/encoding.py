"""Turn corpus examples into integer-encoded datasets for the classifiers.

Word models see `context1 <sep> context2 <sep> context3 <sep> response` as a
single token sequence (left-truncated, so the response tail always
survives). Char models join the same texts with a newline, which is part of
the 70-symbol alphabet.
"""

from __future__ import annotations

import numpy as np

from .corpus import Example
from .errors import ConfigError
from .nn import EncodedDataset
from .tokens import (CharAlphabet, SEP_TOKEN, Vocabulary, encode_chars,
                     encode_words, tokenize)


def class_index_map(categories) -> dict[str, int]:
    return {c.id: i for i, c in enumerate(categories)}


def example_tokens(example: Example) -> list[str]:
    tokens: list[str] = []
    for _, text in example.context:
        tokens.extend(tokenize(text))
        tokens.append(SEP_TOKEN)
    tokens.extend(tokenize(example.response_text))
    return tokens


def example_char_text(example: Example) -> str:
    parts = [text for _, text in example.context]
    parts.append(example.response_text)
    return "\n".join(parts)


def _labels(examples, class_to_index) -> np.ndarray:
    labels = np.empty(len(examples), dtype=np.int64)
    for i, ex in enumerate(examples):
        idx = class_to_index.get(ex.label)
        if idx is None:
            raise ConfigError(f"example label {ex.label!r} not in the class set")
        labels[i] = idx
    return labels


def encode_word_inputs(examples, vocab: Vocabulary, max_len: int = 128):
    inputs = np.empty((len(examples), max_len), dtype=np.int32)
    lengths = np.empty(len(examples), dtype=np.int64)
    for i, ex in enumerate(examples):
        inputs[i], lengths[i] = encode_words(example_tokens(ex), vocab, max_len)
    return inputs, lengths


def encode_char_inputs(examples, alphabet: CharAlphabet, max_len: int = 1014):
    inputs = np.empty((len(examples), max_len), dtype=np.int32)
    lengths = np.empty(len(examples), dtype=np.int64)
    for i, ex in enumerate(examples):
        inputs[i], lengths[i] = encode_chars(example_char_text(ex), alphabet, max_len)
    return inputs, lengths


def encode_word_examples(examples, vocab: Vocabulary, class_to_index,
                         max_len: int = 128) -> EncodedDataset:
    inputs, lengths = encode_word_inputs(examples, vocab, max_len)
    return EncodedDataset(inputs, lengths, _labels(examples, class_to_index))


def encode_char_examples(examples, alphabet: CharAlphabet, class_to_index,
                         max_len: int = 1014) -> EncodedDataset:
    inputs, lengths = encode_char_inputs(examples, alphabet, max_len)
    return EncodedDataset(inputs, lengths, _labels(examples, class_to_index))
