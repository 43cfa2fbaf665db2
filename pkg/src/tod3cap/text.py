"""Caption tokenization shared by the metrics and the corpus statistics."""

from __future__ import annotations

import unicodedata
from typing import List

TOKENIZER_VERSION = "lower-ws-edgepunct-v1"


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_punct(word: str) -> str:
    start, end = 0, len(word)
    while start < end and _is_punct(word[start]):
        start += 1
    while end > start and _is_punct(word[end - 1]):
        end -= 1
    return word[start:end]


def tokenize(text: str) -> List[str]:
    """Lowercase, split on Unicode whitespace, strip edge punctuation.

    Interior punctuation survives (``"ego-car's"`` stays one token) and
    tokens that were pure punctuation are dropped.
    """
    tokens = []
    for word in text.lower().split():
        word = _strip_punct(word)
        if word:
            tokens.append(word)
    return tokens
