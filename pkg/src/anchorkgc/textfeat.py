"""Hashed word tokenization and encoder input layout.

Text is lowercased, split into alphanumeric runs, and each word is hashed with
64-bit FNV-1a into ``[0, H)``. The separator gets the reserved index ``H``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

DEFAULT_HASH_VOCAB = 32768
DEFAULT_MAX_LEN = 60

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_WORD = re.compile(r"[^\W_]+")


class Segment(IntEnum):
    ANCHOR = 0
    HEAD_TEXT = 1
    SEPARATOR = 2
    RELATION_TEXT = 3
    ENTITY_TEXT = 4


def tokenize(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def hash_token(word: str, hash_vocab: int = DEFAULT_HASH_VOCAB) -> int:
    if hash_vocab < 2:
        raise ValueError("hash vocabulary size must be >= 2")
    return fnv1a_64(word.encode("utf-8")) % hash_vocab


def hash_words(text: str, hash_vocab: int = DEFAULT_HASH_VOCAB) -> list[int]:
    return [hash_token(w, hash_vocab) for w in tokenize(text)]


@dataclass(frozen=True)
class TokenSequence:
    """Encoder input. Anchor slots store the anchor number in ``token_ids``."""

    token_ids: np.ndarray
    segments: np.ndarray

    def __len__(self) -> int:
        return len(self.token_ids)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TokenSequence)
            and np.array_equal(self.token_ids, other.token_ids)
            and np.array_equal(self.segments, other.segments)
        )

    def __hash__(self) -> int:
        return hash((self.token_ids.tobytes(), self.segments.tobytes()))

    @property
    def text_ids(self) -> np.ndarray:
        seg = self.segments
        return self.token_ids[(seg != Segment.ANCHOR) & (seg != Segment.SEPARATOR)]


def assemble(
    entity_ids: list[int],
    relation_ids: list[int] | None,
    n_anchors: int,
    max_len: int = DEFAULT_MAX_LEN,
    hash_vocab: int = DEFAULT_HASH_VOCAB,
) -> TokenSequence:
    """Lay out pre-hashed word ids; see :func:`build_sequence`."""
    if max_len <= n_anchors + 2:
        raise ValueError(f"max_len={max_len} must exceed n_anchors + 2 = {n_anchors + 2}")
    budget = max_len - n_anchors
    ent = list(entity_ids)
    rel: list[int] = []
    if relation_ids is not None:
        budget -= 1  # separator
        rel = list(relation_ids)[:budget]
        ent = ent[: max(budget - len(rel), 0)]
    else:
        ent = ent[:budget]
    is_context = relation_ids is not None
    ids = list(range(n_anchors)) + ent
    segs = [Segment.ANCHOR] * n_anchors
    segs += [Segment.HEAD_TEXT if is_context else Segment.ENTITY_TEXT] * len(ent)
    if is_context:
        ids += [hash_vocab] + rel
        segs += [Segment.SEPARATOR] + [Segment.RELATION_TEXT] * len(rel)
    return TokenSequence(np.asarray(ids, dtype=np.int64), np.asarray(segs, dtype=np.int8))


def build_sequence(
    name: str,
    description: str,
    relation_text: str | None = None,
    n_anchors: int = 10,
    max_len: int = DEFAULT_MAX_LEN,
    hash_vocab: int = DEFAULT_HASH_VOCAB,
) -> TokenSequence:
    """``[anchors] + words(name, description) [+ SEP + words(relation)]``.

    Entity words are truncated before relation words, so a nonempty relation
    always keeps at least one token.
    """
    ent = hash_words(f"{name} {description}", hash_vocab)
    rel = None if relation_text is None else hash_words(relation_text, hash_vocab)
    return assemble(ent, rel, n_anchors, max_len, hash_vocab)
