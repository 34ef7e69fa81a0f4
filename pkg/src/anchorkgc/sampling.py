"""Per-query negative tails: in-batch gold tails plus uniform random draws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kgdata import FilterIndex

NEGATIVE_MODES = ("in_batch", "in_batch_plus_uniform")


@dataclass
class NegativeBatch:
    queries: np.ndarray  # (B, 3) head, relation, gold tail
    negative_ids: np.ndarray  # (B, K)
    mask: np.ndarray  # (B, K) True where the negative is invalid
    n_in_batch: int

    @property
    def in_batch(self) -> np.ndarray:
        return self.negative_ids[:, : self.n_in_batch]

    @property
    def uniform(self) -> np.ndarray:
        return self.negative_ids[:, self.n_in_batch :]


def in_batch_negatives(tails: np.ndarray) -> np.ndarray:
    """Row ``q`` holds the gold tails of every other query, in batch order."""
    B = len(tails)
    others = ~np.eye(B, dtype=bool)
    return np.broadcast_to(tails, (B, B))[others].reshape(B, B - 1)


def build_negatives(
    batch,
    num_entities,
    filter_index: FilterIndex | None = None,
    seed=None,
    mode: str = "in_batch_plus_uniform",
    mask_false_negatives: bool = True,
) -> NegativeBatch:
    """Negatives for a batch of (h, r, t) rows.

    ``num_entities`` may be a graph. With ``in_batch_plus_uniform`` the same
    ``B`` uniform draws over training entities are appended to every query.
    A negative is masked if it equals the query's gold tail or, with
    ``mask_false_negatives``, is a known training tail of ``(h, r)``.
    """
    if mode not in NEGATIVE_MODES:
        raise ValueError(f"negatives must be one of {NEGATIVE_MODES}, got {mode!r}")
    if hasattr(num_entities, "num_entities"):
        num_entities = num_entities.num_entities
    q = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    B = len(q)
    if B < 2:
        raise ValueError("need a batch of at least 2 queries for in-batch negatives")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    neg = in_batch_negatives(q[:, 2])
    if mode == "in_batch_plus_uniform":
        uniform = rng.integers(0, num_entities, size=B)
        neg = np.concatenate([neg, np.broadcast_to(uniform, (B, B))], axis=1)
    neg = np.ascontiguousarray(neg)
    mask = neg == q[:, 2:3]
    if mask_false_negatives and filter_index is not None:
        for i, (h, r, _) in enumerate(q):
            known = filter_index.tails(h, r)
            if known:
                mask[i] |= np.isin(neg[i], list(known))
    return NegativeBatch(q, neg, mask, B - 1)
