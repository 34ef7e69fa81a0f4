"""Shared-parameter sequence encoder over ``[anchors] + text`` token sequences.

For positions ``p`` of a sequence::

    x_p = v_p + P[p]            v_p: anchor, token-table row or separator vector
    y_p = tanh(W1 x_p + b1)
    out = W2 mean_p(y_p) + b2

Anchor slots are read from the live anchor matrix through a shared linear map
(``A @ anchor_proj``), so the unified loss sends gradient into ``A``. The
same parameters encode ``(head, relation)`` contexts and tail entities.

Every sequence begins with the same anchor prefix at the same positions, so
that prefix is transformed once per batch and reused.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .textfeat import Segment, TokenSequence


class SparseRows(NamedTuple):
    """Row-sparse gradient: ``values[i]`` belongs to row ``rows[i]`` (rows unique, sorted)."""

    rows: np.ndarray
    values: np.ndarray

    def to_dense(self, shape) -> np.ndarray:
        out = np.zeros(shape)
        out[self.rows] = self.values
        return out


def _sum_rows(ids: np.ndarray, values: np.ndarray) -> SparseRows:
    rows, inverse = np.unique(ids, return_inverse=True)
    acc = np.zeros((len(rows), values.shape[1]))
    np.add.at(acc, inverse, values)
    return SparseRows(rows, acc)


@dataclass
class EncoderParams:
    token_table: np.ndarray
    sep_vector: np.ndarray
    position_table: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    anchor_proj: np.ndarray
    anchor_tokens: np.ndarray | None = None  # untied anchors when set

    @classmethod
    def init(
        cls,
        hash_vocab: int,
        d_unified: int,
        max_len: int,
        d_structure: int,
        n_anchors: int,
        seed: int = 0,
        tie_anchors: bool = True,
    ) -> "EncoderParams":
        rng = np.random.default_rng(seed)
        du = d_unified
        return cls(
            token_table=rng.standard_normal((hash_vocab, du)),
            sep_vector=rng.standard_normal(du),
            position_table=0.1 * rng.standard_normal((max_len, du)),
            W1=rng.standard_normal((du, du)) / np.sqrt(du),
            b1=np.zeros(du),
            W2=rng.standard_normal((du, du)) / np.sqrt(du),
            b2=np.zeros(du),
            anchor_proj=rng.standard_normal((d_structure, du)) / np.sqrt(d_structure),
            anchor_tokens=None if tie_anchors else rng.standard_normal((n_anchors, du)),
        )

    @property
    def hash_vocab(self) -> int:
        return self.token_table.shape[0]

    @property
    def dim(self) -> int:
        return self.W1.shape[0]

    @property
    def max_len(self) -> int:
        return self.position_table.shape[0]

    def anchor_inputs(self, A: np.ndarray) -> np.ndarray:
        if self.anchor_tokens is not None:
            return self.anchor_tokens
        return A @ self.anchor_proj

    def arrays(self) -> dict[str, np.ndarray]:
        out = {
            "token_table": self.token_table,
            "sep_vector": self.sep_vector,
            "position_table": self.position_table,
            "W1": self.W1,
            "b1": self.b1,
            "W2": self.W2,
            "b2": self.b2,
            "anchor_proj": self.anchor_proj,
        }
        if self.anchor_tokens is not None:
            out["anchor_tokens"] = self.anchor_tokens
        return out


@dataclass
class ProjectionHead:
    """Affine map ``g(x) = G x + bias`` from unified to structure space."""

    G: np.ndarray
    bias: np.ndarray

    @classmethod
    def init(cls, d_structure: int, d_unified: int, seed: int = 0) -> "ProjectionHead":
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((d_structure, d_unified)) / np.sqrt(d_unified), np.zeros(d_structure))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return project(self, x)


def project(g: ProjectionHead, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != g.G.shape[1]:
        raise ValueError(f"input dim {x.shape[-1]} != projection input dim {g.G.shape[1]}")
    return x @ g.G.T + g.bias


def project_backward(g: ProjectionHead, x: np.ndarray, dout: np.ndarray):
    """Returns ``(dG, dbias, dx)`` for a batch ``x`` of shape (n, D_u)."""
    x2 = np.atleast_2d(x)
    d2 = np.atleast_2d(dout)
    return d2.T @ x2, d2.sum(0), (d2 @ g.G).reshape(np.shape(x))


# ---------------------------------------------------------------------------
# batched sequence encoding


class PackedBatch(NamedTuple):
    ids: np.ndarray  # (S, L) text/sep ids after the anchor prefix; 0 at padding
    seg: np.ndarray  # (S, L) Segment codes, -1 at padding
    lengths: np.ndarray  # (S,) full lengths including anchors
    n_anchors: int


def pack(seqs: list[TokenSequence], n_anchors: int) -> PackedBatch:
    if not seqs:
        raise ValueError("empty batch")
    anchors = np.arange(n_anchors)
    for s in seqs:
        if len(s) < n_anchors or not (
            np.all(s.segments[:n_anchors] == Segment.ANCHOR)
            and np.array_equal(s.token_ids[:n_anchors], anchors)
        ):
            raise ValueError("sequence must start with all anchor slots in order")
    width = max(len(s) for s in seqs) - n_anchors
    S = len(seqs)
    ids = np.zeros((S, width), dtype=np.int64)
    seg = np.full((S, width), -1, dtype=np.int8)
    for i, s in enumerate(seqs):
        n = len(s) - n_anchors
        ids[i, :n] = s.token_ids[n_anchors:]
        seg[i, :n] = s.segments[n_anchors:]
    lengths = np.array([len(s) for s in seqs], dtype=np.float64)
    return PackedBatch(ids, seg, lengths, n_anchors)


class EncodeCache(NamedTuple):
    batch: PackedBatch
    Au: np.ndarray
    Za: np.ndarray
    Ya: np.ndarray
    Z: np.ndarray
    Y: np.ndarray
    pooled: np.ndarray


def encode_batch(batch: PackedBatch, A: np.ndarray, p: EncoderParams):
    """Encode packed sequences; returns ``(out (S, D_u), cache)``."""
    n = batch.n_anchors
    width = batch.ids.shape[1]
    if n + width > p.max_len:
        raise ValueError(f"sequence length {n + width} exceeds position table {p.max_len}")
    Au = p.anchor_inputs(A)
    Za = Au + p.position_table[:n]
    Ya = np.tanh(Za @ p.W1.T + p.b1)
    seg = batch.seg
    X = np.zeros(seg.shape + (p.dim,))
    text = seg > Segment.ANCHOR
    text &= seg != Segment.SEPARATOR
    X[text] = p.token_table[batch.ids[text]]
    X[seg == Segment.SEPARATOR] = p.sep_vector
    Z = X + p.position_table[n : n + width]
    Y = np.tanh(Z @ p.W1.T + p.b1)
    Y *= (seg >= 0)[..., None]
    pooled = (Ya.sum(0) + Y.sum(1)) / batch.lengths[:, None]
    out = pooled @ p.W2.T + p.b2
    return out, EncodeCache(batch, Au, Za, Ya, Z, Y, pooled)


def encode_backward(dout: np.ndarray, cache: EncodeCache, A: np.ndarray, p: EncoderParams):
    """Backprop ``dout`` (S, D_u). Returns ``(grads, dA)``.

    ``grads['token_table']`` is a :class:`SparseRows`; ``dA`` is ``None`` when
    anchors are untied from the structure branch.
    """
    batch = cache.batch
    n = batch.n_anchors
    width = batch.ids.shape[1]
    seg = batch.seg
    g: dict = {}
    g["W2"] = dout.T @ cache.pooled
    g["b2"] = dout.sum(0)
    dpooled = (dout @ p.W2) / batch.lengths[:, None]
    dZ = dpooled[:, None, :] * (1.0 - cache.Y**2)
    dZ *= (seg >= 0)[..., None]
    dZa = dpooled.sum(0)[None, :] * (1.0 - cache.Ya**2)
    flatZ = cache.Z.reshape(-1, p.dim)
    flat_dZ = dZ.reshape(-1, p.dim)
    g["W1"] = flat_dZ.T @ flatZ + dZa.T @ cache.Za
    g["b1"] = flat_dZ.sum(0) + dZa.sum(0)
    dX = dZ @ p.W1
    dXa = dZa @ p.W1
    dpos = np.zeros_like(p.position_table)
    dpos[:n] = dXa
    dpos[n : n + width] = dX.sum(0)
    g["position_table"] = dpos
    text = (seg > Segment.ANCHOR) & (seg != Segment.SEPARATOR)
    g["token_table"] = _sum_rows(batch.ids[text], dX[text])
    g["sep_vector"] = dX[seg == Segment.SEPARATOR].sum(0)
    dA = None
    if p.anchor_tokens is not None:
        g["anchor_tokens"] = dXa
    else:
        g["anchor_proj"] = A.T @ dXa
        dA = dXa @ p.anchor_proj.T
    return g, dA


def embed_sequence(seq: TokenSequence, A: np.ndarray, p: EncoderParams) -> np.ndarray:
    n = int(np.sum(seq.segments == Segment.ANCHOR))
    out, _ = encode_batch(pack([seq], n), A, p)
    return out[0]


# ---------------------------------------------------------------------------
# cosine similarity


def cosine(c: np.ndarray, t: np.ndarray) -> float:
    c = np.asarray(c, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    nc, nt = np.linalg.norm(c), np.linalg.norm(t)
    if nc == 0 or nt == 0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return float(np.clip(c @ t / (nc * nt), -1.0, 1.0))


def normalize_rows(X: np.ndarray):
    """Unit rows and their norms; raises on any zero row."""
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ValueError("cosine similarity undefined for a zero vector")
    return X / norms[:, None], norms


def unit_backward(unit: np.ndarray, norms: np.ndarray, dunit: np.ndarray) -> np.ndarray:
    """Gradient through ``x -> x / ||x||`` row-wise."""
    proj = np.sum(dunit * unit, axis=1, keepdims=True)
    return (dunit - unit * proj) / norms[:, None]
