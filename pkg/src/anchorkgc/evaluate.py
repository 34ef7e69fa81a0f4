"""Tail ranking with the unified encoder, re-ranking and filtered metrics."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .encoder import encode_batch, normalize_rows, pack, project
from .kgdata import FilterIndex, KnowledgeGraph, NeighborIndex, build_filter_index
from .model import Model, TextIndex

CHUNK = 256


def _side(graph: KnowledgeGraph, split: str) -> str:
    return "inductive" if graph.inductive_entities is not None and split != "train" else "train"


def default_filter(graph: KnowledgeGraph, split: str) -> FilterIndex:
    """Filter over every split that shares ``split``'s entity index space."""
    if graph.inductive_entities is not None and split == "train":
        return build_filter_index(graph, ("train",))
    return build_filter_index(graph)


def encode_sequences(model: Model, seqs) -> np.ndarray:
    """Encode in fixed-size chunks so identical inputs give identical bits."""
    outs = []
    for i in range(0, len(seqs), CHUNK):
        out, _ = encode_batch(pack(seqs[i : i + CHUNK], model.config.n_anchors), model.decomp.A, model.encoder)
        outs.append(out)
    return np.vstack(outs) if outs else np.zeros((0, model.encoder.dim))


def encode_entities(model: Model, text: TextIndex, side: str = "train", entities=None) -> np.ndarray:
    if entities is None:
        entities = range(len(text.words[side]))
    return encode_sequences(model, [text.entity_sequence(e, side) for e in entities])


def encode_contexts(model: Model, text: TextIndex, heads, relations, side: str = "train") -> np.ndarray:
    return encode_sequences(model, [text.context_sequence(h, r, side) for h, r in zip(heads, relations)])


@dataclass
class CandidateCache:
    """Per-evaluation-pass candidate embeddings and their projections."""

    unit: np.ndarray
    projected: np.ndarray
    projected_sq: np.ndarray

    @classmethod
    def build(cls, model: Model, tails: np.ndarray) -> "CandidateCache":
        unit, _ = normalize_rows(tails)
        gt = project(model.head, tails)
        return cls(unit, gt, np.sum(gt**2, axis=1))


def score_candidates(model: Model, contexts: np.ndarray, cache: CandidateCache, lam: float) -> np.ndarray:
    """``cos(c, t) - lam * ||g(c) - g(t)||^2`` for every (query, candidate) pair."""
    cu, _ = normalize_rows(np.atleast_2d(contexts))
    scores = cu @ cache.unit.T
    if lam:
        gc = project(model.head, np.atleast_2d(contexts))
        sq = np.sum(gc**2, axis=1)[:, None] + cache.projected_sq[None, :] - 2.0 * gc @ cache.projected.T
        scores = scores - lam * np.maximum(sq, 0.0)
    return scores


def score_all(model: Model, text: TextIndex, h: int, r: int, side: str = "train", cache=None, lam=None) -> np.ndarray:
    """Scores of every candidate tail for the query ``(h, r)``.

    Without ``cache`` the candidates are re-encoded, exactly as a cache would be built.
    """
    lam = model.config.lambda_align if lam is None else lam
    if cache is None:
        cache = CandidateCache.build(model, encode_entities(model, text, side))
    c = encode_contexts(model, text, [h], [r], side)
    return score_candidates(model, c, cache, lam)[0]


def rerank(scores: np.ndarray, h: int, neighbors: NeighborIndex | None, alpha: float, beta: float) -> np.ndarray:
    """``+alpha`` for candidates in the head's k-hop set, ``-beta`` for the head itself."""
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    out = np.array(scores, dtype=np.float64, copy=True)
    if alpha and neighbors is not None:
        out[np.fromiter(neighbors.neighbors(h), dtype=np.int64)] += alpha
    if beta:
        out[h] -= beta
    return out


def filtered_rank(scores: np.ndarray, gold: int, h: int, r: int, filter_index: FilterIndex | None) -> int:
    """1-based rank of ``gold`` among candidates not known to be true; ties count against gold."""
    scores = np.asarray(scores)
    if not 0 <= gold < len(scores):
        raise ValueError(f"gold tail {gold} not among {len(scores)} candidates")
    beats = scores >= scores[gold]
    beats[gold] = False
    if filter_index is not None:
        known = filter_index.tails(h, r)
        if known:
            beats[np.fromiter(known, dtype=np.int64)] = False
    return int(beats.sum()) + 1


def raw_rank(scores: np.ndarray, gold: int) -> int:
    return filtered_rank(scores, gold, -1, -1, None)


def _metrics(ranks: np.ndarray) -> dict[str, float]:
    if not len(ranks):
        return {"mrr": 0.0, "hits1": 0.0, "hits3": 0.0, "hits10": 0.0, "queries": 0}
    ranks = np.asarray(ranks, dtype=np.float64)
    return {
        "mrr": float(np.mean(1.0 / ranks)),
        "hits1": float(np.mean(ranks <= 1)),
        "hits3": float(np.mean(ranks <= 3)),
        "hits10": float(np.mean(ranks <= 10)),
        "queries": int(len(ranks)),
    }


@dataclass
class RankingReport:
    split: str
    ranks: np.ndarray
    relations: np.ndarray
    inverse: np.ndarray
    relation_ids: list[str] = field(default_factory=list)

    @property
    def metrics(self) -> dict[str, float]:
        return _metrics(self.ranks)

    @property
    def mrr(self) -> float:
        return self.metrics["mrr"]

    @property
    def hits(self) -> dict[int, float]:
        m = self.metrics
        return {1: m["hits1"], 3: m["hits3"], 10: m["hits10"]}

    @property
    def directions(self) -> dict[str, dict[str, float]]:
        return {
            "forward": _metrics(self.ranks[~self.inverse]),
            "inverse": _metrics(self.ranks[self.inverse]),
        }

    def relation_errors(self) -> list[tuple[str, int, int]]:
        """``(relation_id, errors, total)`` where an error is a query not ranked first."""
        rows = []
        for rel in np.unique(self.relations):
            sel = self.relations == rel
            name = self.relation_ids[rel] if rel < len(self.relation_ids) else str(rel)
            rows.append((name, int(np.sum(self.ranks[sel] > 1)), int(sel.sum())))
        return rows

    def to_lines(self) -> str:
        lines = [f"split = {self.split}"]
        lines += [f"{k} = {format(v, '.6f') if isinstance(v, float) else v}" for k, v in self.metrics.items()]
        for d, m in self.directions.items():
            lines += [f"{d}.{k} = {format(v, '.6f') if isinstance(v, float) else v}" for k, v in m.items()]
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        head = f"{'':10s} {'MRR':>8s} {'Hits@1':>8s} {'Hits@3':>8s} {'Hits@10':>8s} {'queries':>8s}"
        rows = [head]
        for label, m in [("all", self.metrics)] + list(self.directions.items()):
            rows.append(
                f"{label:10s} {m['mrr']:8.4f} {m['hits1']:8.4f} {m['hits3']:8.4f} {m['hits10']:8.4f} {m['queries']:8d}"
            )
        return "\n".join(rows) + "\n"

    def write(self, directory: str, prefix: str = "") -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, f"{prefix}metrics.txt"), "w", encoding="utf-8") as f:
            f.write(self.to_lines())
        with open(os.path.join(directory, f"{prefix}relations.csv"), "w", encoding="utf-8") as f:
            f.write("relation_id,errors,total\n")
            for name, err, tot in self.relation_errors():
                f.write(f"{name},{err},{tot}\n")


def rank_queries(
    model: Model,
    graph: KnowledgeGraph,
    triples: np.ndarray,
    split: str = "test",
    text: TextIndex | None = None,
    filter_index: FilterIndex | None = None,
    neighbors: NeighborIndex | None = None,
    alpha: float | None = None,
    beta: float | None = None,
    lam: float | None = None,
    cache: CandidateCache | None = None,
) -> np.ndarray:
    """Filtered, re-ranked rank of the gold tail for each (h, r, t) row."""
    c = model.config
    alpha = c.alpha if alpha is None else alpha
    beta = c.beta if beta is None else beta
    lam = c.lambda_align if lam is None else lam
    side = _side(graph, split)
    if text is None:
        text = TextIndex(graph, c.n_anchors, c.max_len, c.hash_vocab)
    if cache is None:
        cache = CandidateCache.build(model, encode_entities(model, text, side))
    if side == "inductive":
        neighbors = None  # unseen entities have no training-graph neighborhood
    ranks = np.zeros(len(triples), dtype=np.int64)
    for start in range(0, len(triples), CHUNK):
        block = triples[start : start + CHUNK]
        ctx = encode_contexts(model, text, block[:, 0], block[:, 1], side)
        scores = score_candidates(model, ctx, cache, lam)
        for i, (h, r, t) in enumerate(block):
            s = rerank(scores[i], h, neighbors, alpha, beta) if (alpha or beta) else scores[i]
            ranks[start + i] = filtered_rank(s, t, h, r, filter_index)
    return ranks


def evaluate_split(
    model: Model,
    graph: KnowledgeGraph,
    split: str = "test",
    text: TextIndex | None = None,
    filter_index: FilterIndex | None = None,
    neighbors: NeighborIndex | None = None,
    **kwargs,
) -> RankingReport:
    """Filtered MRR / Hits@N over both query directions of ``split``.

    The default filter covers every split in the candidate index space.
    """
    c = model.config
    if filter_index is None:
        filter_index = default_filter(graph, split)
    if neighbors is None and _side(graph, split) == "train":
        neighbors = NeighborIndex(graph, c.k_hop)
    triples = graph.split(split)
    ranks = rank_queries(model, graph, triples, split, text, filter_index, neighbors, **kwargs)
    inverse = np.array([graph.is_inverse(r) for r in triples[:, 1]], dtype=bool)
    return RankingReport(split, ranks, triples[:, 1].copy(), inverse.reshape(-1), [r.id for r in graph.relations])


def select_beta(
    model: Model,
    graph: KnowledgeGraph,
    split: str = "valid",
    grid=(0.0, 0.1, 0.2),
    text: TextIndex | None = None,
) -> tuple[float, dict[float, float]]:
    """Head penalty with the best MRR on ``split``; ties go to the smaller value.

    Candidate embeddings are encoded once and shared across the grid.
    """
    c = model.config
    if text is None:
        text = TextIndex(graph, c.n_anchors, c.max_len, c.hash_vocab)
    side = _side(graph, split)
    cache = CandidateCache.build(model, encode_entities(model, text, side))
    fi = default_filter(graph, split)
    nb = NeighborIndex(graph, c.k_hop) if side == "train" else None
    triples = graph.split(split)
    scores = {}
    for b in sorted(grid):
        ranks = rank_queries(model, graph, triples, split, text, fi, nb, beta=b, cache=cache)
        scores[float(b)] = _metrics(ranks)["mrr"]
    best = max(scores, key=lambda b: (scores[b], -b))
    return best, scores


def random_ranking_baseline(
    graph: KnowledgeGraph,
    split: str = "test",
    filter_index: FilterIndex | None = None,
    trials: int = 200,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte-Carlo MRR of a scorer that ranks candidates uniformly at random.

    Returns ``(mean, standard error)`` over ``trials`` simulated evaluations.
    """
    if filter_index is None:
        filter_index = default_filter(graph, split)
    triples = graph.split(split)
    n_cand = len(graph.eval_entities(split))
    sizes = np.empty(len(triples), dtype=np.int64)
    for i, (h, r, t) in enumerate(triples):
        known = filter_index.tails(h, r)
        sizes[i] = n_cand - len(known - {int(t)})
    rng = np.random.default_rng(seed)
    mrrs = np.empty(trials)
    for k in range(trials):
        ranks = rng.integers(1, sizes + 1)
        mrrs[k] = np.mean(1.0 / ranks)
    return float(mrrs.mean()), float(mrrs.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0


def expected_random_mrr(graph: KnowledgeGraph, split: str = "test", filter_index: FilterIndex | None = None) -> float:
    """Closed form ``mean_q H(n_q) / n_q`` matching :func:`random_ranking_baseline`."""
    if filter_index is None:
        filter_index = default_filter(graph, split)
    triples = graph.split(split)
    n_cand = len(graph.eval_entities(split))
    vals = []
    for h, r, t in triples:
        n = n_cand - len(filter_index.tails(h, r) - {int(t)})
        vals.append(np.sum(1.0 / np.arange(1, n + 1)) / n)
    return float(np.mean(vals)) if vals else 0.0
