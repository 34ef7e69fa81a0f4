"""Structure branch: anchors ``A`` (N x D), transformation ``T`` (V x N), relations ``R``.

Entity ``i`` has structure embedding ``T[i] @ A``. Anchors start either
uniformly at random or as K-means centroids of per-entity text features, in
which case ``T`` is the ridge least-squares solution of ``T @ A ~= E``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .textfeat import tokenize, hash_token, DEFAULT_HASH_VOCAB

logger = logging.getLogger(__name__)


class AnchorDecomposition:
    """Holds ``A``, ``T`` and ``R``.

    Reads of ``T`` go through a counting property so callers can check that the
    unified (inductive) scoring path never touches it. ``T`` may be absent
    (``None``) in inference-only views.
    """

    def __init__(self, A: np.ndarray, T: np.ndarray | None, R: np.ndarray):
        self.A = np.asarray(A, dtype=np.float64)
        self._T = None if T is None else np.asarray(T, dtype=np.float64)
        self.R = np.asarray(R, dtype=np.float64)
        self.t_reads = 0
        if self._T is not None and self._T.shape[1] != self.A.shape[0]:
            raise ValueError(f"T has {self._T.shape[1]} columns but A has {self.A.shape[0]} rows")
        if self.R.shape[1] != self.A.shape[1]:
            raise ValueError("R and A must share the structure dimension")

    @property
    def T(self) -> np.ndarray:
        self.t_reads += 1
        if self._T is None:
            raise AttributeError("transformation matrix is not loaded in this view")
        return self._T

    @T.setter
    def T(self, value: np.ndarray) -> None:
        self._T = np.asarray(value, dtype=np.float64)

    @property
    def has_T(self) -> bool:
        return self._T is not None

    @property
    def n_anchors(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def num_entities(self) -> int:
        return 0 if self._T is None else self._T.shape[0]

    def entity_embedding(self, index) -> np.ndarray:
        """``T[index] @ A``; raises ``IndexError`` for non-training entities."""
        idx = np.asarray(index)
        T = self.T
        if np.any(idx < 0) or np.any(idx >= T.shape[0]):
            raise IndexError(f"entity index out of range [0, {T.shape[0]})")
        return T[idx] @ self.A

    def without_T(self) -> "AnchorDecomposition":
        return AnchorDecomposition(self.A, None, self.R)


def entity_structure_embedding(decomp: AnchorDecomposition, index) -> np.ndarray:
    return decomp.entity_embedding(index)


def init_random(
    num_entities: int, n_anchors: int, dim: int, num_relations: int, seed: int = 0
) -> AnchorDecomposition:
    if min(num_entities, n_anchors, dim, num_relations) < 1:
        raise ValueError("all dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(dim)
    A = rng.uniform(-bound, bound, size=(n_anchors, dim))
    T = rng.uniform(-bound, bound, size=(num_entities, n_anchors))
    R = rng.uniform(-bound, bound, size=(num_relations, dim))
    return AnchorDecomposition(A, T, R)


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    objective: float
    history: list[float] = field(default_factory=list)
    n_iter: int = 0
    reseeded: int = 0


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # explicit differences keep assignments exact (no cancellation)
    return np.stack([((X - c) ** 2).sum(1) for c in C], axis=1)


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    chosen = [int(rng.integers(n))]
    closest = ((X - X[chosen[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a centre; pick unused indices
            unused = np.setdiff1d(np.arange(n), chosen)
            nxt = int(unused[0])
        else:
            nxt = int(rng.choice(n, p=closest / total))
        chosen.append(nxt)
        closest = np.minimum(closest, ((X - X[nxt]) ** 2).sum(1))
    return X[chosen].copy()


def kmeans(X: np.ndarray, n_clusters: int, max_iters: int = 100, seed: int = 0) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds.

    ``history[i]`` is the within-cluster sum of squares after the i-th
    assignment step. An empty cluster is moved onto the point farthest from
    its current centroid, which can only lower the objective.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if not 1 <= n_clusters <= n:
        raise ValueError(f"need 1 <= n_clusters <= {n}, got {n_clusters}")
    rng = np.random.default_rng(seed)
    C = _kmeans_pp(X, n_clusters, rng)
    history: list[float] = []
    labels = None
    reseeded = 0
    it = 0
    for it in range(1, max_iters + 1):
        d = _sq_dists(X, C)
        new_labels = d.argmin(1)
        history.append(float(np.sum((X - C[new_labels]) ** 2)))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=n_clusters)
        sums = np.zeros_like(C)
        np.add.at(sums, labels, X)
        nonempty = counts > 0
        C[nonempty] = sums[nonempty] / counts[nonempty, None]
        for j in np.flatnonzero(~nonempty):
            far = int(np.argmax(((X - C[labels]) ** 2).sum(1)))
            C[j] = X[far]
            labels[far] = j
            reseeded += 1
    labels = _sq_dists(X, C).argmin(1)
    objective = float(np.sum((X - C[labels]) ** 2))
    if reseeded:
        logger.info("k-means re-seeded %d empty clusters", reseeded)
    return KMeansResult(C, labels, objective, history, it, reseeded)


def init_kmeans(features: np.ndarray, n_anchors: int, max_iters: int = 100, seed: int = 0):
    """Cluster entity features; returns ``(A, assignments)``."""
    res = kmeans(features, n_anchors, max_iters, seed)
    return res.centroids, res.assignments


def fit_transform(E: np.ndarray, A: np.ndarray, ridge: float = 1e-6) -> np.ndarray:
    """Least-squares ``T`` with ``T @ A ~= E``: ``E A^T (A A^T + ridge I)^-1``."""
    E = np.asarray(E, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if E.shape[1] != A.shape[1]:
        raise ValueError(f"feature dim {E.shape[1]} != anchor dim {A.shape[1]}")
    if np.any(~A.any(axis=1)):
        raise ValueError("anchor matrix has an all-zero row")
    gram = A @ A.T + ridge * np.eye(A.shape[0])
    if ridge == 0:
        if np.linalg.matrix_rank(gram) < gram.shape[0]:
            raise np.linalg.LinAlgError("A A^T is singular; use a positive ridge")
    return np.linalg.solve(gram, A @ E.T).T


def _token_vector(index: int, dim: int) -> np.ndarray:
    v = np.random.default_rng(index).standard_normal(dim)
    return v / np.linalg.norm(v)


def text_feature_matrix(entities, dim: int, hash_vocab: int = DEFAULT_HASH_VOCAB) -> np.ndarray:
    """Per-entity unit vector: normalized sum of fixed random vectors of its hashed words.

    ``entities`` is a graph or any sequence of objects with ``name`` and
    ``description``. Entities without words get a zero row.
    """
    if hasattr(entities, "entities"):
        entities = entities.entities
    cache: dict[int, np.ndarray] = {}
    out = np.zeros((len(entities), dim))
    empty = 0
    for i, e in enumerate(entities):
        words = tokenize(f"{e.name} {e.description}")
        if not words:
            empty += 1
            continue
        for w in words:
            idx = hash_token(w, hash_vocab)
            if idx not in cache:
                cache[idx] = _token_vector(idx, dim)
            out[i] += cache[idx]
        norm = np.linalg.norm(out[i])
        if norm > 0:
            out[i] /= norm
    if empty:
        logger.warning("%d entities have no text tokens; their feature rows are zero", empty)
    return out


def read_feature_file(path: str) -> np.ndarray:
    """Header ``V D`` followed by V whitespace-separated rows."""
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: header must be 'V D'")
        v, d = int(header[0]), int(header[1])
        data = np.loadtxt(f, ndmin=2) if v else np.zeros((0, d))
    if data.shape != (v, d):
        raise ValueError(f"{path}: expected {v}x{d} values, got {data.shape}")
    return data


def write_feature_file(path: str, features: np.ndarray) -> None:
    features = np.asarray(features, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{features.shape[0]} {features.shape[1]}\n")
        for row in features:
            f.write(" ".join(repr(float(x)) for x in row) + "\n")


def init_from_features(
    features: np.ndarray,
    n_anchors: int,
    num_relations: int,
    seed: int = 0,
    max_iters: int = 100,
    ridge: float = 1e-6,
) -> tuple[AnchorDecomposition, KMeansResult]:
    """K-means anchors, least-squares ``T``, random ``R``."""
    res = kmeans(features, n_anchors, max_iters, seed)
    T = fit_transform(features, res.centroids, ridge)
    dim = features.shape[1]
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(dim)
    R = rng.uniform(-bound, bound, size=(num_relations, dim))
    return AnchorDecomposition(res.centroids, T, R), res
