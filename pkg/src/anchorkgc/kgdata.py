"""Knowledge-graph loading, indexing and validation.

A dataset directory holds three triple files (``train.txt``, ``valid.txt``,
``test.txt``, one ``head<TAB>relation<TAB>tail`` per line) and an entity
description file ``entities.txt`` (``entity-id<TAB>name<TAB>description``).
An optional ``relations.txt`` (``relation-id<TAB>name``) gives relation
names; without it the relation id itself is used as its text.

In transductive mode every entity lives in one vocabulary. In inductive mode
the training split has its own vocabulary and valid/test reference a second,
disjoint ``inductive_entities`` vocabulary.
"""

from __future__ import annotations

import logging
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

TRIPLE_FILES = ("train.txt", "valid.txt", "test.txt")
ENTITY_FILE = "entities.txt"
RELATION_FILE = "relations.txt"
META_FILE = "prepared.txt"
FILTER_FILE = "filter_index.txt"
NEIGHBOR_FILE = "neighbors.txt"

INVERSE_MARKER = "inverse"
SPLITS = ("train", "valid", "test")


class DatasetError(ValueError):
    """Raised for missing files, malformed lines or inconsistent ids."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class Entity:
    id: str
    name: str
    description: str = ""

    @property
    def text(self) -> str:
        return f"{self.name} {self.description}".strip()


@dataclass(frozen=True)
class Relation:
    id: str
    name: str


def _empty_triples() -> np.ndarray:
    return np.zeros((0, 3), dtype=np.int64)


@dataclass
class KnowledgeGraph:
    entities: list[Entity]
    relations: list[Relation]
    train: np.ndarray = field(default_factory=_empty_triples)
    valid: np.ndarray = field(default_factory=_empty_triples)
    test: np.ndarray = field(default_factory=_empty_triples)
    inductive_entities: list[Entity] | None = None
    num_base_relations: int = -1
    augmented: bool = False

    def __post_init__(self):
        for name in SPLITS:
            arr = np.asarray(getattr(self, name), dtype=np.int64).reshape(-1, 3)
            setattr(self, name, arr)
        if self.num_base_relations < 0:
            self.num_base_relations = len(self.relations)
        self.validate()

    @property
    def mode(self) -> str:
        return "transductive" if self.inductive_entities is None else "inductive"

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise KeyError(f"unknown split {name!r}")
        return getattr(self, name)

    def eval_entities(self, split: str) -> list[Entity]:
        """Candidate vocabulary for ranking queries of ``split``."""
        if self.inductive_entities is not None and split != "train":
            return self.inductive_entities
        return self.entities

    def is_inverse(self, relation: int) -> bool:
        return self.augmented and relation >= self.num_base_relations

    def validate(self) -> None:
        for vocab, what in ((self.entities, "entity"), (self.relations, "relation")):
            ids = [v.id for v in vocab]
            if len(set(ids)) != len(ids):
                raise DatasetError(f"duplicate {what} ids in vocabulary")
        if self.inductive_entities is not None:
            ids = [e.id for e in self.inductive_entities]
            if len(set(ids)) != len(ids):
                raise DatasetError("duplicate entity ids in inductive vocabulary")
            overlap = {e.id for e in self.entities} & set(ids)
            if overlap:
                raise DatasetError(
                    f"inductive vocabulary overlaps training vocabulary: {sorted(overlap)[:5]}"
                )
        nr = self.num_relations
        for name in SPLITS:
            arr = self.split(name)
            if not len(arr):
                continue
            ne = len(self.eval_entities(name))
            if arr.min() < 0 or arr[:, [0, 2]].max() >= ne or arr[:, 1].max() >= nr:
                raise DatasetError(f"{name} split has out-of-range indices")
        if self.augmented and nr != 2 * self.num_base_relations:
            raise DatasetError("augmented graph must have exactly 2x base relations")

    def triples(self, split: str) -> list[Triple]:
        return [Triple(*map(int, row)) for row in self.split(split)]

    def summary(self) -> str:
        line = f"{self.num_entities} entities, {self.num_base_relations} relations"
        if self.augmented:
            line += f" ({self.num_relations} augmented)"
        if self.inductive_entities is not None:
            line += f", {len(self.inductive_entities)} inductive entities"
        counts = " / ".join(f"{len(self.split(s))} {s}" for s in SPLITS)
        return f"{line}; {counts} triples"


def _read_lines(path: str) -> Iterable[tuple[int, list[str]]]:
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            yield lineno, line.split("\t")


def _require(path: str) -> str:
    if not os.path.isfile(path):
        raise DatasetError(f"missing file: {path}")
    return path


def read_triple_file(path: str) -> list[tuple[str, str, str]]:
    rows = []
    for lineno, parts in _read_lines(_require(path)):
        if len(parts) != 3 or not all(p.strip() for p in parts):
            raise DatasetError(f"{path}:{lineno}: expected 3 tab-separated fields")
        rows.append((parts[0].strip(), parts[1].strip(), parts[2].strip()))
    return rows


def read_entity_file(path: str) -> list[Entity]:
    out = []
    for lineno, parts in _read_lines(_require(path)):
        if len(parts) < 2 or not parts[0].strip():
            raise DatasetError(f"{path}:{lineno}: expected entity-id<TAB>name<TAB>description")
        desc = "\t".join(parts[2:]).strip()
        out.append(Entity(parts[0].strip(), parts[1].strip(), desc))
    return out


def read_relation_file(path: str) -> list[Relation]:
    out = []
    for lineno, parts in _read_lines(_require(path)):
        if len(parts) != 2 or not parts[0].strip():
            raise DatasetError(f"{path}:{lineno}: expected relation-id<TAB>name")
        out.append(Relation(parts[0].strip(), parts[1].strip()))
    return out


def _entity_for(eid: str, described: dict[str, Entity]) -> Entity:
    if eid in described:
        return described[eid]
    logger.warning("entity %s has no description; using its id as name", eid)
    return Entity(eid, eid, "")


def _ordered_vocab(entity_list, described, rows, wanted):
    """Vocabulary over ``wanted`` ids: description-file order, then first appearance."""
    entities = [e for e in entity_list if e.id in wanted]
    index = {e.id: i for i, e in enumerate(entities)}
    for h, _, t in rows:
        for eid in (h, t):
            if eid not in index:
                index[eid] = len(entities)
                entities.append(_entity_for(eid, described))
    return entities, index


def load_dataset(directory: str, mode: str = "transductive") -> KnowledgeGraph:
    """Read a dataset directory into an indexed, validated graph (not augmented)."""
    if mode not in ("transductive", "inductive"):
        raise ValueError(f"mode must be transductive or inductive, got {mode!r}")
    if not os.path.isdir(directory):
        raise DatasetError(f"dataset directory not found: {directory}")
    raw = {s: read_triple_file(os.path.join(directory, f)) for s, f in zip(SPLITS, TRIPLE_FILES)}
    entity_list = read_entity_file(os.path.join(directory, ENTITY_FILE))
    described = {}
    for e in entity_list:
        if e.id in described:
            raise DatasetError(f"duplicate entity id {e.id!r} in {ENTITY_FILE}")
        described[e.id] = e

    rel_path = os.path.join(directory, RELATION_FILE)
    if os.path.isfile(rel_path):
        relations = read_relation_file(rel_path)
        known_rel = {r.id for r in relations}
        for s in SPLITS:
            for h, r, t in raw[s]:
                if r not in known_rel:
                    raise DatasetError(f"{s} triple references unknown relation id {r!r}")
    else:
        seen: dict[str, None] = {}
        for s in SPLITS:
            for _, r, _ in raw[s]:
                seen.setdefault(r)
        relations = [Relation(r, r) for r in seen]
    rel_index = {r.id: i for i, r in enumerate(relations)}

    if mode == "transductive":
        entities = list(entity_list)
        index = {e.id: i for i, e in enumerate(entities)}
        for h, _, t in raw["train"]:
            for eid in (h, t):
                if eid not in index:
                    index[eid] = len(entities)
                    entities.append(_entity_for(eid, described))
        for s in ("valid", "test"):
            for h, _, t in raw[s]:
                for eid in (h, t):
                    if eid not in index:
                        raise DatasetError(
                            f"{s} split references entity {eid!r} absent from training vocabulary"
                        )
        ind_entities = None
        ind_index = index
    else:
        train_ids = {eid for h, _, t in raw["train"] for eid in (h, t)}
        eval_ids = {eid for s in ("valid", "test") for h, _, t in raw[s] for eid in (h, t)}
        shared = train_ids & eval_ids
        if shared:
            raise DatasetError(
                f"inductive valid/test reference training entities: {sorted(shared)[:5]}"
            )
        entities, index = _ordered_vocab(entity_list, described, raw["train"], train_ids)
        ind_entities, ind_index = _ordered_vocab(
            entity_list, described, raw["valid"] + raw["test"], eval_ids
        )

    def encode(rows, ent_index):
        arr = np.array(
            [(ent_index[h], rel_index[r], ent_index[t]) for h, r, t in rows], dtype=np.int64
        )
        return arr.reshape(-1, 3)

    graph = KnowledgeGraph(
        entities=entities,
        relations=relations,
        train=encode(raw["train"], index),
        valid=encode(raw["valid"], ind_index),
        test=encode(raw["test"], ind_index),
        inductive_entities=ind_entities,
    )
    logger.info("loaded %s: %s", directory, graph.summary())
    return graph


def add_inverse_relations(graph: KnowledgeGraph) -> KnowledgeGraph:
    """Return a copy where every (h, r, t) also appears as (t, r^-1, h)."""
    if graph.augmented:
        raise ValueError("graph already has inverse relations")
    nr = graph.num_relations
    inverse = [Relation(f"{INVERSE_MARKER}:{r.id}", f"{INVERSE_MARKER} {r.name}") for r in graph.relations]

    def augment(arr):
        inv = np.stack([arr[:, 2], arr[:, 1] + nr, arr[:, 0]], axis=1)
        return np.concatenate([arr, inv]).reshape(-1, 3)

    return KnowledgeGraph(
        entities=graph.entities,
        relations=list(graph.relations) + inverse,
        train=augment(graph.train),
        valid=augment(graph.valid),
        test=augment(graph.test),
        inductive_entities=graph.inductive_entities,
        num_base_relations=nr,
        augmented=True,
    )


def base_graph(graph: KnowledgeGraph) -> KnowledgeGraph:
    """Strip inverse relations added by :func:`add_inverse_relations`."""
    if not graph.augmented:
        return graph
    nr = graph.num_base_relations

    def strip(arr):
        return arr[arr[:, 1] < nr]

    return KnowledgeGraph(
        entities=graph.entities,
        relations=graph.relations[:nr],
        train=strip(graph.train),
        valid=strip(graph.valid),
        test=strip(graph.test),
        inductive_entities=graph.inductive_entities,
    )


class FilterIndex:
    """Known-true ``(head, relation) -> {tail}`` lookup used for filtered ranking."""

    def __init__(self, triples: np.ndarray | Iterable = ()):
        self._tails: dict[tuple[int, int], set[int]] = {}
        for h, r, t in np.asarray(triples, dtype=np.int64).reshape(-1, 3):
            self._tails.setdefault((int(h), int(r)), set()).add(int(t))

    def tails(self, head: int, relation: int) -> frozenset[int]:
        return frozenset(self._tails.get((int(head), int(relation)), ()))

    def contains(self, head: int, relation: int, tail: int) -> bool:
        return int(tail) in self._tails.get((int(head), int(relation)), ())

    def __contains__(self, triple) -> bool:
        h, r, t = triple
        return self.contains(h, r, t)

    def __len__(self) -> int:
        return sum(len(v) for v in self._tails.values())

    def items(self):
        for key in sorted(self._tails):
            yield key, sorted(self._tails[key])

    def __eq__(self, other) -> bool:
        return isinstance(other, FilterIndex) and self._tails == other._tails


def build_filter_index(graph: KnowledgeGraph, splits: Iterable[str] | None = None) -> FilterIndex:
    """Index the given splits; by default every split sharing the evaluation vocabulary.

    Inductive graphs use two entity index spaces, so their default is valid ∪ test.
    """
    if splits is None:
        splits = SPLITS if graph.inductive_entities is None else ("valid", "test")
    splits = tuple(splits)
    if graph.inductive_entities is not None and "train" in splits and len(splits) > 1:
        raise ValueError("inductive train and eval splits use different entity indices")
    arrays = [graph.split(s) for s in splits]
    return FilterIndex(np.concatenate(arrays) if arrays else _empty_triples())


class NeighborIndex:
    """Undirected k-hop neighborhoods over the training split."""

    def __init__(self, graph: KnowledgeGraph, k: int = 2):
        if k < 0:
            raise ValueError("k must be non-negative")
        self.k = k
        self.num_entities = graph.num_entities
        adj: list[set[int]] = [set() for _ in range(self.num_entities)]
        for h, _, t in graph.train:
            adj[h].add(int(t))
            adj[t].add(int(h))
        self._adj = [sorted(a) for a in adj]
        self._cache: dict[int, frozenset[int]] = {}

    def neighbors(self, entity: int, k: int | None = None) -> frozenset[int]:
        k = self.k if k is None else k
        entity = int(entity)
        if not 0 <= entity < self.num_entities:
            raise IndexError(f"entity {entity} out of range [0, {self.num_entities})")
        if k < 0:
            raise ValueError("k must be non-negative")
        if k == self.k and entity in self._cache:
            return self._cache[entity]
        seen = {entity}
        frontier = deque([(entity, 0)])
        while frontier:
            node, depth = frontier.popleft()
            if depth == k:
                continue
            for nb in self._adj[node]:
                if nb not in seen:
                    seen.add(nb)
                    frontier.append((nb, depth + 1))
        result = frozenset(seen)
        if k == self.k:
            self._cache[entity] = result
        return result

    __getitem__ = neighbors


def khop_neighbors(graph: KnowledgeGraph, entity: int, k: int) -> frozenset[int]:
    return NeighborIndex(graph, k).neighbors(entity)


# ---------------------------------------------------------------------------
# serialization of prepared graphs


def _write_tsv(path: str, rows: Iterable[Iterable[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write("\t".join(row) + "\n")


def save_dataset(graph: KnowledgeGraph, directory: str) -> None:
    """Write the raw (non-augmented) graph back in the dataset file format."""
    g = base_graph(graph)
    os.makedirs(directory, exist_ok=True)
    ents = g.entities + (g.inductive_entities or [])
    _write_tsv(os.path.join(directory, ENTITY_FILE), ((e.id, e.name, e.description) for e in ents))
    _write_tsv(os.path.join(directory, RELATION_FILE), ((r.id, r.name) for r in g.relations))
    for split, fname in zip(SPLITS, TRIPLE_FILES):
        vocab = g.eval_entities(split)
        _write_tsv(
            os.path.join(directory, fname),
            ((vocab[h].id, g.relations[r].id, vocab[t].id) for h, r, t in g.split(split)),
        )


def save_prepared(graph: KnowledgeGraph, directory: str, k: int = 2) -> None:
    """Serialize a graph plus its filter and neighbor indices."""
    save_dataset(graph, directory)
    with open(os.path.join(directory, META_FILE), "w", encoding="utf-8") as f:
        f.write(f"mode = {graph.mode}\naugmented = {str(graph.augmented).lower()}\nk = {k}\n")
        f.write(f"num_entities = {graph.num_entities}\nnum_relations = {graph.num_relations}\n")
    fi = build_filter_index(graph)
    with open(os.path.join(directory, FILTER_FILE), "w", encoding="utf-8") as f:
        for (h, r), tails in fi.items():
            f.write(f"{h}\t{r}\t{' '.join(map(str, tails))}\n")
    nb = NeighborIndex(graph, k)
    with open(os.path.join(directory, NEIGHBOR_FILE), "w", encoding="utf-8") as f:
        for e in range(graph.num_entities):
            f.write(f"{e}\t{' '.join(map(str, sorted(nb.neighbors(e))))}\n")


def read_meta(directory: str) -> dict[str, str]:
    meta = {}
    path = os.path.join(directory, META_FILE)
    if os.path.isfile(path):
        with open(path, encoding="utf-8") as f:
            for line in f:
                if "=" in line:
                    key, value = line.split("=", 1)
                    meta[key.strip()] = value.strip()
    return meta


def load_graph(directory: str, mode: str | None = None, augment: bool = True) -> KnowledgeGraph:
    """Load either a raw dataset directory or one written by :func:`save_prepared`."""
    meta = read_meta(directory)
    mode = mode or meta.get("mode", "transductive")
    graph = load_dataset(directory, mode)
    if meta:
        augment = meta.get("augmented", "true") == "true"
    return add_inverse_relations(graph) if augment else graph
