"""Synthetic knowledge graphs with known structure, for experiments and tests."""

from __future__ import annotations

import numpy as np

from .kgdata import Entity, KnowledgeGraph, Relation

_WORDS = (
    "amber basalt cedar delta ember fjord granite harbor iris juniper kelp lagoon "
    "meadow nickel onyx prairie quartz reef sierra tundra umber valley willow xenon "
    "yarrow zephyr"
).split()


def _names(n: int, prefix: str = "e", rng=None, words_per_entity: int = 2) -> list[Entity]:
    out = []
    for i in range(n):
        if rng is None:
            desc = f"{_WORDS[i % len(_WORDS)]} {_WORDS[(i * 7 + 3) % len(_WORDS)]}"
        else:
            desc = " ".join(rng.choice(_WORDS, size=words_per_entity))
        out.append(Entity(f"{prefix}{i}", f"{prefix}{i}", desc))
    return out


def _relations(n: int) -> list[Relation]:
    return [Relation(f"r{j}", f"relation r{j}") for j in range(n)]


def _split(triples: np.ndarray, test_frac: float, rng) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(len(triples))
    n_test = int(round(test_frac * len(triples)))
    return triples[perm[n_test:]], triples[perm[:n_test]]


def memorization_graph(num_entities=50, num_relations=5, num_triples=200, seed=0, typed=True) -> KnowledgeGraph:
    """Distinct random triples over named entities; descriptions are fixed word pairs.

    With ``typed`` (default) entity ``i`` belongs to group ``i mod num_relations`` and
    relation ``r`` links a head outside group ``r`` to a tail inside it, both
    uniform. Untyped triples draw every slot uniformly, which a pooled
    bi-encoder cannot fully memorize: its ranking for a fixed query is a sum of
    a head term and a relation term, and the head's own text makes the head
    its own strongest candidate unless the relation separates them.
    """
    rng = np.random.default_rng(seed)
    groups = np.arange(num_entities) % num_relations
    seen: set[tuple[int, int, int]] = set()
    while len(seen) < num_triples:
        r = int(rng.integers(num_relations))
        if typed:
            h = int(rng.choice(np.flatnonzero(groups != r)))
            cand = np.flatnonzero(groups == r)
        else:
            h = int(rng.integers(num_entities))
            cand = np.delete(np.arange(num_entities), h)
        seen.add((h, r, int(rng.choice(cand))))
    train = np.array(sorted(seen), dtype=np.int64)
    return KnowledgeGraph(_names(num_entities), _relations(num_relations), train=train)


def compositional_graph(num_entities=100, seed=0, test_frac=0.2, shifts=(1, 3), window=6, zones=6) -> KnowledgeGraph:
    """Entities on a line; ``r0``/``r1`` shift by fixed offsets and ``r2 = r0 then r1``.

    Every defined triple of the three relations is generated, shuffled, and
    split ``1 - test_frac`` / ``test_frac`` into train / test. Descriptions name
    ``zones`` staggered windows of width ``window`` containing the entity
    (``window=0`` gives arbitrary word pairs), so the number of words two
    entities share falls off with their distance on the line.
    """
    rng = np.random.default_rng(seed)
    s0, s1 = shifts
    rows = []
    for i in range(num_entities):
        for r, s in ((0, s0), (1, s1), (2, s0 + s1)):
            if i + s < num_entities:
                rows.append((i, r, i + s))
    train, test = _split(np.array(rows, dtype=np.int64), test_frac, rng)
    if window:
        n = len(_WORDS)
        step = window // zones

        def desc(i):
            return "zone " + " ".join(_WORDS[((i + z * step) // window) % n] for z in range(zones))

        ents = [Entity(f"e{i}", f"e{i}", desc(i)) for i in range(num_entities)]
    else:
        ents = _names(num_entities)
    return KnowledgeGraph(ents, _relations(3), train=train, test=test)


def zipf_graph(num_entities=100, num_relations=4, num_triples=600, seed=0, exponent=1.0, test_frac=0.2) -> KnowledgeGraph:
    """Tails drawn with probability proportional to ``1 / rank**exponent``.

    Each entity belongs to one of ``num_relations`` groups (a word in its
    description); relation ``r`` links a head to a tail of group
    ``(group(head) + r) mod num_relations``, so tails are learnable from text.
    """
    rng = np.random.default_rng(seed)
    groups = rng.integers(num_relations, size=num_entities)
    weights = 1.0 / np.arange(1, num_entities + 1) ** exponent
    tail_order = rng.permutation(num_entities)
    tail_weight = np.empty(num_entities)
    tail_weight[tail_order] = weights
    ents = [
        Entity(f"e{i}", f"e{i}", f"group {_WORDS[groups[i]]} {_WORDS[10 + (i % 7)]}") for i in range(num_entities)
    ]
    seen: set[tuple[int, int, int]] = set()
    attempts = 0
    while len(seen) < num_triples and attempts < 100 * num_triples:
        attempts += 1
        h = int(rng.integers(num_entities))
        r = int(rng.integers(num_relations))
        cand = np.flatnonzero(groups == (groups[h] + r) % num_relations)
        cand = cand[cand != h]
        if not len(cand):
            continue
        p = tail_weight[cand] / tail_weight[cand].sum()
        seen.add((h, r, int(rng.choice(cand, p=p))))
    rows = np.array(sorted(seen), dtype=np.int64)
    train, test = _split(rows, test_frac, rng)
    return KnowledgeGraph(ents, _relations(num_relations), train=train, test=test)


def inductive_graph(num_train=60, num_unseen=10, num_types=5, seed=0, triples_per_entity=4) -> KnowledgeGraph:
    """Typed entities; relation ``r`` links type ``r`` to type ``(r + 1) mod num_types``.

    There is one relation per type, types are spelled out in descriptions, and
    valid and test triples use only the ``num_unseen`` held-out entities, so
    ranking them relies on text alone. Valid and test are disjoint.
    """
    rng = np.random.default_rng(seed)
    type_words = ["type " + w for w in _WORDS[:num_types]]

    def make(n, prefix, offset):
        types = (np.arange(n) + offset) % num_types
        ents = [
            Entity(f"{prefix}{i}", f"{prefix}{i}", f"{type_words[types[i]]} {_WORDS[num_types + (i // num_types) % 5]}")
            for i in range(n)
        ]
        return ents, types

    def link(types, count):
        rows = set()
        for h, a in enumerate(types):
            cand = np.flatnonzero(types == (a + 1) % num_types)
            for _ in range(count):
                rows.add((h, int(a), int(rng.choice(cand))))
        return np.array(sorted(rows), dtype=np.int64).reshape(-1, 3)

    train_ents, train_types = make(num_train, "e", 0)
    test_ents, test_types = make(num_unseen, "u", int(rng.integers(num_types)))
    train = link(train_types, triples_per_entity)
    test = link(test_types, 2)
    seen = {tuple(x) for x in test.tolist()}
    valid = np.array([x for x in link(test_types, 2).tolist() if tuple(x) not in seen], dtype=np.int64).reshape(-1, 3)
    return KnowledgeGraph(
        train_ents, _relations(num_types), train=train, valid=valid, test=test, inductive_entities=test_ents
    )
