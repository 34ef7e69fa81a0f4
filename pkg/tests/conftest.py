import os

import numpy as np
import pytest

from anchorkgc.kgdata import Entity, KnowledgeGraph, Relation


def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of scalar ``f`` wrt array ``x`` (mutated in place, restored)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), floor))


def write_dataset(directory, train, valid=(), test=(), entities=None, relations=None):
    os.makedirs(directory, exist_ok=True)
    for name, rows in (("train.txt", train), ("valid.txt", valid), ("test.txt", test)):
        with open(os.path.join(directory, name), "w", encoding="utf-8") as f:
            f.writelines("\t".join(r) + "\n" for r in rows)
    if entities is None:
        ids = sorted({x for rows in (train, valid, test) for h, _, t in rows for x in (h, t)})
        entities = [(e, e.upper(), f"about {e}") for e in ids]
    with open(os.path.join(directory, "entities.txt"), "w", encoding="utf-8") as f:
        f.writelines("\t".join(e) + "\n" for e in entities)
    if relations is not None:
        with open(os.path.join(directory, "relations.txt"), "w", encoding="utf-8") as f:
            f.writelines("\t".join(r) + "\n" for r in relations)
    return str(directory)


@pytest.fixture
def toy_dir(tmp_path):
    """Three entities, two relations."""
    return write_dataset(
        tmp_path / "toy",
        train=[("a", "likes", "b"), ("b", "likes", "c"), ("a", "near", "c")],
        valid=[("c", "near", "a")],
        test=[("b", "near", "a")],
        entities=[("a", "Alpha", "first letter"), ("b", "Beta", "second letter"), ("c", "Gamma", "third")],
        relations=[("likes", "likes"), ("near", "is near")],
    )


def random_graph(rng, num_entities=12, num_relations=3, n_train=30, n_test=8):
    rows = np.stack(
        [rng.integers(num_entities, size=n_train + n_test), rng.integers(num_relations, size=n_train + n_test),
         rng.integers(num_entities, size=n_train + n_test)],
        axis=1,
    )
    rows = np.unique(rows, axis=0)
    rng.shuffle(rows)
    ents = [Entity(f"e{i}", f"e{i}", f"word{i % 4} thing{i % 3}") for i in range(num_entities)]
    rels = [Relation(f"r{j}", f"rel {j}") for j in range(num_relations)]
    return KnowledgeGraph(ents, rels, train=rows[n_test:], test=rows[:n_test])


@pytest.fixture
def small_graph():
    return random_graph(np.random.default_rng(0))
