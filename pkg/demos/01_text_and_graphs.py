"""Load a knowledge graph from TSV files and look at how entities become token sequences."""

import tempfile

import numpy as np

from anchorkgc.kgdata import NeighborIndex, add_inverse_relations, build_filter_index, load_dataset, save_dataset
from anchorkgc.synthetic import compositional_graph
from anchorkgc.textfeat import build_sequence, hash_token, hash_words, tokenize

# a graph on a line: r0 steps +1, r1 steps +3, r2 steps +4
g = compositional_graph(30, seed=0)
print(g.num_entities, "entities,", g.num_relations, "relations,", len(g.train), "train,", len(g.test), "test")

# roundtrip through the on-disk TSV layout
with tempfile.TemporaryDirectory() as d:
    save_dataset(g, d)
    g = load_dataset(d)

print(g.entities[5].text)          # name plus description
print(g.train[:3])                 # integer (h, r, t) rows

aug = add_inverse_relations(g)     # every (h, r, t) also appears as (t, r^-1, h)
print(aug.num_relations, len(aug.train))

# filtered ranking needs the known tails of each (h, r)
fi = build_filter_index(aug)
h, r, _ = aug.train[0]
print("known tails of", (h, r), sorted(fi.tails(h, r)))

# the 2-hop neighborhood is what re-ranking rewards
nb = NeighborIndex(aug, 2)
print("2-hop of entity 5:", sorted(nb.neighbors(5)))

# lowercased words hash into a fixed vocabulary, so unseen text still has ids
print(tokenize("Zone amber-basalt, 2024!"))
print(hash_token("amber", 1000), hash_words("Amber", 1000) == [hash_token("amber", 1000)])

# context sequence: anchor slots, head words, separator, relation words
seq = build_sequence("e5", "zone amber basalt", "relation r1", n_anchors=4, max_len=16, hash_vocab=1000)
print(seq.token_ids)
print(seq.segments)
print(np.count_nonzero(seq.segments == 0), "anchor slots")
