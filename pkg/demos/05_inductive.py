"""Rank entities that never appeared in training, using text only."""

import tempfile
from pathlib import Path

from threadpoolctl import threadpool_limits

from anchorkgc.config import TrainConfig
from anchorkgc.evaluate import evaluate_split, random_ranking_baseline, select_beta
from anchorkgc.kgdata import add_inverse_relations
from anchorkgc.synthetic import inductive_graph
from anchorkgc.trainer import load_model, train

g = add_inverse_relations(inductive_graph(seed=0))
print(len(g.entities), "training entities,", len(g.inductive_entities), "unseen")
print("an unseen entity:", g.inductive_entities[0].text)

with threadpool_limits(1), tempfile.TemporaryDirectory() as d:
    res = train(g, TrainConfig(epochs=20, eval_every=0))
    path = Path(d) / "model.akgc"
    path.write_bytes(res.last_checkpoint)
    # the per-entity mixing matrix T is not even loaded
    m = load_model(str(path), inference_only=True)

beta, _ = select_beta(m, g, "valid")
rep = evaluate_split(m, g, "test", beta=beta)
print("beta chosen on valid:", beta)
print(rep.to_table())
print("random baseline MRR", round(random_ranking_baseline(g, "test")[0], 4))
print("T loaded:", m.decomp.has_T, " T reads:", m.decomp.t_reads)
