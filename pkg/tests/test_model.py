import numpy as np
import pytest

from anchorkgc.config import TrainConfig
from anchorkgc.encoder import SparseRows
from anchorkgc.kgdata import add_inverse_relations, build_filter_index
from anchorkgc.model import TextIndex, init_model, loss_and_grads
from anchorkgc.sampling import build_negatives
from anchorkgc.synthetic import inductive_graph
from conftest import central_diff, random_graph, rel_err

TINY = dict(n_anchors=3, d_structure=6, d_unified=5, hash_vocab=16, max_len=16, anchor_init="random")


def setup(kind="transe", seed=0, **overrides):
    g = add_inverse_relations(random_graph(np.random.default_rng(seed), num_entities=10, n_train=16, n_test=0))
    cfg = TrainConfig(**{**TINY, **overrides}, kge=kind, seed=seed)
    m = init_model(g, cfg)
    text = TextIndex(g, cfg.n_anchors, cfg.max_len, cfg.hash_vocab)
    rng = np.random.default_rng(seed)
    batch = g.train[rng.choice(len(g.train), 6, replace=False)]
    neg = build_negatives(batch, g.num_entities, build_filter_index(g, ("train",)), rng, mask_false_negatives=True)
    return m, text, neg


class TestJointGradients:
    @pytest.mark.parametrize("kind", ["transe", "distmult", "complex", "rotate"])
    def test_all_parameters(self, kind):
        m, text, neg = setup(kind, seed=3)
        res = loss_and_grads(m, text, neg)
        f = lambda: loss_and_grads(m, text, neg, res.adv_weights).loss
        for name, arr in m.params().items():
            g = res.grads[name]
            if isinstance(g, SparseRows):
                g = g.to_dense(arr.shape)
            assert rel_err(g, central_diff(f, arr)) < 1e-5, name

    def test_components_sum(self):
        m, text, neg = setup()
        res = loss_and_grads(m, text, neg)
        assert res.loss == sum(res.components.values())
        assert all(v > 0 for v in res.components.values())


class TestFlags:
    def test_disabled_losses_leave_structure_untouched(self):
        m, text, neg = setup(use_structure_loss=False, use_alignment_loss=False)
        res = loss_and_grads(m, text, neg)
        assert res.components["structure"] == 0.0 and res.components["alignment"] == 0.0
        assert "R" not in res.grads and "T" not in res.grads and "G" not in res.grads
        assert np.abs(res.grads["A"]).max() > 0
        assert m.decomp.t_reads == 0

    def test_structure_only_skips_projection(self):
        m, text, neg = setup(use_alignment_loss=False)
        res = loss_and_grads(m, text, neg)
        assert "R" in res.grads and "T" in res.grads and "G" not in res.grads

    def test_untied_anchors(self):
        m, text, neg = setup(tie_anchors=False, use_structure_loss=False, use_alignment_loss=False)
        res = loss_and_grads(m, text, neg)
        assert "anchor_tokens" in res.grads and "A" not in res.grads

    def test_frozen_tau(self):
        m, text, neg = setup(learn_tau=False)
        assert "log_tau" not in loss_and_grads(m, text, neg).grads


class TestInitModel:
    def test_kmeans_needs_enough_entities(self):
        g = random_graph(np.random.default_rng(0), num_entities=5, n_train=6, n_test=0)
        with pytest.raises(ValueError, match="at least"):
            init_model(g, TrainConfig(**{**TINY, "anchor_init": "kmeans", "n_anchors": 8, "max_len": 20}))

    def test_feature_file_path(self, tmp_path):
        from anchorkgc.anchors import text_feature_matrix, write_feature_file

        g = random_graph(np.random.default_rng(0), num_entities=10, n_train=12, n_test=0)
        feats = text_feature_matrix(g, 6, 16)
        path = str(tmp_path / "f.txt")
        write_feature_file(path, feats)
        cfg = TrainConfig(**{**TINY, "anchor_init": "kmeans"})
        a = init_model(g, cfg)
        b = init_model(g, cfg.replace(features=path))
        assert np.array_equal(a.decomp.A, b.decomp.A) and np.array_equal(a.decomp.T, b.decomp.T)

    def test_inference_view_shares_parameters(self):
        g = inductive_graph()
        m = init_model(g, TrainConfig(**TINY))
        view = m.inference_view()
        assert view.decomp.A is m.decomp.A and view.encoder is m.encoder
        assert "T" not in view.params()
