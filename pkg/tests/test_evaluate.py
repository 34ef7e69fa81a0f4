import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anchorkgc.config import TrainConfig
from anchorkgc.encoder import ProjectionHead, cosine, embed_sequence, project
from anchorkgc.evaluate import (
    CandidateCache,
    RankingReport,
    default_filter,
    encode_entities,
    evaluate_split,
    expected_random_mrr,
    filtered_rank,
    random_ranking_baseline,
    rank_queries,
    raw_rank,
    rerank,
    score_all,
    score_candidates,
    select_beta,
)
from anchorkgc.kgdata import FilterIndex, NeighborIndex, add_inverse_relations
from anchorkgc.model import TextIndex, init_model
from anchorkgc.synthetic import inductive_graph
from conftest import random_graph

TINY = dict(n_anchors=3, d_structure=8, d_unified=8, hash_vocab=64, max_len=20, anchor_init="random", epochs=1)


def brute_force_rank(scores, gold, known):
    cands = [c for c in range(len(scores)) if c == gold or c not in known]
    order = sorted(cands, key=lambda c: (-scores[c], c == gold))
    return order.index(gold) + 1


@pytest.fixture
def model_and_graph():
    g = add_inverse_relations(random_graph(np.random.default_rng(5), num_entities=20, n_train=40, n_test=10))
    cfg = TrainConfig(**TINY)
    return init_model(g, cfg), g


class TestScoring:
    def test_scalar_reference(self, model_and_graph):
        m, g = model_and_graph
        text = TextIndex(g, 3, 20, 64)
        A = m.decomp.A
        for h, r in [(0, 0), (7, 4), (19, 2)]:
            s = score_all(m, text, h, r)
            c = embed_sequence(text.context_sequence(h, r), A, m.encoder)
            for t in range(g.num_entities):
                tu = embed_sequence(text.entity_sequence(t), A, m.encoder)
                ref = cosine(c, tu) - 0.01 * np.sum((project(m.head, c) - project(m.head, tu)) ** 2)
                assert s[t] == pytest.approx(ref, rel=1e-10, abs=1e-12)

    def test_lambda_zero_is_cosine_ranking(self, model_and_graph):
        m, g = model_and_graph
        text = TextIndex(g, 3, 20, 64)
        s = score_all(m, text, 3, 1, lam=0.0)
        tails = encode_entities(m, text)
        c = embed_sequence(text.context_sequence(3, 1), m.decomp.A, m.encoder)
        cos = np.array([cosine(c, t) for t in tails])
        assert np.array_equal(np.argsort(-s, kind="stable"), np.argsort(-cos, kind="stable"))

    def test_identical_vectors_with_collapsed_projection_score_one(self, model_and_graph):
        m, _ = model_and_graph
        m.head = ProjectionHead(np.zeros_like(m.head.G), np.zeros_like(m.head.bias))
        x = np.random.default_rng(0).standard_normal((3, 8))
        s = score_candidates(m, x, CandidateCache.build(m, x), 0.5)
        np.testing.assert_allclose(np.diag(s), 1.0, rtol=1e-14)
        assert s.max() <= 1.0 + 1e-15

    def test_cached_equals_uncached(self, model_and_graph):
        m, g = model_and_graph
        text = TextIndex(g, 3, 20, 64)
        cache = CandidateCache.build(m, encode_entities(m, text))
        assert score_all(m, text, 4, 2).tobytes() == score_all(m, text, 4, 2, cache=cache).tobytes()
        fresh = TextIndex(g, 3, 20, 64)
        a = rank_queries(m, g, g.test, text=text)
        b = rank_queries(m, g, g.test, text=fresh, cache=cache)
        assert np.array_equal(a, b)


class TestRerank:
    @pytest.fixture
    def nb(self):
        from anchorkgc.kgdata import Entity, KnowledgeGraph, Relation

        g = KnowledgeGraph([Entity(x, x) for x in "abcd"], [Relation("r", "r")], train=[(0, 0, 1), (1, 0, 2)])
        return NeighborIndex(g, 1)

    def test_neighbor_bonus(self, nb):
        out = rerank(np.array([0.0, 0.5, 0.2, 0.3]), 0, nb, 0.05, 0.0)
        assert out[1] == 0.5 + 0.05 and out[0] == 0.05 and out[2] == 0.2 and out[3] == 0.3

    def test_head_gets_both_rules(self, nb):
        s = np.array([0.4, 0.0, 0.0, 0.0])
        assert rerank(s, 0, nb, 0.05, 0.1)[0] == 0.4 + 0.05 - 0.1

    def test_zero_weights_identity(self, nb):
        s = np.random.default_rng(0).standard_normal(4)
        assert rerank(s, 1, nb, 0.0, 0.0).tobytes() == s.tobytes()

    def test_negative_weights_rejected(self, nb):
        with pytest.raises(ValueError):
            rerank(np.zeros(4), 0, nb, -0.1, 0.0)


class TestFilteredRank:
    def test_argmax(self):
        assert filtered_rank(np.array([0.1, 0.9, 0.3]), 1, 0, 0, None) == 1

    def test_tie_is_pessimistic(self):
        assert filtered_rank(np.array([0.5, 0.5, 0.1]), 0, 0, 0, None) == 2

    def test_fifteen_entity_fixture(self):
        rng = np.random.default_rng(1)
        scores = rng.standard_normal(15)
        gold = int(np.argsort(scores)[7])
        above = [int(i) for i in np.argsort(-scores) if scores[i] > scores[gold]]
        fi = FilterIndex([(2, 0, above[0]), (2, 0, above[3]), (2, 0, above[5]), (2, 0, gold)])
        assert filtered_rank(scores, gold, 2, 0, fi) == brute_force_rank(scores, gold, fi.tails(2, 0)) == 5

    def test_gold_absent(self):
        with pytest.raises(ValueError):
            filtered_rank(np.zeros(3), 3, 0, 0, None)

    @settings(max_examples=100)
    @given(st.integers(2, 30).flatmap(lambda n: st.tuples(
        st.lists(st.integers(-3, 3), min_size=n, max_size=n),
        st.integers(0, n - 1),
        st.sets(st.integers(0, n - 1)),
    )))
    def test_brute_force_and_monotone(self, case):
        scores, gold, known = case
        scores = np.array(scores, dtype=float) / 2
        fi = FilterIndex([(0, 0, t) for t in known])
        r = filtered_rank(scores, gold, 0, 0, fi)
        assert r == brute_force_rank(scores, gold, known)
        assert r <= raw_rank(scores, gold)

    def test_random_tie_order_never_worse(self):
        rng = np.random.default_rng(2)
        scores = rng.integers(0, 4, size=(30, 12)).astype(float)
        golds = rng.integers(0, 12, size=30)
        reported = np.mean([1 / raw_rank(s, g) for s, g in zip(scores, golds)])
        for _ in range(50):
            jitter = rng.random(12) * 1e-3
            shuffled = np.mean([1 / raw_rank(s + jitter, g) for s, g in zip(scores, golds)])
            assert shuffled >= reported


class TestReport:
    def test_perfect_ranks(self):
        rep = RankingReport("test", np.ones(10, int), np.zeros(10, int), np.zeros(10, bool), ["r"])
        assert rep.mrr == 1.0 and rep.hits == {1: 1.0, 3: 1.0, 10: 1.0}
        assert rep.relation_errors() == [("r", 0, 10)]

    @given(st.lists(st.integers(1, 50), min_size=1, max_size=40))
    def test_metric_ordering(self, ranks):
        n = len(ranks)
        rep = RankingReport("x", np.array(ranks), np.zeros(n, int), np.arange(n) % 2 == 1)
        m = rep.metrics
        assert 0 <= m["hits1"] <= m["hits3"] <= m["hits10"] <= 1
        assert 0 < m["mrr"] <= 1 and m["mrr"] >= m["hits1"]

    def test_write(self, tmp_path):
        rep = RankingReport("test", np.array([1, 2, 5]), np.array([0, 1, 1]), np.array([False, True, True]), ["a", "b"])
        rep.write(str(tmp_path))
        assert (tmp_path / "relations.csv").read_text() == "relation_id,errors,total\na,0,1\nb,2,2\n"
        lines = (tmp_path / "metrics.txt").read_text().splitlines()
        assert "mrr = 0.566667" in lines and "inverse.queries = 2" in lines
        assert "Hits@10" in rep.to_table()


class TestEvaluateSplit:
    def test_zero_weights_reproduce_base_metrics(self, model_and_graph):
        m, g = model_and_graph
        base = rank_queries(m, g, g.test, filter_index=default_filter(g, "test"), alpha=0.0, beta=0.0)
        again = evaluate_split(m, g, "test", alpha=0.0, beta=0.0).ranks
        assert base.tobytes() == again.tobytes()

    def test_directions(self, model_and_graph):
        m, g = model_and_graph
        rep = evaluate_split(m, g, "test")
        assert rep.directions["forward"]["queries"] == rep.directions["inverse"]["queries"] == 10

    def test_random_model_near_random_baseline(self):
        g = random_graph(np.random.default_rng(8), num_entities=40, num_relations=4, n_train=60, n_test=200)
        mrrs, baselines, sems = [], [], []
        for seed in range(3):
            m = init_model(g, TrainConfig(**TINY, seed=seed))
            rep = evaluate_split(m, g, "test", alpha=0.0, beta=0.0)
            mrrs.append(rep.mrr)
            r = 1.0 / rep.ranks
            sems.append(r.std(ddof=1) / np.sqrt(len(r)))
        expect = expected_random_mrr(g)
        assert abs(np.mean(mrrs) - expect) < 3 * np.mean(sems)

    def test_monte_carlo_matches_closed_form(self):
        g = random_graph(np.random.default_rng(9), num_entities=25, n_train=50, n_test=20)
        mean, sem = random_ranking_baseline(g, trials=2000)
        assert abs(mean - expected_random_mrr(g)) < 4 * sem

    def test_inductive_without_T(self):
        g = add_inverse_relations(inductive_graph(seed=0))
        m = init_model(g, TrainConfig(**TINY)).inference_view()
        rep = evaluate_split(m, g, "test")
        assert rep.metrics["queries"] == len(g.test)
        assert not m.decomp.has_T and m.decomp.t_reads == 0

    def test_select_beta_prefers_smaller_on_tie(self, model_and_graph):
        m, g = model_and_graph
        best, scores = select_beta(m, g, "test", grid=(0.2, 0.1))
        assert set(scores) == {0.1, 0.2}
        assert best == max(scores, key=lambda b: (scores[b], -b))
        same, _ = select_beta(m, g, "test", grid=(0.0, 0.0))
        assert same == 0.0
