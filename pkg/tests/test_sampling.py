import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anchorkgc.kgdata import FilterIndex
from anchorkgc.sampling import build_negatives, in_batch_negatives


def batches(draw_rows=st.integers(2, 12)):
    return draw_rows.flatmap(
        lambda b: st.lists(st.tuples(st.integers(0, 9), st.integers(0, 2), st.integers(0, 9)), min_size=b, max_size=b)
    )


class TestInBatch:
    def test_two_queries(self):
        neg = build_negatives([(0, 0, 5), (1, 0, 7)], 10, None, 0, "in_batch")
        assert neg.negative_ids.tolist() == [[7], [5]]

    def test_order_is_batch_order(self):
        assert in_batch_negatives(np.array([3, 1, 4, 1])).tolist() == [[1, 4, 1], [3, 4, 1], [3, 1, 1], [3, 1, 4]]

    def test_batch_of_one_rejected(self):
        with pytest.raises(ValueError):
            build_negatives([(0, 0, 1)], 5)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            build_negatives([(0, 0, 1), (1, 0, 2)], 5, mode="hard")


class TestUniform:
    def test_shared_across_batch(self):
        neg = build_negatives([(0, 0, 1), (1, 0, 2), (2, 0, 3)], 50, None, 4)
        assert neg.negative_ids.shape == (3, 5)
        assert (neg.uniform == neg.uniform[0]).all()

    def test_collision_with_gold_is_masked(self):
        # with 2 entities every query collides with its gold tail eventually
        rng = np.random.default_rng(0)
        for _ in range(20):
            neg = build_negatives([(0, 0, 0), (1, 0, 1)], 2, None, rng)
            assert np.array_equal(neg.mask[:, 1:], neg.uniform == neg.queries[:, 2:3])

    def test_training_filter_masks_known_tails(self):
        fi = FilterIndex([(0, 0, 1), (0, 0, 2)])
        neg = build_negatives([(0, 0, 1), (3, 0, 2)], 5, fi, 0, "in_batch")
        assert neg.mask.tolist() == [[True], [False]]
        unmasked = build_negatives([(0, 0, 1), (3, 0, 2)], 5, fi, 0, "in_batch", mask_false_negatives=False)
        assert unmasked.mask.tolist() == [[False], [False]]

    def test_seed_determinism(self):
        q = [(0, 0, 1), (1, 0, 2), (2, 0, 3)]
        a, b = build_negatives(q, 100, None, 9), build_negatives(q, 100, None, 9)
        assert np.array_equal(a.negative_ids, b.negative_ids)

    def test_frequency_within_three_sigma(self):
        """Per-entity counts sit in the 3-sigma binomial band.

        Each of the 100 entities leaves the band with probability 0.0027, so
        the number outside is Binomial(100, 0.0027): three or more has
        probability below 0.003.
        """
        B, n_batches, V = 8, 1000, 100
        rng = np.random.default_rng(2024)
        q = np.stack([np.arange(B), np.zeros(B, int), np.arange(B) + 1], 1)
        counts = np.zeros(V)
        for _ in range(n_batches):
            np.add.at(counts, build_negatives(q, V, None, rng).uniform[0], 1)
        expect = B * n_batches / V
        sigma = np.sqrt(B * n_batches * (1 / V) * (1 - 1 / V))
        assert counts.sum() == B * n_batches
        assert np.sum(np.abs(counts - expect) >= 3 * sigma) <= 2

    @settings(max_examples=60)
    @given(batches(), st.integers(0, 2**32 - 1))
    def test_invariants(self, rows, seed):
        fi = FilterIndex(rows[: len(rows) // 2])
        neg = build_negatives(rows, 10, fi, seed)
        B = len(rows)
        assert neg.negative_ids.shape == (B, 2 * B - 1)
        assert np.all((neg.uniform >= 0) & (neg.uniform < 10))
        gold = neg.queries[:, 2:3]
        assert not np.any((neg.negative_ids == gold) & ~neg.mask)
        for i, (h, r, _) in enumerate(neg.queries):
            for j, e in enumerate(neg.negative_ids[i]):
                assert neg.mask[i, j] == (e == gold[i, 0] or fi.contains(h, r, e))
