import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from anchorkgc.losses import (
    LossConfig,
    adversarial_weights,
    alignment,
    alignment_batch,
    info_nce,
    info_nce_batch,
    self_adversarial,
    self_adversarial_batch,
    total_loss,
)
from conftest import central_diff, rel_err

cos = st.floats(-1, 1)
negs = st.lists(cos, min_size=1, max_size=8)

# log1p(exp(-15.6)) evaluated with mpmath at 40 significant digits
INFO_NCE_REFERENCE = 1.678827389072584557e-07


def info_nce_reference(pos, neg, gamma_c, tau):
    logits = [(pos - gamma_c) / tau] + [n / tau for n in neg]
    return -logits[0] + math.log(sum(math.exp(x) for x in logits))


class TestInfoNCE:
    def test_no_negatives(self):
        with pytest.warns(UserWarning):
            assert info_nce(0.3, [0.9], [True]) == 0.0
        with pytest.warns(UserWarning):
            assert info_nce(0.3, []) == 0.0

    def test_high_precision_example(self):
        assert info_nce(0.9, [0.1], gamma_c=0.02, tau=0.05) == pytest.approx(INFO_NCE_REFERENCE, rel=1e-8)

    @given(cos, st.floats(0.01, 5))
    def test_tie_gives_log2(self, s, tau):
        assert info_nce(s, [s], gamma_c=0.0, tau=tau) == pytest.approx(math.log(2), rel=1e-12)

    @given(cos, negs, st.floats(0.05, 1))
    def test_matches_direct_evaluation(self, pos, neg, tau):
        assert info_nce(pos, neg, tau=tau) == pytest.approx(info_nce_reference(pos, neg, 0.02, tau), rel=1e-9, abs=1e-12)

    @given(cos, negs, st.floats(0, 0.5), st.floats(0.01, 1))
    def test_non_negative(self, pos, neg, gamma, tau):
        assert info_nce(pos, neg, gamma_c=gamma, tau=tau) >= 0

    @given(cos, negs, st.randoms(use_true_random=False))
    def test_permutation_invariant(self, pos, neg, rnd):
        shuffled = list(neg)
        rnd.shuffle(shuffled)
        assert info_nce(pos, shuffled, tau=0.5) == pytest.approx(info_nce(pos, neg, tau=0.5), rel=1e-12)

    def test_monotone(self):
        neg = [0.1, -0.2, 0.4]
        vals = [info_nce(p, neg, tau=0.2) for p in np.linspace(-1, 1, 21)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        vals = [info_nce(0.2, [0.1, n, 0.4], tau=0.2) for n in np.linspace(-1, 1, 21)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_stable_at_low_temperature(self):
        loss, dpos, dneg, dtau = info_nce_batch([-1.0], [[1.0, 1.0]], None, 0.02, 0.01)
        assert np.all(np.isfinite(np.concatenate([loss, dpos, dneg.ravel(), dtau])))
        assert np.isfinite(info_nce(1.0, [-1.0], tau=0.01))

    @settings(max_examples=30)
    @given(cos, negs, st.floats(-1, 1))
    def test_masked_negative_is_inert(self, pos, neg, extra):
        base = info_nce_batch([pos], [neg], None, 0.02, 0.1)
        more = info_nce_batch([pos], [neg + [extra]], [[False] * len(neg) + [True]], 0.02, 0.1)
        assert base[0].tobytes() == more[0].tobytes()
        assert base[1].tobytes() == more[1].tobytes()
        assert base[2].tobytes() == more[2][:, :-1].tobytes() and more[2][0, -1] == 0.0

    def test_gradients(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            pos = rng.uniform(-1, 1, 3)
            neg = rng.uniform(-1, 1, (3, 5))
            mask = rng.random((3, 5)) < 0.3
            tau = np.array([rng.uniform(0.05, 1)])
            _, dpos, dneg, dtau = info_nce_batch(pos, neg, mask, 0.02, tau[0])
            f = lambda: float(info_nce_batch(pos, neg, mask, 0.02, tau[0])[0].sum())
            assert rel_err(dpos, central_diff(f, pos)) < 1e-6
            assert rel_err(dneg, central_diff(f, neg)) < 1e-6
            assert rel_err(dtau.sum(), central_diff(f, tau)) < 1e-6

    def test_rejects_non_positive_tau(self):
        with pytest.raises(ValueError):
            info_nce(0.1, [0.2], tau=0.0)


class TestSelfAdversarial:
    def test_equal_scores_uniform_weights(self):
        p = adversarial_weights([[-3.0] * 4], np.zeros((1, 4), bool))
        assert np.array_equal(p, np.full((1, 4), 0.25))

    def test_saturated_positive_term(self):
        term = self_adversarial_batch([50.0], [[0.0]], [[True]], 9.0)[0][0]
        assert 0 <= term < 1e-20

    @given(arrays(np.float64, (3, 6), elements=st.floats(-30, 5)), arrays(bool, (3, 6)))
    def test_weights_sum_to_one(self, neg, mask):
        p = adversarial_weights(neg, mask)
        for row, m in zip(p, mask):
            assert row[m].sum() == 0
            if (~m).any():
                assert row.sum() == pytest.approx(1.0, rel=1e-12)

    def test_direct_evaluation(self):
        rng = np.random.default_rng(1)
        pos, neg = -rng.uniform(0, 12), -rng.uniform(0, 12, 5)
        p = np.exp(neg - neg.max())
        p /= p.sum()
        sig = lambda x: 1 / (1 + math.exp(-x))
        ref = -math.log(sig(9 + pos)) - sum(pi * math.log(sig(-n - 9)) for pi, n in zip(p, neg))
        assert self_adversarial(pos, neg, gamma_k=9.0) == pytest.approx(ref, rel=1e-12)

    def test_all_masked_keeps_positive_term(self):
        loss = self_adversarial_batch([-2.0], [[-1.0, -4.0]], [[True, True]], 9.0)[0][0]
        assert loss == pytest.approx(math.log1p(math.exp(-7.0)), rel=1e-12)
        assert self_adversarial(-2.0, []) == loss

    def test_gradient_with_frozen_weights(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            pos, neg = -rng.uniform(0, 15, 4), -rng.uniform(0, 15, (4, 6))
            mask = rng.random((4, 6)) < 0.25
            _, dpos, dneg, p = self_adversarial_batch(pos, neg, mask, 9.0)
            f = lambda: float(self_adversarial_batch(pos, neg, mask, 9.0, p)[0].sum())
            assert rel_err(dpos, central_diff(f, pos)) < 1e-6
            assert rel_err(dneg, central_diff(f, neg)) < 1e-6


class TestAlignment:
    def test_perfect_alignment(self):
        t, h = np.array([1.0, 0.0]), np.array([-1.0, 0.0])
        assert alignment(t, h, t, gamma_m=1.0) == 0.0

    def test_equidistant_margin_is_gamma(self):
        g, h, t = np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0])
        _, _, _, _, mse, margin = alignment_batch(g, h, t, 0.7)
        assert margin[0] == 0.7 and mse[0] == 0.5

    def test_orientations_differ(self):
        g, h, t = np.array([0.9, 0.0]), np.array([1.0, 0.0]), np.array([-1.0, 0.0])
        prose = alignment_batch(g, h, t, 1.0)[5][0]
        printed = alignment_batch(g, h, t, 1.0, printed_orientation=True)[5][0]
        assert prose == pytest.approx(2.8) and printed == 0.0

    def test_reference_and_gradients(self):
        rng = np.random.default_rng(3)
        checked = 0
        for printed in (False, True):
            for _ in range(25):
                g, h, t = rng.standard_normal((3, 2, 5))
                loss, dg, dh, dt, _, _ = alignment_batch(g, h, t, 1.0, printed)
                dtt, dhh = np.linalg.norm(g - t, axis=1), np.linalg.norm(g - h, axis=1)
                arg = (dhh - dtt if printed else dtt - dhh) + 1.0
                np.testing.assert_allclose(loss, np.mean((g - t) ** 2, 1) + np.maximum(arg, 0), rtol=1e-12)
                if np.min(np.abs(arg)) < 1e-3:
                    continue
                f = lambda: float(alignment_batch(g, h, t, 1.0, printed)[0].sum())
                for x, dx in ((g, dg), (h, dh), (t, dt)):
                    assert rel_err(dx, central_diff(f, x)) < 1e-6
                checked += 1
        assert checked >= 40

    def test_kink_gradient_is_zero(self):
        g, h, t = np.zeros(2), np.array([3.0, 0.0]), np.array([0.0, 2.0])
        _, dg, dh, dt, _, margin = alignment_batch(g, h, t, 1.0)
        assert margin[0] == 0.0 and not dh.any()
        np.testing.assert_allclose(dg[0], 2 * (g - t) / 2)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            alignment(np.zeros(2), np.zeros(3), np.zeros(2))


class TestTotal:
    def test_sum(self):
        assert total_loss(1, 2, 3) == 6
        assert total_loss(1.5, 0.0, 2.0) == 3.5

    def test_flags_zero_terms(self):
        cfg = LossConfig(use_structure_loss=False, use_alignment_loss=False)
        assert total_loss(1.0, 2.0, 3.0, cfg) == 1.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LossConfig(gamma_k=-1)
        with pytest.raises(ValueError):
            LossConfig(gamma_c=float("nan"))
