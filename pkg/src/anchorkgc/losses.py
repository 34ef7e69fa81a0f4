"""Training losses with analytic gradients.

All batched functions take ``pos`` of shape (B,), ``neg`` of shape (B, K)
and a boolean ``mask`` of shape (B, K) where True marks an *invalid*
negative. Masked entries contribute exactly nothing to values or gradients.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossConfig:
    gamma_c: float = 0.02
    gamma_k: float = 9.0
    gamma_m: float = 1.0
    use_structure_loss: bool = True
    use_alignment_loss: bool = True
    printed_margin_orientation: bool = False

    def __post_init__(self):
        for name in ("gamma_c", "gamma_k", "gamma_m"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.gamma_k < 0 or self.gamma_m < 0:
            raise ValueError("gamma_k and gamma_m must be non-negative")


def _as_batch(pos, neg, mask):
    pos = np.atleast_1d(np.asarray(pos, dtype=np.float64))
    neg = np.asarray(neg, dtype=np.float64).reshape(len(pos), -1)
    if mask is None:
        mask = np.zeros(neg.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool).reshape(neg.shape)
    return pos, neg, mask


def _row_sum(x, keepdims=False):
    # sequential order: appending exact zeros (masked entries) cannot change the bits
    out = np.cumsum(x, axis=1)[:, -1] if x.shape[1] else np.zeros(len(x))
    return out[:, None] if keepdims else out


def log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def sigmoid(x):
    return np.exp(log_sigmoid(x))


# ---------------------------------------------------------------------------
# contrastive loss over cosine scores


def info_nce_batch(pos, neg, mask, gamma_c: float, tau: float):
    """InfoNCE with additive margin. Returns ``(loss, dpos, dneg, dtau)`` per query."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    pos, neg, mask = _as_batch(pos, neg, mask)
    logits = np.concatenate([((pos - gamma_c) / tau)[:, None], neg / tau], axis=1)
    valid = np.concatenate([np.ones((len(pos), 1), bool), ~mask], axis=1)
    shifted = np.where(valid, logits, -np.inf)
    top = shifted.max(1, keepdims=True)
    w = np.where(valid, np.exp(shifted - top), 0.0)
    total = _row_sum(w, keepdims=True)
    loss = (np.log(total) + top)[:, 0] - logits[:, 0]
    prob = w / total
    # d loss / d logit_j = prob_j - [j == 0]
    dlogit = prob.copy()
    dlogit[:, 0] -= 1.0
    dpos = dlogit[:, 0] / tau
    dneg = dlogit[:, 1:] / tau
    # logit_j = s_j / tau  =>  d/dtau = -logit_j / tau
    dtau = -_row_sum(np.where(valid, dlogit * logits, 0.0)) / tau
    if np.any(~valid[:, 1:].any(axis=1)):
        warnings.warn("all negatives masked for some queries; contrastive loss is 0 there")
    return loss, dpos, dneg, dtau


def info_nce(pos_score: float, neg_scores, mask=None, gamma_c: float = 0.02, tau: float = 0.05) -> float:
    neg = np.asarray(neg_scores, dtype=np.float64).reshape(1, -1)
    m = None if mask is None else np.asarray(mask, bool).reshape(1, -1)
    return float(info_nce_batch([pos_score], neg, m, gamma_c, tau)[0][0])


# ---------------------------------------------------------------------------
# self-adversarial structure loss over KGE scores (higher = more plausible)


def adversarial_weights(neg, mask) -> np.ndarray:
    """Softmax over each row's unmasked negative scores; zero where masked."""
    neg = np.atleast_2d(np.asarray(neg, dtype=np.float64))
    mask = np.asarray(mask, bool).reshape(neg.shape)
    shifted = np.where(mask, -np.inf, neg)
    top = shifted.max(1, keepdims=True, initial=-np.inf)
    top = np.where(np.isfinite(top), top, 0.0)
    w = np.where(mask, 0.0, np.exp(shifted - top))
    total = _row_sum(w, keepdims=True)
    return np.divide(w, total, out=np.zeros_like(w), where=total > 0)


def self_adversarial_batch(pos, neg, mask, gamma_k: float, weights=None):
    """``-log s(g + pos) - sum_i p_i log s(-neg_i - g)`` with ``p`` held constant.

    Returns ``(loss, dpos, dneg, p)``. Pass ``weights`` to freeze ``p``
    explicitly (used by gradient checks).
    """
    pos, neg, mask = _as_batch(pos, neg, mask)
    p = adversarial_weights(neg, mask) if weights is None else np.asarray(weights, dtype=np.float64)
    pos_term = -log_sigmoid(gamma_k + pos)
    neg_terms = np.where(mask, 0.0, -log_sigmoid(-neg - gamma_k))
    loss = pos_term + _row_sum(p * neg_terms)
    dpos = -sigmoid(-(gamma_k + pos))
    dneg = np.where(mask, 0.0, p * sigmoid(neg + gamma_k))
    return loss, dpos, dneg, p


def self_adversarial(pos_score: float, neg_scores, mask=None, gamma_k: float = 9.0) -> float:
    neg = np.asarray(neg_scores, dtype=np.float64).reshape(1, -1)
    m = np.zeros(neg.shape, bool) if mask is None else np.asarray(mask, bool).reshape(1, -1)
    return float(self_adversarial_batch([pos_score], neg, m, gamma_k)[0][0])


# ---------------------------------------------------------------------------
# alignment between projected unified tails and structure embeddings


def _dist_grad(x, y):
    diff = x - y
    d = np.sqrt(np.sum(diff**2, axis=-1))
    safe = np.where(d > 0, d, 1.0)
    g = np.where((d > 0)[..., None], diff / safe[..., None], 0.0)
    return d, g


def alignment_batch(g_tu, h_s, t_s, gamma_m: float, printed_orientation: bool = False):
    """MSE to ``t_s`` plus a hinge on Euclidean distances.

    Default hinge ``max(d(g, t_s) - d(g, h_s) + gamma_m, 0)`` pulls ``g``
    toward the tail and away from the head;
    ``printed_orientation`` swaps the two distances. Returns
    ``(loss, dg, dh, dt, mse, margin)`` with per-row values.
    """
    g_tu, h_s, t_s = (np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in (g_tu, h_s, t_s))
    if not (g_tu.shape == h_s.shape == t_s.shape):
        raise ValueError(f"shape mismatch: {g_tu.shape}, {h_s.shape}, {t_s.shape}")
    n = g_tu.shape[1]
    diff = g_tu - t_s
    mse = np.mean(diff**2, axis=1)
    d_t, gt = _dist_grad(g_tu, t_s)
    d_h, gh = _dist_grad(g_tu, h_s)
    if printed_orientation:
        arg = d_h - d_t + gamma_m
        sign_h, sign_t = 1.0, -1.0
    else:
        arg = d_t - d_h + gamma_m
        sign_h, sign_t = -1.0, 1.0
    active = (arg > 0)[:, None]
    margin = np.maximum(arg, 0.0)
    # gt, gh are d dist / d g; d dist / d target is the negative
    dg = 2.0 * diff / n + np.where(active, sign_t * gt + sign_h * gh, 0.0)
    dt = -2.0 * diff / n - np.where(active, sign_t * gt, 0.0)
    dh = -np.where(active, sign_h * gh, 0.0)
    return mse + margin, dg, dh, dt, mse, margin


def alignment(g_tu, h_s, t_s, gamma_m: float = 1.0, printed_orientation: bool = False) -> float:
    return float(alignment_batch(g_tu, h_s, t_s, gamma_m, printed_orientation)[0][0])


def total_loss(l_u: float, l_s: float, l_a: float, config: LossConfig | None = None) -> float:
    """Unweighted sum; ablation flags in ``config`` zero the disabled terms."""
    if config is not None:
        l_s = l_s if config.use_structure_loss else 0.0
        l_a = l_a if config.use_alignment_loss else 0.0
    return l_u + l_s + l_a
