"""Structure-space triple scorers and their gradients.

All scorers follow "higher is more plausible" and broadcast over leading
axes; the last axis is the embedding dimension. Complex-valued kinds use a
split-half layout: ``x[..., :D/2]`` real, ``x[..., D/2:]`` imaginary. RotatE
reads its relation phases from the first half of ``r`` and ignores the rest.
"""

from __future__ import annotations

import numpy as np

KINDS = ("transe", "distmult", "complex", "rotate")


def _check(kind: str, h, r, t):
    if kind not in KINDS:
        raise ValueError(f"unknown KGE kind {kind!r}; expected one of {KINDS}")
    h, r, t = (np.asarray(x, dtype=np.float64) for x in (h, r, t))
    d = h.shape[-1]
    if r.shape[-1] != d or t.shape[-1] != d:
        raise ValueError(f"dimension mismatch: {h.shape[-1]}, {r.shape[-1]}, {t.shape[-1]}")
    if kind in ("complex", "rotate") and d % 2:
        raise ValueError(f"{kind} needs an even dimension, got {d}")
    return h, r, t


def _halves(x):
    k = x.shape[-1] // 2
    return x[..., :k], x[..., k:]


def score(kind: str, h, r, t) -> np.ndarray:
    h, r, t = _check(kind, h, r, t)
    if kind == "transe":
        return -np.sqrt(np.sum((h + r - t) ** 2, axis=-1))
    if kind == "distmult":
        return np.sum(h * r * t, axis=-1)
    hr, hi = _halves(h)
    tr, ti = _halves(t)
    if kind == "complex":
        rr, ri = _halves(r)
        # Re(h * r * conj(t))
        return np.sum((hr * rr - hi * ri) * tr + (hr * ri + hi * rr) * ti, axis=-1)
    phase = _halves(r)[0]
    c, s = np.cos(phase), np.sin(phase)
    dr = hr * c - hi * s - tr
    di = hr * s + hi * c - ti
    return -np.sqrt(np.sum(dr**2 + di**2, axis=-1))


def score_and_grad(kind: str, h, r, t):
    """Return ``(score, d/dh, d/dr, d/dt)``.

    The distance-based kinds use the zero subgradient where the distance is 0.
    Gradients have the broadcast shape of the three inputs.
    """
    h, r, t = _check(kind, h, r, t)
    shape = np.broadcast_shapes(h.shape, r.shape, t.shape)
    h, r, t = (np.broadcast_to(x, shape) for x in (h, r, t))
    if kind == "transe":
        diff = h + r - t
        dist = np.sqrt(np.sum(diff**2, axis=-1))
        # diff is exactly 0 wherever dist is, so dividing by 1 there yields the zero subgradient
        g = diff * (-1.0 / np.where(dist > 0, dist, 1.0))[..., None]
        return -dist, g, g.copy(), -g
    if kind == "distmult":
        return np.sum(h * r * t, axis=-1), r * t, h * t, h * r
    hr, hi = _halves(h)
    tr, ti = _halves(t)
    if kind == "complex":
        rr, ri = _halves(r)
        val = np.sum((hr * rr - hi * ri) * tr + (hr * ri + hi * rr) * ti, axis=-1)
        dh = np.concatenate([rr * tr + ri * ti, -ri * tr + rr * ti], axis=-1)
        dr = np.concatenate([hr * tr + hi * ti, -hi * tr + hr * ti], axis=-1)
        dt = np.concatenate([hr * rr - hi * ri, hr * ri + hi * rr], axis=-1)
        return val, dh, dr, dt
    phase = _halves(r)[0]
    c, s = np.cos(phase), np.sin(phase)
    er = hr * c - hi * s - tr
    ei = hr * s + hi * c - ti
    dist = np.sqrt(np.sum(er**2 + ei**2, axis=-1))
    ok = (dist > 0)[..., None]
    inv = np.where(ok, -1.0 / np.where(dist > 0, dist, 1.0)[..., None], 0.0)
    # d(-dist) = inv * (er d er + ei d ei)
    gr, gi = inv * er, inv * ei
    dh = np.concatenate([gr * c + gi * s, -gr * s + gi * c], axis=-1)
    dphase = gr * (-hr * s - hi * c) + gi * (hr * c - hi * s)
    dr = np.concatenate([dphase, np.zeros_like(dphase)], axis=-1)
    dt = np.concatenate([-gr, -gi], axis=-1)
    return -dist, dh, dr, dt


def score_grad(kind: str, h, r, t):
    """``(d/dh, d/dr, d/dt)`` of :func:`score`."""
    return score_and_grad(kind, h, r, t)[1:]
