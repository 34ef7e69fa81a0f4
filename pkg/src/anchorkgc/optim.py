"""AdamW with decoupled weight decay and a cosine learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .encoder import SparseRows


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float = 0.0) -> float:
    if total_steps <= 0:
        return lr_max
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


def adamw_step(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 1e-4,
) -> None:
    """In-place AdamW update; ``step`` counts from 1."""
    if param.shape != grad.shape or m.shape != param.shape or v.shape != param.shape:
        raise ValueError(f"shape mismatch: {param.shape}, {grad.shape}, {m.shape}, {v.shape}")
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    param -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * param)


class AdamW:
    """AdamW over a dict of named arrays, updated in place.

    A parameter whose gradient is absent from a step is skipped entirely
    (moments and weight decay untouched). ``row_subsets`` restricts a
    parameter to a fixed set of rows that may ever receive gradient; its
    moments cover only those rows and its gradient may be :class:`SparseRows`.
    """

    def __init__(
        self,
        params: dict[str, np.ndarray],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
        row_subsets: dict[str, np.ndarray] | None = None,
    ):
        self.params = params
        self.beta1, self.beta2, self.eps, self.weight_decay = beta1, beta2, eps, weight_decay
        self.row_subsets = {k: np.asarray(v, dtype=np.int64) for k, v in (row_subsets or {}).items()}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.counts: dict[str, int] = {}
        for name, p in params.items():
            shape = p.shape
            if name in self.row_subsets:
                shape = (len(self.row_subsets[name]),) + p.shape[1:]
            self.m[name] = np.zeros(shape)
            self.v[name] = np.zeros(shape)
            self.counts[name] = 0

    def _dense_subset(self, name: str, grad) -> np.ndarray:
        rows = self.row_subsets[name]
        if isinstance(grad, SparseRows):
            pos = np.searchsorted(rows, grad.rows)
            if np.any(pos >= len(rows)) or np.any(rows[np.minimum(pos, len(rows) - 1)] != grad.rows):
                raise ValueError(f"gradient for {name} touches rows outside its subset")
            out = np.zeros(self.m[name].shape)
            out[pos] = grad.values
            return out
        return np.asarray(grad)[rows]

    def step(self, grads: dict, lr: float) -> None:
        for name, grad in grads.items():
            if grad is None:
                continue
            param = self.params[name]
            self.counts[name] += 1
            t = self.counts[name]
            if name in self.row_subsets:
                rows = self.row_subsets[name]
                sub = param[rows]
                adamw_step(sub, self._dense_subset(name, grad), self.m[name], self.v[name], t, lr,
                           self.beta1, self.beta2, self.eps, self.weight_decay)
                param[rows] = sub
            else:
                if isinstance(grad, SparseRows):
                    grad = grad.to_dense(param.shape)
                adamw_step(param, np.asarray(grad), self.m[name], self.v[name], t, lr,
                           self.beta1, self.beta2, self.eps, self.weight_decay)
