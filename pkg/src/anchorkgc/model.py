"""Model state and the joint forward/backward pass of one training step."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kge
from .anchors import AnchorDecomposition, init_from_features, init_random, read_feature_file, text_feature_matrix
from .config import TrainConfig
from .encoder import (
    EncoderParams,
    ProjectionHead,
    encode_backward,
    encode_batch,
    normalize_rows,
    pack,
    project,
    project_backward,
    unit_backward,
)
from .kgdata import KnowledgeGraph
from .losses import alignment_batch, info_nce_batch, self_adversarial_batch
from .sampling import NegativeBatch
from .textfeat import TokenSequence, assemble, hash_words


class TextIndex:
    """Hashed words of every entity and relation, and cached encoder sequences.

    ``side`` selects the entity vocabulary: ``"train"`` for training entities,
    ``"inductive"`` for a graph's inductive vocabulary.
    """

    def __init__(self, graph: KnowledgeGraph, n_anchors: int, max_len: int, hash_vocab: int):
        self.n_anchors, self.max_len, self.hash_vocab = n_anchors, max_len, hash_vocab
        self.words = {"train": [hash_words(e.text, hash_vocab) for e in graph.entities]}
        if graph.inductive_entities is not None:
            self.words["inductive"] = [hash_words(e.text, hash_vocab) for e in graph.inductive_entities]
        self.relation_words = [hash_words(r.name, hash_vocab) for r in graph.relations]
        self._entity_cache: dict[tuple[str, int], TokenSequence] = {}
        self._context_cache: dict[tuple[str, int, int], TokenSequence] = {}

    def entity_sequence(self, e: int, side: str = "train") -> TokenSequence:
        key = (side, int(e))
        seq = self._entity_cache.get(key)
        if seq is None:
            seq = assemble(self.words[side][e], None, self.n_anchors, self.max_len, self.hash_vocab)
            self._entity_cache[key] = seq
        return seq

    def context_sequence(self, h: int, r: int, side: str = "train") -> TokenSequence:
        key = (side, int(h), int(r))
        seq = self._context_cache.get(key)
        if seq is None:
            seq = assemble(
                self.words[side][h], self.relation_words[r], self.n_anchors, self.max_len, self.hash_vocab
            )
            self._context_cache[key] = seq
        return seq

    def training_rows(self) -> np.ndarray:
        """Token-table rows reachable from training-entity and relation text."""
        ids = set()
        for w in self.words["train"]:
            ids.update(w)
        for w in self.relation_words:
            ids.update(w)
        return np.array(sorted(ids), dtype=np.int64)


@dataclass
class Model:
    config: TrainConfig
    decomp: AnchorDecomposition
    encoder: EncoderParams
    head: ProjectionHead
    log_tau: np.ndarray = field(default_factory=lambda: np.array([np.log(0.05)]))

    @property
    def tau(self) -> float:
        return float(np.exp(self.log_tau[0]))

    def params(self) -> dict[str, np.ndarray]:
        """Named views of every array; updating them in place updates the model."""
        out = {"A": self.decomp.A, "R": self.decomp.R}
        if self.decomp.has_T:
            out["T"] = self.decomp._T
        out.update(self.encoder.arrays())
        out["G"] = self.head.G
        out["g_bias"] = self.head.bias
        out["log_tau"] = self.log_tau
        return out

    def inference_view(self) -> "Model":
        """Same parameters with ``T`` physically absent."""
        return Model(self.config, self.decomp.without_T(), self.encoder, self.head, self.log_tau)


def init_model(graph: KnowledgeGraph, config: TrainConfig, features: np.ndarray | None = None) -> Model:
    """Build a fresh model; K-means anchors use ``features`` or the hashed text featurizer."""
    c = config
    V, nr = graph.num_entities, graph.num_relations
    if c.anchor_init == "kmeans":
        if features is None and c.features:
            features = read_feature_file(c.features)
        if features is None:
            features = text_feature_matrix(graph, c.d_structure, c.hash_vocab)
        if features.shape != (V, c.d_structure):
            raise ValueError(f"feature matrix must be {V}x{c.d_structure}, got {features.shape}")
        if V < c.n_anchors:
            raise ValueError(f"k-means needs at least {c.n_anchors} entities, graph has {V}")
        decomp, _ = init_from_features(features, c.n_anchors, nr, c.seed, c.kmeans_iters, c.ridge)
    else:
        decomp = init_random(V, c.n_anchors, c.d_structure, nr, c.seed)
    enc = EncoderParams.init(
        c.hash_vocab, c.d_unified, c.max_len, c.d_structure, c.n_anchors, c.seed + 1, c.tie_anchors
    )
    head = ProjectionHead.init(c.d_structure, c.d_unified, c.seed + 2)
    return Model(c, decomp, enc, head, np.array([np.log(c.tau_init)]))


@dataclass
class StepResult:
    loss: float
    components: dict[str, float]
    grads: dict
    adv_weights: np.ndarray | None = None


def _scatter_rows(n_rows: int, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    out = np.zeros((n_rows, vals.shape[-1]))
    np.add.at(out, idx, vals)
    return out


def loss_and_grads(model: Model, text: TextIndex, neg: NegativeBatch, adv_weights=None) -> StepResult:
    """Joint loss ``L_u + L_s + L_a`` of one batch and gradients for every parameter.

    Parameters that receive no gradient this step are absent from ``grads``.
    ``adv_weights`` freezes the self-adversarial weights (for gradient checks);
    the weights used are returned in ``StepResult.adv_weights``.
    """
    c = model.config
    q = neg.queries
    B = len(q)
    h, r, t = q[:, 0], q[:, 1], q[:, 2]
    A = model.decomp.A
    uniq = np.unique(np.concatenate([t, neg.negative_ids.ravel()]))
    pos_idx = np.searchsorted(uniq, t)
    neg_idx = np.searchsorted(uniq, neg.negative_ids)
    mask = neg.mask
    rows = np.arange(B)

    seqs = [text.context_sequence(hi, ri) for hi, ri in zip(h, r)]
    seqs += [text.entity_sequence(u) for u in uniq]
    out, cache = encode_batch(pack(seqs, c.n_anchors), A, model.encoder)
    C, Tu = out[:B], out[B:]
    Cn, c_norm = normalize_rows(C)
    Tn, t_norm = normalize_rows(Tu)
    S = Cn @ Tn.T
    tau = model.tau
    lu, dpos, dneg, dtau = info_nce_batch(S[rows, pos_idx], S[rows[:, None], neg_idx], mask, c.gamma_c, tau)
    L_u = float(lu.mean())
    dS = np.zeros_like(S)
    np.add.at(dS, (rows, pos_idx), dpos / B)
    np.add.at(dS, (np.broadcast_to(rows[:, None], neg_idx.shape), neg_idx), dneg / B)
    dC = unit_backward(Cn, c_norm, dS @ Tn)
    dTu = unit_backward(Tn, t_norm, dS.T @ Cn)

    grads: dict = {}
    if c.learn_tau:
        grads["log_tau"] = np.array([dtau.mean() * tau])

    L_s = L_a = 0.0
    struct_rows: list[np.ndarray] = []
    struct_grads: list[np.ndarray] = []
    need_structure = c.use_structure_loss or c.use_alignment_loss
    if need_structure:
        T = model.decomp.T
        R = model.decomp.R
        E_h, E_t = T[h] @ A, T[t] @ A
    if c.use_structure_loss:
        E_n = T[neg.negative_ids] @ A
        R_r = R[r]
        ps, gh, gr, gt = kge.score_and_grad(c.kge, E_h, R_r, E_t)
        ns, ngh, ngr, ngt = kge.score_and_grad(c.kge, E_h[:, None, :], R_r[:, None, :], E_n)
        ls, dps, dns, adv_weights = self_adversarial_batch(ps, ns, mask, c.gamma_k, adv_weights)
        L_s = float(ls.mean())
        dps, dns = dps / B, dns / B
        dEh = dps[:, None] * gh + np.einsum("bk,bkd->bd", dns, ngh)
        dRr = dps[:, None] * gr + np.einsum("bk,bkd->bd", dns, ngr)
        dEt = dps[:, None] * gt
        dEn = dns[..., None] * ngt
        struct_rows += [h, t, neg.negative_ids.ravel()]
        struct_grads += [dEh, dEt, dEn.reshape(-1, A.shape[1])]
        grads["R"] = _scatter_rows(R.shape[0], r, dRr)
    if c.use_alignment_loss:
        x = Tu[pos_idx]
        gx = project(model.head, x)
        la, dg, dh, dt, _, _ = alignment_batch(gx, E_h, E_t, c.gamma_m, c.printed_margin_orientation)
        L_a = float(la.mean())
        dG, dgb, dx = project_backward(model.head, x, dg / B)
        grads["G"], grads["g_bias"] = dG, dgb
        np.add.at(dTu, pos_idx, dx)
        struct_rows += [h, t]
        struct_grads += [dh / B, dt / B]

    enc_grads, dA_enc = encode_backward(np.vstack([dC, dTu]), cache, A, model.encoder)
    grads.update(enc_grads)
    dA = np.zeros_like(A) if dA_enc is None else dA_enc
    if struct_rows:
        idx = np.concatenate(struct_rows)
        dE = np.vstack(struct_grads)
        dA = dA + T[idx].T @ dE
        grads["T"] = _scatter_rows(T.shape[0], idx, dE @ A.T)
    if dA_enc is not None or struct_rows:
        grads["A"] = dA
    total = L_u + L_s + L_a
    return StepResult(total, {"unified": L_u, "structure": L_s, "alignment": L_a}, grads, adv_weights)
