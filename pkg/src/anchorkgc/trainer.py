"""Joint training of the unified and structure branches."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from .config import TrainConfig, parse_config_text
from .anchors import AnchorDecomposition
from .encoder import EncoderParams, ProjectionHead, SparseRows
from .evaluate import default_filter, evaluate_split
from .kgdata import KnowledgeGraph, NeighborIndex, build_filter_index
from .model import Model, TextIndex, init_model, loss_and_grads
from .optim import AdamW, cosine_lr
from .sampling import build_negatives

logger = logging.getLogger(__name__)

COMPONENTS = ("unified", "structure", "alignment")
_ENCODER_FIELDS = ("token_table", "sep_vector", "position_table", "W1", "b1", "W2", "b2", "anchor_proj", "anchor_tokens")


class TrainingDiverged(RuntimeError):
    pass


def batches_per_epoch(n_triples: int, batch_size: int) -> int:
    full, rem = divmod(n_triples, batch_size)
    return full + (1 if rem >= 2 else 0)


@dataclass
class TrainState:
    model: Model
    optimizer: AdamW
    rng: np.random.Generator
    step: int = 0
    epoch: int = 0
    best_mrr: float = -1.0
    history: list[dict] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        tensors = dict(self.model.params())
        for name in self.optimizer.m:
            tensors[f"optim.m.{name}"] = self.optimizer.m[name]
            tensors[f"optim.v.{name}"] = self.optimizer.v[name]
        for name, rows in self.optimizer.row_subsets.items():
            tensors[f"optim.rows.{name}"] = rows.astype(np.float64)
        meta = {
            "config": self.model.config.to_text(),
            "step": self.step,
            "epoch": self.epoch,
            "best_mrr": self.best_mrr,
            "optim_counts": self.optimizer.counts,
            "rng": self.rng.bit_generator.state,
            "history": self.history,
        }
        return checkpoint.dumps(tensors, meta)

    def save(self, path: str) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())


def model_from_tensors(tensors: dict[str, np.ndarray], config: TrainConfig) -> Model:
    decomp = AnchorDecomposition(tensors["A"], tensors.get("T"), tensors["R"])
    enc = EncoderParams(**{k: tensors[k] for k in _ENCODER_FIELDS if k in tensors})
    head = ProjectionHead(tensors["G"], tensors["g_bias"])
    return Model(config, decomp, enc, head, tensors["log_tau"].reshape(1).copy())


def config_from_meta(meta: dict) -> TrainConfig:
    settings, _ = parse_config_text(meta["config"])
    return TrainConfig(**settings)


def load_state(data: bytes) -> TrainState:
    tensors, meta = checkpoint.loads(data)
    config = config_from_meta(meta)
    model = model_from_tensors(tensors, config)
    rows = {k.split(".", 2)[2]: v.astype(np.int64) for k, v in tensors.items() if k.startswith("optim.rows.")}
    opt = AdamW(model.params(), config.beta1, config.beta2, config.adam_eps, config.weight_decay, rows)
    for name in opt.m:
        opt.m[name] = tensors[f"optim.m.{name}"].copy()
        opt.v[name] = tensors[f"optim.v.{name}"].copy()
    opt.counts = {k: int(v) for k, v in meta["optim_counts"].items()}
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng"]
    return TrainState(model, opt, rng, meta["step"], meta["epoch"], meta["best_mrr"], meta["history"])


def load_model(path: str, inference_only: bool = False) -> Model:
    """Model from a checkpoint file; ``inference_only`` never reads ``T`` into memory."""
    exclude = {"T"} if inference_only else set()
    tensors, meta = checkpoint.load(path, exclude=exclude)
    tensors = {k: v for k, v in tensors.items() if not k.startswith("optim.")}
    return model_from_tensors(tensors, config_from_meta(meta))


def new_state(graph: KnowledgeGraph, config: TrainConfig, features=None, model: Model | None = None) -> TrainState:
    model = model or init_model(graph, config, features)
    text = TextIndex(graph, config.n_anchors, config.max_len, config.hash_vocab)
    opt = AdamW(
        model.params(),
        config.beta1,
        config.beta2,
        config.adam_eps,
        config.weight_decay,
        row_subsets={"token_table": text.training_rows()},
    )
    return TrainState(model, opt, np.random.default_rng(config.seed + 3))


def _grad_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        vals = g.values if isinstance(g, SparseRows) else g
        total += float(np.sum(np.square(vals)))
    return float(np.sqrt(total))


def _clip(grads: dict, max_norm: float) -> dict:
    norm = _grad_norm(grads)
    if norm <= max_norm or norm == 0:
        return grads
    scale = max_norm / norm
    return {
        k: SparseRows(g.rows, g.values * scale) if isinstance(g, SparseRows) else g * scale
        for k, g in grads.items()
    }


@dataclass
class TrainResult:
    model: Model
    state: TrainState
    history: list[dict]
    best_checkpoint: bytes | None = None

    @property
    def last_checkpoint(self) -> bytes:
        return self.state.to_bytes()


def train(
    graph: KnowledgeGraph,
    config: TrainConfig,
    features: np.ndarray | None = None,
    resume: TrainState | bytes | None = None,
    checkpoint_dir: str | None = None,
    stop_after_epoch: int | None = None,
    model: Model | None = None,
) -> TrainResult:
    """Train for ``config.epochs`` epochs (or until ``stop_after_epoch``).

    Each epoch logs the mean of every loss component, their sum and, when the
    evaluation split is nonempty, its filtered MRR. The best-validation and
    last states are kept; with ``checkpoint_dir`` they are written as
    ``best.akgc`` and ``last.akgc``.
    """
    if isinstance(resume, (bytes, bytearray)):
        resume = load_state(bytes(resume))
    state = resume or new_state(graph, config, features, model)
    config = state.model.config
    m = state.model
    text = TextIndex(graph, config.n_anchors, config.max_len, config.hash_vocab)
    train_filter = build_filter_index(graph, ("train",))
    eval_split = config.eval_split
    do_eval = len(graph.split(eval_split)) > 0 and config.eval_every > 0
    if do_eval:
        eval_filter = default_filter(graph, eval_split)
        neighbors = NeighborIndex(graph, config.k_hop)
    triples = graph.train
    n = len(triples)
    per_epoch = batches_per_epoch(n, config.batch_size)
    total_steps = per_epoch * config.epochs
    best = None
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)

    last_epoch = config.epochs if stop_after_epoch is None else min(stop_after_epoch, config.epochs)
    while state.epoch < last_epoch:
        perm = state.rng.permutation(n)
        sums = dict.fromkeys(COMPONENTS, 0.0)
        for b in range(per_epoch):
            batch = triples[perm[b * config.batch_size : (b + 1) * config.batch_size]]
            neg = build_negatives(
                batch, graph.num_entities, train_filter, state.rng, config.negatives, config.mask_false_negatives
            )
            res = loss_and_grads(m, text, neg)
            if not np.isfinite(res.loss) or not all(np.isfinite(v) for v in res.components.values()):
                raise TrainingDiverged(
                    f"non-finite loss at step {state.step}: components={res.components}, "
                    f"grad_norm={_grad_norm(res.grads):.4g}"
                )
            grads = _clip(res.grads, config.grad_clip) if config.grad_clip > 0 else res.grads
            lr = cosine_lr(state.step, total_steps, config.lr, config.lr_min)
            state.optimizer.step(grads, lr)
            state.step += 1
            for k in COMPONENTS:
                sums[k] += res.components[k]
        state.epoch += 1
        record = {"epoch": state.epoch}
        for k in COMPONENTS:
            record[k] = sums[k] / max(per_epoch, 1)
        record["total"] = sum(record[k] for k in COMPONENTS)
        if do_eval and state.epoch % config.eval_every == 0:
            rep = evaluate_split(m, graph, eval_split, text, eval_filter, neighbors)
            record[f"{eval_split}_mrr"] = rep.mrr
            if rep.mrr > state.best_mrr:
                state.best_mrr = rep.mrr
                record["best"] = True
        state.history.append(record)
        logger.info("epoch %d: %s", state.epoch, {k: round(v, 5) for k, v in record.items() if isinstance(v, float)})
        if record.get("best"):
            best = state.to_bytes()
            if checkpoint_dir:
                with open(os.path.join(checkpoint_dir, "best.akgc"), "wb") as f:
                    f.write(best)
        if checkpoint_dir:
            state.save(os.path.join(checkpoint_dir, "last.akgc"))
    return TrainResult(m, state, state.history, best)
