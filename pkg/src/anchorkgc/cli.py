"""Command-line entry point: ``anchorkgc <command> [flags]``.

Commands: prepare, init-anchors, train, eval, predict, ablate. Every
training-config key is reachable as ``--key-name`` (booleans as
``--key``/``--no-key``; ``use_*`` switches also drop the prefix, e.g.
``--no-structure-loss``). Reports go to stdout or ``--out``, diagnostics to
stderr. Exit status is 0 on success, 1 on a runtime error, 2 on bad usage.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from . import __version__, checkpoint
from .anchors import AnchorDecomposition, init_from_features, init_random, read_feature_file, text_feature_matrix
from .config import FIELD_TYPES, TrainConfig, expand_grid, load_config
from .evaluate import CandidateCache, encode_entities, evaluate_split, rerank, score_all
from .kgdata import DatasetError, NeighborIndex, load_dataset, load_graph, add_inverse_relations, save_prepared
from .model import TextIndex, init_model
from .trainer import load_model, train

logger = logging.getLogger("anchorkgc")

# Flags every command already owns, so the config-flag generator skips them.
_RESERVED = {"seed", "threads"}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_config_flags(parser: argparse.ArgumentParser, skip=()) -> None:
    group = parser.add_argument_group("training configuration (overrides --config)")
    for f in fields(TrainConfig):
        if f.name in _RESERVED or f.name in skip:
            continue
        kind = FIELD_TYPES[f.name]
        if kind == "bool":
            stem = f.name[4:] if f.name.startswith("use_") else f.name
            names = {f.name, stem}
            group.add_argument(
                *sorted(_flag(n) for n in names),
                dest=f.name,
                action="store_const",
                const=True,
                default=None,
                help=f"enable {f.name} (default {f.default})",
            )
            group.add_argument(
                *sorted("--no-" + n.replace("_", "-") for n in names),
                dest=f.name,
                action="store_const",
                const=False,
                help=argparse.SUPPRESS,
            )
        else:
            conv = {"int": int, "float": float}.get(kind, str)
            group.add_argument(_flag(f.name), dest=f.name, type=conv, default=None, help=f"default {f.default!r}")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="seed for every stochastic component")
    parser.add_argument("--threads", type=int, default=None, help="BLAS threads; 1 is bit-reproducible (default: all)")
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _config(args, **extra) -> tuple[TrainConfig, dict]:
    overrides = {f.name: getattr(args, f.name, None) for f in fields(TrainConfig)}
    overrides.update(extra)
    return load_config(args.config, **overrides)


@contextlib.contextmanager
def _threads(n: int | None):
    if not n:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=n):
        yield


@contextlib.contextmanager
def _output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            yield f


def _load(args):
    if not os.path.isdir(args.graph):
        raise DatasetError(f"graph directory not found: {args.graph}")
    return load_graph(args.graph, getattr(args, "mode", None))


def cmd_prepare(args) -> int:
    if not os.path.isdir(args.data):
        raise DatasetError(f"dataset directory not found: {args.data}")
    graph = load_dataset(args.data, args.mode)
    if not args.no_inverse:
        graph = add_inverse_relations(graph)
    save_prepared(graph, args.out, args.k_hop)
    print(graph.summary())
    return 0


def cmd_init_anchors(args) -> int:
    graph = _load(args)
    seed = 0 if args.seed is None else args.seed
    meta = {"method": args.method, "n_anchors": args.n, "seed": seed}
    if args.method == "random":
        decomp = init_random(graph.num_entities, args.n, args.dim, graph.num_relations, seed)
    else:
        if args.features:
            feats = read_feature_file(args.features)
            if feats.shape[0] != graph.num_entities:
                raise ValueError(f"feature file has {feats.shape[0]} rows, graph has {graph.num_entities} entities")
        else:
            feats = text_feature_matrix(graph, args.dim, args.hash_vocab)
        if graph.num_entities < args.n:
            raise ValueError(f"k-means needs at least {args.n} entities, graph has {graph.num_entities}")
        decomp, res = init_from_features(feats, args.n, graph.num_relations, seed, args.kmeans_iters, args.ridge)
        meta.update(objective=res.objective, iterations=res.n_iter, reseeded=res.reseeded)
    tensors = {"A": decomp.A, "R": decomp.R}
    if decomp.has_T:
        tensors["T"] = decomp.T
    checkpoint.save(args.out, tensors, meta)
    for key in sorted(meta):
        print(f"{key} = {meta[key]}")
    return 0


def _attach_anchors(model, path: str) -> None:
    tensors, _ = checkpoint.load(path)
    cur = model.decomp
    for name in ("A", "T", "R"):
        if name in tensors:
            want = getattr(cur, "_T" if name == "T" else name).shape
            if tensors[name].shape != want:
                raise ValueError(f"anchor file {name} has shape {tensors[name].shape}, model expects {want}")
    model.decomp = AnchorDecomposition(tensors["A"], tensors.get("T", cur._T), tensors["R"])


def _history_table(history) -> str:
    keys = ["epoch", "unified", "structure", "alignment", "total"]
    extra = sorted({k for h in history for k in h if k.endswith("_mrr")})
    lines = ["\t".join(keys + extra)]
    for h in history:
        row = [str(h["epoch"])] + [f"{h[k]:.6f}" for k in keys[1:]]
        row += [f"{h[k]:.6f}" if k in h else "" for k in extra]
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def cmd_train(args) -> int:
    graph = _load(args)
    config, _ = _config(args, seed=args.seed)
    resume = model = None
    if args.resume:
        if args.anchors:
            raise ValueError("--anchors cannot be combined with --resume")
        with open(args.resume, "rb") as f:
            resume = f.read()
    else:
        model = init_model(graph, config)
        if args.anchors:
            _attach_anchors(model, args.anchors)
    result = train(graph, config, resume=resume, checkpoint_dir=args.out, model=model, stop_after_epoch=args.stop_after)
    table = _history_table(result.history)
    with open(os.path.join(args.out, "history.tsv"), "w", encoding="utf-8") as f:
        f.write(table)
    sys.stdout.write(table)
    return 0


def _eval_model(args, graph):
    inductive = graph.inductive_entities is not None and args.split != "train"
    return load_model(args.checkpoint, inference_only=inductive)


def cmd_eval(args) -> int:
    graph = _load(args)
    model = _eval_model(args, graph)
    kw = {k: getattr(args, k) for k in ("alpha", "beta", "lambda_align") if getattr(args, k) is not None}
    if "lambda_align" in kw:
        kw["lam"] = kw.pop("lambda_align")
    report = evaluate_split(model, graph, args.split, **kw)
    if args.out:
        report.write(args.out)
    sys.stdout.write(report.to_table())
    return 0


def _lookup(items, key: str, what: str) -> int:
    for i, item in enumerate(items):
        if item.id == key:
            return i
    raise KeyError(f"unknown {what} {key!r}")


def cmd_predict(args) -> int:
    graph = _load(args)
    side = "inductive" if args.inductive else "train"
    if side == "inductive" and graph.inductive_entities is None:
        raise ValueError("--inductive needs a graph with an inductive vocabulary")
    model = load_model(args.checkpoint, inference_only=side == "inductive")
    c = model.config
    vocab = graph.inductive_entities if side == "inductive" else graph.entities
    h = _lookup(vocab, args.head, "entity")
    r = _lookup(graph.relations, args.relation, "relation")
    text = TextIndex(graph, c.n_anchors, c.max_len, c.hash_vocab)
    cache = CandidateCache.build(model, encode_entities(model, text, side))
    scores = score_all(model, text, h, r, side, cache)
    neighbors = NeighborIndex(graph, c.k_hop) if side == "train" else None
    scores = rerank(scores, h, neighbors, c.alpha, c.beta)
    order = np.argsort(-scores, kind="stable")[: args.top]
    with _output(args.out) as out:
        out.write("rank\tentity_id\tname\tscore\n")
        for rank, e in enumerate(order, start=1):
            out.write(f"{rank}\t{vocab[e].id}\t{vocab[e].name}\t{scores[e]:.6f}\n")
    return 0


def cmd_ablate(args) -> int:
    graph = _load(args)
    base, grid = _config(args, seed=args.seed)
    if not grid:
        raise ValueError("config file declares no [ablate] grid")
    try:
        cells = expand_grid(base, grid)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"invalid ablation grid: {exc}") from None
    os.makedirs(args.out, exist_ok=True)
    keys = list(grid)
    rows = []
    for i, (cell, config) in enumerate(cells):
        logger.info("cell %d/%d: %s", i + 1, len(cells), cell)
        result = train(graph, config)
        report = evaluate_split(result.model, graph, args.split)
        report.write(os.path.join(args.out, f"cell{i:03d}"))
        m = report.metrics
        rows.append([str(i)] + [str(cell[k]) for k in keys] + [f"{m[k]:.6f}" for k in ("mrr", "hits1", "hits3", "hits10")])
    with open(os.path.join(args.out, "summary.csv"), "w", encoding="utf-8") as f:
        f.write(",".join(["cell"] + keys + ["mrr", "hits1", "hits3", "hits10"]) + "\n")
        for row in rows:
            f.write(",".join(row) + "\n")
    with open(os.path.join(args.out, "summary.csv"), encoding="utf-8") as f:
        sys.stdout.write(f.read())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anchorkgc", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--version", action="version", version=f"anchorkgc {__version__} (checkpoint format {checkpoint.FORMAT_VERSION})"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate, augment and index a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("transductive", "inductive"), default="transductive")
    p.add_argument("--out", required=True)
    p.add_argument("--k-hop", type=int, default=2)
    p.add_argument("--no-inverse", action="store_true", help="skip inverse-relation augmentation")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_prepare, seed=None, threads=None)

    p = sub.add_parser("init-anchors", help="write initial anchors (A, T, R) to a checkpoint file")
    p.add_argument("--graph", required=True)
    p.add_argument("--method", choices=("random", "kmeans"), default="kmeans")
    p.add_argument("--n", type=int, default=10, help="number of anchors")
    p.add_argument("--dim", type=int, default=128, help="structure dimension (ignored with --features)")
    p.add_argument("--features", default=None, help="external feature matrix file ('V D' header)")
    p.add_argument("--hash-vocab", type=int, default=32768)
    p.add_argument("--kmeans-iters", type=int, default=100)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_init_anchors)

    p = sub.add_parser("train", help="train and write best.akgc / last.akgc / history.tsv")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--anchors", default=None, help="initial anchors from init-anchors")
    p.add_argument("--resume", default=None, help="checkpoint to resume from; its stored config is used")
    p.add_argument("--stop-after", type=int, default=None, metavar="EPOCH", help="stop after this epoch")
    _common(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="filtered ranking metrics of a checkpoint")
    p.add_argument("--graph", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--lambda-align", type=float, default=None)
    p.add_argument("--out", default=None, help="directory for metrics.txt and relations.csv")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_eval, seed=None)

    p = sub.add_parser("predict", help="top-k tails for one (head, relation) query")
    p.add_argument("--graph", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--head", required=True, help="head entity id")
    p.add_argument("--relation", required=True, help="relation id (inverse relations: 'inverse:<id>')")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--inductive", action="store_true", help="query the inductive vocabulary")
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_predict, seed=None)

    p = sub.add_parser("ablate", help="train and evaluate every cell of the config's [ablate] grid")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    _common(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        with _threads(getattr(args, "threads", None)):
            return args.func(args)
    except (DatasetError, checkpoint.CheckpointError, KeyError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"anchorkgc {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
