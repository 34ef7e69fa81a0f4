"""Training configuration and its flat ``key = value`` file format.

Lines are ``key = value``; ``#`` starts a comment. Keys after an
``[ablate]`` header declare an ablation grid, each value a comma-separated
list of settings for that key.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, fields

from .kge import KINDS
from .sampling import NEGATIVE_MODES

ANCHOR_INIT_MODES = ("kmeans", "random")


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    lr_min: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    grad_clip: float = 0.0
    n_anchors: int = 10
    d_structure: int = 128
    d_unified: int = 128
    max_len: int = 60
    hash_vocab: int = 32768
    tie_anchors: bool = True
    kge: str = "transe"
    anchor_init: str = "kmeans"
    kmeans_iters: int = 100
    ridge: float = 1e-6
    features: str = ""
    negatives: str = "in_batch_plus_uniform"
    mask_false_negatives: bool = True
    gamma_c: float = 0.02
    gamma_k: float = 9.0
    gamma_m: float = 1.0
    tau_init: float = 0.05
    learn_tau: bool = True
    use_structure_loss: bool = True
    use_alignment_loss: bool = True
    printed_margin_orientation: bool = False
    lambda_align: float = 0.01
    alpha: float = 0.05
    beta: float = 0.1
    k_hop: int = 2
    inverse_relations: bool = True
    eval_every: int = 1
    eval_split: str = "valid"
    threads: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kge not in KINDS:
            raise ValueError(f"kge must be one of {KINDS}, got {self.kge!r}")
        if self.negatives not in NEGATIVE_MODES:
            raise ValueError(f"negatives must be one of {NEGATIVE_MODES}, got {self.negatives!r}")
        if self.anchor_init not in ANCHOR_INIT_MODES:
            raise ValueError(f"anchor_init must be one of {ANCHOR_INIT_MODES}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.tau_init <= 0:
            raise ValueError("tau_init must be positive")
        if self.kge in ("complex", "rotate") and self.d_structure % 2:
            raise ValueError(f"{self.kge} needs an even d_structure")
        if self.max_len <= self.n_anchors + 2:
            raise ValueError("max_len must exceed n_anchors + 2")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if min(self.epochs, self.n_anchors, self.d_structure, self.d_unified) < 1:
            raise ValueError("epochs and dimensions must be >= 1")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {format_value(getattr(self, f.name))}\n" for f in fields(self))


FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def parse_value(key: str, text: str):
    if key not in FIELD_TYPES:
        raise KeyError(f"unknown config key {key!r}")
    kind = FIELD_TYPES[key]
    text = text.strip()
    if kind == "bool":
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {text!r}")
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def parse_config_text(text: str) -> tuple[dict, dict[str, list]]:
    """Returns ``(settings, ablation_grid)``."""
    settings: dict = {}
    grid: dict[str, list] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section != "ablate":
                raise ValueError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if section == "ablate":
                grid[key] = [parse_value(key, v) for v in value.split(",") if v.strip()]
            else:
                settings[key] = parse_value(key, value)
        except (KeyError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return settings, grid


def load_config(path: str | None = None, **overrides) -> tuple[TrainConfig, dict[str, list]]:
    settings, grid = {}, {}
    if path:
        with open(path, encoding="utf-8") as f:
            settings, grid = parse_config_text(f.read())
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**settings), grid


def expand_grid(base: TrainConfig, grid: dict[str, list]) -> list[tuple[dict, TrainConfig]]:
    """Cartesian product of the grid in declaration order."""
    if not grid:
        return [({}, base)]
    for key, values in grid.items():
        if not values:
            raise ValueError(f"ablation key {key!r} has no values")
    keys = list(grid)
    cells = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cell = dict(zip(keys, combo))
        cells.append((cell, base.replace(**cell)))
    return cells
