"""Head-level hit rate and the random-selector ablation.

A head *hits* on a sample when, at every decoding step, the candidates it
selected contain that step's gold token position (for block selections: the
block containing it). Hit rates are averaged over samples and heads are
ranked by them. The random-selector ablation swaps each method's selector
for a uniform draw of the same size and reports mean and population standard
deviation across seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError
from .sparse import CandidateSet

__all__ = [
    "STD_CONVENTION",
    "AggregateResult",
    "HitRecord",
    "aggregate",
    "covers",
    "head_hit",
    "hit_rates",
    "run_random_ablation",
    "top_head_distribution",
]

STD_CONVENTION = "population"


def covers(selection: CandidateSet, position: int, block_size: int | None = None) -> bool:
    """Whether ``selection`` includes token ``position``."""
    if selection.unit == "token":
        return int(position) in selection.indices
    B = block_size or selection.block_size
    return int(position) // B in selection.indices


def head_hit(selections_per_step: Sequence[CandidateSet], gold_positions: Sequence[int], block_size: int | None = None) -> int:
    """1 iff every step's selection covers that step's gold position."""
    if len(selections_per_step) != len(gold_positions):
        raise ShapeError(
            f"{len(selections_per_step)} selections for {len(gold_positions)} gold positions"
        )
    return int(all(covers(s, g, block_size) for s, g in zip(selections_per_step, gold_positions)))


@dataclass(frozen=True)
class HitRecord:
    head: int
    selections: tuple[CandidateSet, ...]
    gold_positions: tuple[int, ...]
    block_size: int = 1
    hit: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "hit", head_hit(self.selections, self.gold_positions, self.block_size))


def hit_rates(hits) -> np.ndarray:
    """Per-head hit rate from a (samples, heads) 0/1 matrix."""
    hits = np.asarray(hits, dtype=np.float64)
    if hits.ndim != 2:
        raise ShapeError("hit matrix must be (samples, heads)")
    return hits.mean(axis=0)


def top_head_distribution(rates, top_n: int) -> list[float]:
    """The ``top_n`` largest per-head hit rates, descending.

    ``NaN`` marks a head with no decoding steps; such heads are dropped
    before ranking rather than counted as vacuous hits.
    """
    rates = np.asarray(rates, dtype=np.float64).ravel()
    rates = rates[~np.isnan(rates)]
    if top_n > rates.size:
        raise ShapeError(f"top_n={top_n} exceeds the {rates.size} ranked heads")
    return sorted(rates.tolist(), reverse=True)[:top_n]


@dataclass(frozen=True)
class AggregateResult:
    mean: float
    std: float
    n_seeds: int
    per_seed: tuple[float, ...]
    std_convention: str = STD_CONVENTION

    def __post_init__(self):
        if self.n_seeds != len(self.per_seed):
            raise ShapeError("n_seeds must match the number of per-seed values")

    def render(self, digits: int = 2) -> str:
        """``"m ± s"`` with ``digits`` decimals."""
        return f"{self.mean:.{digits}f} ± {self.std:.{digits}f}"

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "n_seeds": self.n_seeds,
            "per_seed": list(self.per_seed),
            "std_convention": self.std_convention,
        }


def aggregate(values) -> AggregateResult:
    """Mean and population std (divisor n) of per-seed values."""
    vals = tuple(float(v) for v in values)
    if not vals:
        raise ConfigError("cannot aggregate zero seeds")
    mean = math.fsum(vals) / len(vals)
    if all(v == vals[0] for v in vals):
        return AggregateResult(vals[0], 0.0, len(vals), vals)
    var = math.fsum((v - mean) ** 2 for v in vals) / len(vals)
    return AggregateResult(mean, math.sqrt(var), len(vals), vals)


def run_random_ablation(config, seeds=(0, 1, 2, 3, 4), *, workers: int = 1):
    """Evaluate ``config`` with random selectors, one run per seed.

    Returns ``{(backbone, method, budget, task): AggregateResult}`` over the
    per-seed accuracies (percent).
    """
    from .harness.runner import run_grid  # harness builds on this module

    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigError("random ablation needs at least one seed")
    cfg = config.replace(selector="random", seeds=seeds)
    out = {}
    for res in run_grid(cfg, workers=workers):
        key = (res.backbone, res.method, res.budget, res.task)
        out[key] = aggregate(res.per_seed_accuracy)
    return out
