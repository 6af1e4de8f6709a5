"""End-to-end evaluation of one NIAH sample under one or more sparse settings.

For every head of the planted model the sample is embedded once and the
head states are shared by all settings. Head 0 is the readout head: its
attention outputs are decoded into value symbols and scored by exact match.
Every head contributes a hit indicator for the hit-rate analysis.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Sequence

import numpy as np

from .analysis import head_hit
from .backbone import (
    BackboneKind,
    HeadStates,
    PlantedModelSpec,
    build_head_states,
    decode_queries,
    embed_tokens,
    readout_symbol,
)
from .errors import DomainError
from .memory import GateParams
from .niah import NiahSample, exact_match
from .sparse import (
    BudgetSpec,
    CandidateSet,
    forced_blocks,
    moba_block_reps,
    quest_block_reps,
    random_select,
    select_blocks,
    snapkv_select,
    sparse_attention,
)

__all__ = ["METHODS", "MethodSetting", "SampleOutcome", "evaluate_sample", "head_selections"]

METHODS = ("quest", "moba", "snapkv", "random")


@dataclass(frozen=True)
class MethodSetting:
    method: Literal["quest", "moba", "snapkv", "random"]
    fraction: Fraction
    block_size: int = 64
    window: int = 64
    keep: int | None = None
    selector: Literal["designed", "random"] = "designed"
    random_mode: Literal["keep_forced", "uniform"] = "keep_forced"
    pooling: Literal["sum", "max"] = "sum"

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")

    @property
    def unit(self) -> str:
        return "block" if self.method in ("quest", "moba") else "token"

    def keep_for(self, context_len: int) -> int:
        if self.keep is not None:
            return self.keep
        return BudgetSpec.tokens(self.fraction, context_len).derived_top_k

    def top_k(self, context_len: int) -> int:
        """Budget in the method's own unit: blocks for quest/moba, tokens otherwise."""
        if self.unit == "block":
            return BudgetSpec.blocks(self.fraction, context_len, self.block_size).derived_top_k
        return self.keep_for(context_len)

    def code(self) -> int:
        """Stable integer tag for seeding (no Python ``hash`` randomisation)."""
        text = f"{self.method}|{self.fraction}|{self.block_size}|{self.window}|{self.keep}"
        return zlib.crc32(text.encode())


@dataclass(frozen=True)
class SampleOutcome:
    score: float
    predictions: tuple[tuple[int, ...], ...]
    hits: tuple[int, ...]


def _selector_rng(setting: MethodSetting, sample: NiahSample, seed: int, head: int) -> np.random.Generator:
    # no backbone in the key: both backbones see the same random draws
    return np.random.default_rng([int(seed), sample.seed & (2**63 - 1), setting.code(), head])


def head_selections(
    states: HeadStates,
    queries: np.ndarray,
    setting: MethodSetting,
    rng: np.random.Generator | None = None,
) -> list[CandidateSet]:
    """Selection used at each decoding step for one head."""
    T = states.length
    n_steps = queries.shape[0]
    random = setting.selector == "random" or setting.method == "random"
    if random and rng is None:
        raise DomainError("random selection needs a generator")

    if setting.unit == "block":
        B = setting.block_size
        budget = BudgetSpec.blocks(setting.fraction, T, B)
        forced = forced_blocks(T - 1, B)
        if random:
            keep = forced if setting.random_mode == "keep_forced" else ()
            return [
                random_select(budget.candidate_count, budget.derived_top_k, keep, rng, unit="block", block_size=B)
                for _ in range(n_steps)
            ]
        reps = (quest_block_reps if setting.method == "quest" else moba_block_reps)(states.keys, B)
        return [select_blocks(q, reps, budget, forced) for q in queries]

    if setting.method == "snapkv":
        keep = setting.keep_for(T)
        if random:
            window = range(T - setting.window, T) if setting.random_mode == "keep_forced" else ()
            chosen = random_select(T, keep, window, rng, unit="token")
        else:
            chosen = snapkv_select(states, setting.window, keep, setting.pooling)
        # selected once after prefill and reused at every step
        return [chosen] * n_steps

    k = setting.keep_for(T)
    return [random_select(T, k, (), rng, unit="token") for _ in range(n_steps)]


def evaluate_sample(
    sample: NiahSample,
    spec: PlantedModelSpec,
    backbone: BackboneKind | str,
    settings: Sequence[MethodSetting],
    gate_params: GateParams | None = None,
    *,
    seed: int = 0,
    n_heads: int | None = None,
) -> list[SampleOutcome]:
    """Score ``sample`` under each setting; one outcome per setting."""
    backbone = BackboneKind.parse(backbone)
    heads = spec.n_heads if n_heads is None else n_heads
    gold = sample.gold_answers
    lengths = [len(a) for a in gold]

    predictions: list[list[int]] = [[] for _ in settings]
    hits: list[list[int]] = [[] for _ in settings]
    for head in range(heads):
        X = embed_tokens(sample, spec, head)
        states = build_head_states(
            X, backbone, gate_params if backbone is BackboneKind.MEMORY_AUGMENTED else None
        )
        queries = decode_queries(sample, spec, head)
        for i, setting in enumerate(settings):
            rng = _selector_rng(setting, sample, seed, head)
            sels = head_selections(states, queries, setting, rng)
            hits[i].append(head_hit(sels, sample.gold_positions, setting.block_size))
            if head == 0:
                predictions[i] = [
                    readout_symbol(sparse_attention(q, states, s), spec) for q, s in zip(queries, sels)
                ]

    out = []
    for i in range(len(settings)):
        flat = predictions[i]
        answers, start = [], 0
        for n in lengths:
            answers.append(tuple(flat[start : start + n]))
            start += n
        out.append(SampleOutcome(exact_match(answers, gold), tuple(answers), tuple(hits[i])))
    return out

