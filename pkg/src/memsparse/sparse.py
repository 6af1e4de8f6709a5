"""Query-aware candidate selection and attention over the selected states.

Selection is ``TopK_i s(q_sel, rep(K_i))`` over candidates ``i``; attention is
then the ordinary softmax attention restricted to the selected rows. Three
instantiations are provided:

    quest   block unit, per-dimension min/max representatives, decode time
    moba    block unit, mean-pooled representatives, prefill time
    snapkv  token unit, observation-window scoring, once after prefill

plus a uniform random selector used to separate selection quality from the
information carried by whatever gets selected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal

import numpy as np
from scipy.special import softmax

from .backbone import HeadStates, dense_attention
from .errors import BudgetError, DomainError, ShapeError
from .kernels import as_matrix, as_vector, topk_indices

__all__ = [
    "BlockReps",
    "BudgetSpec",
    "CandidateSet",
    "forced_blocks",
    "moba_block_reps",
    "moba_prefill_attention",
    "quest_block_reps",
    "quest_score",
    "random_select",
    "select_blocks",
    "snapkv_scores",
    "snapkv_select",
    "sparse_attention",
]

Unit = Literal["block", "token"]


def parse_fraction(value) -> Fraction:
    try:
        frac = Fraction(str(value)) if not isinstance(value, Fraction) else value
    except (ValueError, ZeroDivisionError):
        raise BudgetError(f"cannot parse budget fraction {value!r}") from None
    if not 0 < frac <= 1:
        raise BudgetError(f"budget fraction must lie in (0, 1], got {frac}")
    return frac


def round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


@dataclass(frozen=True)
class BudgetSpec:
    """A per-query KV budget resolved against a candidate count.

    ``derived_top_k = round(fraction * candidate_count)`` (half up, at least 1),
    with forced candidates counted inside the budget.
    """

    fraction: Fraction
    candidate_count: int
    block_size: int = 1

    def __post_init__(self):
        object.__setattr__(self, "fraction", parse_fraction(self.fraction))
        if self.block_size < 1:
            raise BudgetError("block_size must be at least 1")
        if self.candidate_count < 1:
            raise BudgetError("need at least one candidate")

    @property
    def derived_top_k(self) -> int:
        return max(1, round_half_up(self.fraction * self.candidate_count))

    @classmethod
    def blocks(cls, fraction, context_len: int, block_size: int) -> "BudgetSpec":
        if block_size < 1:
            raise BudgetError("block_size must be at least 1")
        return cls(parse_fraction(fraction), math.ceil(context_len / block_size), block_size)

    @classmethod
    def tokens(cls, fraction, context_len: int) -> "BudgetSpec":
        return cls(parse_fraction(fraction), context_len, 1)


@dataclass(frozen=True)
class CandidateSet:
    indices: tuple[int, ...]
    unit: Unit
    forced: frozenset[int] = field(default_factory=frozenset)
    block_size: int = 1

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if list(idx) != sorted(set(idx)):
            raise DomainError("candidate indices must be unique and sorted")
        if not frozenset(self.forced) <= frozenset(idx):
            raise DomainError("forced candidates must be selected")
        if self.unit not in ("block", "token"):
            raise DomainError(f"unknown unit {self.unit!r}")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "forced", frozenset(int(i) for i in self.forced))

    def __len__(self) -> int:
        return len(self.indices)

    def token_indices(self, length: int) -> np.ndarray:
        """Token positions covered by the selection, clipped to ``length``."""
        if self.unit == "token":
            idx = np.asarray(self.indices, dtype=np.int64)
            return idx[idx < length]
        B = self.block_size
        spans = [np.arange(b * B, min((b + 1) * B, length)) for b in self.indices]
        return np.concatenate(spans) if spans else np.zeros(0, dtype=np.int64)


@dataclass(frozen=True)
class BlockReps:
    """Per-block representatives of a key matrix; the last block may be short."""

    unit: Literal["quest_minmax", "moba_mean"]
    block_size: int
    length: int
    mins: np.ndarray | None = None
    maxs: np.ndarray | None = None
    means: np.ndarray | None = None

    @property
    def n_blocks(self) -> int:
        return math.ceil(self.length / self.block_size)

    def scores(self, q) -> np.ndarray:
        q = as_vector(q, "query")
        if self.unit == "quest_minmax":
            return np.maximum(self.mins * q, self.maxs * q).sum(axis=1)
        return self.means @ q


def _blocked(keys, block_size: int) -> tuple[np.ndarray, np.ndarray]:
    keys = as_matrix(keys, "keys")
    if keys.shape[0] == 0:
        raise DomainError("no keys to partition into blocks")
    if block_size < 1:
        raise BudgetError("block_size must be at least 1")
    starts = np.arange(0, keys.shape[0], block_size)
    return keys, starts


def quest_block_reps(keys, block_size: int) -> BlockReps:
    keys, starts = _blocked(keys, block_size)
    return BlockReps(
        unit="quest_minmax",
        block_size=block_size,
        length=keys.shape[0],
        mins=np.minimum.reduceat(keys, starts, axis=0),
        maxs=np.maximum.reduceat(keys, starts, axis=0),
    )


def quest_score(q, block_min, block_max) -> float:
    """Upper bound on ``q . k`` for any ``k`` with ``block_min <= k <= block_max``."""
    q = as_vector(q, "query")
    lo = as_vector(block_min, "block min")
    hi = as_vector(block_max, "block max")
    if not q.shape == lo.shape == hi.shape:
        raise ShapeError("query and block statistics must share a dimension")
    return float(np.maximum(q * lo, q * hi).sum())


def moba_block_reps(keys, block_size: int) -> BlockReps:
    keys, starts = _blocked(keys, block_size)
    counts = np.diff(np.append(starts, keys.shape[0]))
    sums = np.add.reduceat(keys, starts, axis=0)
    return BlockReps(
        unit="moba_mean",
        block_size=block_size,
        length=keys.shape[0],
        means=sums / counts[:, None],
    )


def forced_blocks(query_pos: int, block_size: int) -> tuple[int, ...]:
    """First block and the block holding ``query_pos``."""
    return tuple(sorted({0, query_pos // block_size}))


def _top_up(scores: np.ndarray, k: int, forced, n: int) -> list[int]:
    forced = sorted(set(int(f) for f in forced))
    if any(not 0 <= f < n for f in forced):
        raise DomainError("forced candidate out of range")
    if len(forced) > k:
        raise BudgetError(f"budget of {k} cannot hold {len(forced)} forced candidates")
    rest = np.setdiff1d(np.arange(n), forced)
    free = min(k, n) - len(forced)
    chosen = rest[topk_indices(scores[rest], free)] if free > 0 else []
    return sorted(forced + [int(c) for c in chosen])


def select_blocks(q_sel, reps: BlockReps, budget: BudgetSpec | int, forced=()) -> CandidateSet:
    """Forced blocks plus the best-scoring others, up to the budget's top-K."""
    k = budget.derived_top_k if isinstance(budget, BudgetSpec) else int(budget)
    scores = reps.scores(q_sel)
    chosen = _top_up(scores, k, forced, reps.n_blocks)
    return CandidateSet(tuple(chosen), "block", frozenset(forced), reps.block_size)


def snapkv_scores(states: HeadStates, window: int, pooling: str = "sum") -> np.ndarray:
    """Importance of each prefix position as seen by the last ``window`` queries.

    Each window query attends causally over the prompt; its softmax weights on
    the prefix (positions before the window) are pooled across the window.
    """
    T = states.length
    if not 1 <= window <= T:
        raise BudgetError(f"window {window} must lie in 1..{T}")
    prefix = T - window
    keys = states.keys
    d = keys.shape[1]
    q = states.queries[prefix:]
    logits = q @ keys.T / math.sqrt(d)
    # window row i sits at position prefix + i and may see positions <= prefix + i
    future = np.arange(T)[None, :] > (prefix + np.arange(window))[:, None]
    logits[future] = -np.inf
    weights = softmax(logits, axis=1)[:, :prefix]
    if pooling == "sum":
        return weights.sum(axis=0)
    if pooling == "max":
        return weights.max(axis=0) if window else np.zeros(prefix)
    raise DomainError(f"unknown SnapKV pooling {pooling!r}")


def snapkv_select(states: HeadStates, window: int, keep: int, pooling: str = "sum") -> CandidateSet:
    """Retain the window plus the ``keep - window`` highest-scoring prefix tokens."""
    T = states.length
    if keep > T:
        raise BudgetError(f"keep={keep} exceeds the {T}-token prompt")
    if keep < window:
        raise BudgetError(f"keep={keep} is smaller than the observation window {window}")
    scores = snapkv_scores(states, window, pooling)
    prefix = T - window
    kept = topk_indices(scores, min(keep - window, prefix)) if prefix else np.zeros(0, dtype=int)
    window_pos = range(prefix, T)
    return CandidateSet(tuple(kept.tolist()) + tuple(window_pos), "token", frozenset(window_pos))


def sparse_attention(q, states: HeadStates, selected: CandidateSet) -> np.ndarray:
    """Softmax attention restricted to the selected rows of the active keys/values."""
    rows = selected.token_indices(states.length)
    if rows.size == 0:
        raise DomainError("empty selection")
    if rows.min() < 0:
        raise DomainError("selection index out of range")
    return dense_attention(q, states.keys[rows], states.values[rows])


def random_select(
    candidate_count: int,
    budget_k: int,
    forced=(),
    seed: int | np.random.Generator = 0,
    *,
    unit: Unit = "block",
    block_size: int = 1,
) -> CandidateSet:
    """Uniform draw among the size-``budget_k`` candidate sets containing ``forced``."""
    forced = sorted(set(int(f) for f in forced))
    if budget_k > candidate_count or budget_k < 1:
        raise BudgetError(f"budget {budget_k} infeasible for {candidate_count} candidates")
    if len(forced) > budget_k:
        raise BudgetError(f"budget {budget_k} cannot hold {len(forced)} forced candidates")
    if any(not 0 <= f < candidate_count for f in forced):
        raise DomainError("forced candidate out of range")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rest = np.setdiff1d(np.arange(candidate_count), forced)
    extra = rng.choice(rest, size=budget_k - len(forced), replace=False)
    return CandidateSet(
        tuple(sorted(forced + extra.tolist())), unit, frozenset(forced), block_size if unit == "block" else 1
    )


def moba_prefill_attention(states: HeadStates, budget: BudgetSpec | int, block_size: int) -> np.ndarray:
    """Causal prefill where every query row routes to its own top-K blocks.

    Row ``t`` always keeps block 0 and its own block (causally masked); the
    remaining slots go to the highest mean-pooled blocks strictly before it.
    """
    T = states.length
    k = budget.derived_top_k if isinstance(budget, BudgetSpec) else int(budget)
    reps = moba_block_reps(states.keys, block_size)
    scores = states.queries @ reps.means.T
    out = np.empty((T, states.values.shape[1]))
    for t in range(T):
        own = t // block_size
        chosen = _top_up(scores[t, : own + 1], min(k, own + 1), forced_blocks(t, block_size), own + 1)
        rows = CandidateSet(tuple(chosen), "block", block_size=block_size).token_indices(t + 1)
        out[t] = dense_attention(states.queries[t], states.keys[rows], states.values[rows])
    return out
