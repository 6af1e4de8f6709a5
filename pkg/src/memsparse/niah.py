"""Symbolic needle-in-a-haystack tasks in eight variants.

A sample is a sequence of integer symbol ids. Needles are ``[key, v_1 .. v_n]``
spans dropped into a filler background; the prompt ends with a query region
``[QUERY_MARK, key, ...]`` naming the key(s) whose values must be produced.
Values are drawn from a 16-symbol alphabet: numbers use the ten digit
symbols, UUID-like values use all sixteen and are longer.

Variants:

    S1   one number, i.i.d. noise background
    S2   one number, structured ("natural-like") filler background
    S3   one UUID-like value among UUID-like distractor needles
    MK1  one queried number among a few distractor key/value pairs
    MK2  more distractor pairs than MK1
    MK3  most distractor pairs, UUID-like values
    MQ   several queried keys, one number each
    MV   one key carrying several numbers
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import CapacityError, DomainError

__all__ = [
    "FILLER_BASE",
    "KEY_BASE",
    "N_SYMBOLS",
    "QUERY_MARK",
    "Needle",
    "NiahSample",
    "TaskVariant",
    "ValueKind",
    "derive_seeds",
    "distractor_count",
    "exact_match",
    "generate_sample",
    "generate_split",
    "read_samples",
    "write_samples",
]

N_SYMBOLS = 16
N_DIGITS = 10
QUERY_MARK = 16
KEY_BASE = 64
N_KEYS = 4096
FILLER_BASE = KEY_BASE + N_KEYS
N_FILLER = 512

NUMBER_LEN = 7
UUID_LEN = 16

# largest share of the haystack that needles may occupy
MAX_NEEDLE_SHARE = 0.6


class TaskVariant(str, Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    MK1 = "MK1"
    MK2 = "MK2"
    MK3 = "MK3"
    MQ = "MQ"
    MV = "MV"

    @property
    def label(self) -> str:
        """Column label used in report tables (``MK-1`` style)."""
        name = self.value
        return f"{name[:-1]}-{name[-1]}" if name[-1].isdigit() else name

    @classmethod
    def parse(cls, text: str) -> "TaskVariant":
        key = str(text).upper().replace("-", "").replace("_", "")
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"unknown task variant {text!r}") from None


VARIANT_ORDER = tuple(TaskVariant)


class ValueKind(str, Enum):
    NUMBER = "number"
    UUID_LIKE = "uuid_like"


@dataclass(frozen=True)
class Needle:
    key: int
    value: tuple[int, ...]
    position: int  # index of the key token; value tokens follow it
    gold: bool = False
    ordinal: int = 0  # rank among needles sharing this key (MV)

    @property
    def value_positions(self) -> tuple[int, ...]:
        return tuple(range(self.position + 1, self.position + 1 + len(self.value)))

    @property
    def span(self) -> tuple[int, int]:
        return self.position, self.position + 1 + len(self.value)


@dataclass(frozen=True)
class NiahSample:
    variant: TaskVariant
    seed: int
    context_len: int
    tokens: tuple[int, ...]
    needles: tuple[Needle, ...]
    queries: tuple[int, ...]
    gold_answers: tuple[tuple[int, ...], ...]
    gold_positions: tuple[int, ...]  # one entry per decoding step, answers concatenated
    value_kind: ValueKind = ValueKind.NUMBER

    @property
    def length(self) -> int:
        return len(self.tokens)

    @property
    def n_steps(self) -> int:
        return len(self.gold_positions)

    def gold_needles(self) -> tuple[Needle, ...]:
        """Gold needles in answer order."""
        by_key: dict[int, list[Needle]] = {}
        for nd in self.needles:
            if nd.gold:
                by_key.setdefault(nd.key, []).append(nd)
        out = []
        for key in self.queries:
            out.extend(sorted(by_key.get(key, []), key=lambda nd: nd.ordinal))
        return tuple(out)

    def to_record(self) -> dict:
        return {
            "variant": self.variant.value,
            "seed": int(self.seed),
            "context_len": self.context_len,
            "value_kind": self.value_kind.value,
            "tokens": list(self.tokens),
            "needles": [
                {
                    "key": nd.key,
                    "value": list(nd.value),
                    "position": nd.position,
                    "gold": nd.gold,
                    "ordinal": nd.ordinal,
                }
                for nd in self.needles
            ],
            "queries": list(self.queries),
            "golds": [list(a) for a in self.gold_answers],
            "gold_positions": list(self.gold_positions),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "NiahSample":
        return cls(
            variant=TaskVariant(rec["variant"]),
            seed=int(rec["seed"]),
            context_len=int(rec["context_len"]),
            tokens=tuple(rec["tokens"]),
            needles=tuple(
                Needle(
                    key=n["key"],
                    value=tuple(n["value"]),
                    position=n["position"],
                    gold=n["gold"],
                    ordinal=n.get("ordinal", 0),
                )
                for n in rec["needles"]
            ),
            queries=tuple(rec["queries"]),
            gold_answers=tuple(tuple(a) for a in rec["golds"]),
            gold_positions=tuple(rec["gold_positions"]),
            value_kind=ValueKind(rec.get("value_kind", "number")),
        )

    def digest(self) -> str:
        payload = json.dumps(self.to_record(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def distractor_count(variant: TaskVariant, context_len: int) -> int:
    """Number of non-queried key/value pairs for a variant at a context size."""
    return {
        TaskVariant.S1: 0,
        TaskVariant.S2: 0,
        TaskVariant.S3: 4,
        TaskVariant.MK1: 3,
        TaskVariant.MK2: max(8, context_len // 64),
        TaskVariant.MK3: max(12, context_len // 40),
        TaskVariant.MQ: 0,
        TaskVariant.MV: 0,
    }[variant]


_N_QUERIES = {TaskVariant.MQ: 4}
_N_VALUES = {TaskVariant.MV: 4}
_UUID_VARIANTS = {TaskVariant.S3, TaskVariant.MK3}


def _background(kind: str, length: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "noise":
        return FILLER_BASE + rng.integers(0, N_FILLER, size=length)
    # structured filler: a small repertoire of "sentences" reused throughout,
    # so neighbouring symbols are strongly correlated
    sentences = [
        FILLER_BASE + rng.integers(0, N_FILLER, size=int(rng.integers(6, 17)))
        for _ in range(12)
    ]
    out: list[int] = []
    while len(out) < length:
        out.extend(sentences[int(rng.integers(len(sentences)))].tolist())
    return np.asarray(out[:length], dtype=np.int64)


def _draw_value(kind: ValueKind, rng: np.random.Generator, number_len: int, uuid_len: int) -> tuple[int, ...]:
    if kind is ValueKind.NUMBER:
        return tuple(int(x) for x in rng.integers(0, N_DIGITS, size=number_len))
    return tuple(int(x) for x in rng.integers(0, N_SYMBOLS, size=uuid_len))


def _place(spans: list[int], haystack_len: int, rng: np.random.Generator, align_block: int | None) -> list[int]:
    """Choose non-overlapping start offsets for spans of the given lengths."""
    free = np.ones(haystack_len, dtype=bool)
    starts = []
    for length in spans:
        # a start s is valid if free[s:s+length] is all True
        blocked = np.concatenate([[0], np.cumsum(~free)])
        n_pos = haystack_len - length + 1
        if n_pos <= 0:
            raise CapacityError(f"needle of length {length} does not fit in {haystack_len} tokens")
        s = np.arange(n_pos)
        ok = (blocked[s + length] - blocked[s]) == 0
        if align_block:
            ok &= (s % align_block != 0) & (s // align_block == (s + length - 1) // align_block)
        candidates = np.flatnonzero(ok)
        if candidates.size == 0:
            raise CapacityError("no room left to place a needle")
        start = int(candidates[rng.integers(candidates.size)])
        free[start : start + length] = False
        starts.append(start)
    return starts


def generate_sample(
    variant: TaskVariant | str,
    context_len: int,
    seed: int,
    *,
    number_len: int = NUMBER_LEN,
    uuid_len: int = UUID_LEN,
    align_block: int | None = None,
) -> NiahSample:
    """Build one sample of ``variant`` with exactly ``context_len`` tokens.

    ``align_block`` keeps every needle inside a single block of that size and
    away from the block's first slot.
    """
    variant = TaskVariant.parse(variant) if not isinstance(variant, TaskVariant) else variant
    if number_len < 1 or uuid_len < 1:
        raise DomainError("value lengths must be positive")
    rng = np.random.default_rng([int(seed) & (2**63 - 1), VARIANT_ORDER.index(variant)])

    kind = ValueKind.UUID_LIKE if variant in _UUID_VARIANTS else ValueKind.NUMBER
    n_queries = _N_QUERIES.get(variant, 1)
    n_values = _N_VALUES.get(variant, 1)
    n_distract = distractor_count(variant, context_len)

    keys = (KEY_BASE + rng.choice(N_KEYS, size=n_queries + n_distract, replace=False)).tolist()
    query_keys, distract_keys = keys[:n_queries], keys[n_queries:]

    needles_spec: list[tuple[int, tuple[int, ...], bool, int]] = []
    seen_values: set[tuple[int, ...]] = set()
    for key in query_keys:
        for ordinal in range(n_values):
            value = _draw_value(kind, rng, number_len, uuid_len)
            while value in seen_values:
                value = _draw_value(kind, rng, number_len, uuid_len)
            seen_values.add(value)
            needles_spec.append((key, value, True, ordinal))
    for key in distract_keys:
        needles_spec.append((key, _draw_value(kind, rng, number_len, uuid_len), False, 0))

    query_region = [QUERY_MARK, *query_keys]
    haystack_len = context_len - len(query_region)
    needle_tokens = sum(1 + len(v) for _, v, _, _ in needles_spec)
    if haystack_len <= 0 or needle_tokens > MAX_NEEDLE_SHARE * haystack_len:
        raise CapacityError(
            f"{variant.value}: {needle_tokens} needle tokens do not fit a {context_len}-token context"
        )

    background = "noise" if variant is TaskVariant.S1 else "text"
    tokens = _background(background, haystack_len, rng)
    order = rng.permutation(len(needles_spec))
    starts = _place([1 + len(needles_spec[i][1]) for i in order], haystack_len, rng, align_block)

    needles = []
    for i, start in zip(order, starts):
        key, value, gold, ordinal = needles_spec[i]
        tokens[start] = key
        tokens[start + 1 : start + 1 + len(value)] = value
        needles.append(Needle(key=key, value=value, position=start, gold=gold, ordinal=ordinal))
    needles.sort(key=lambda nd: nd.position)

    # MV answers come in context order, so relabel ordinals by position
    if n_values > 1:
        relabelled = []
        counters: dict[int, int] = {}
        for nd in needles:
            if nd.gold:
                k = counters.get(nd.key, 0)
                counters[nd.key] = k + 1
                nd = Needle(nd.key, nd.value, nd.position, True, k)
            relabelled.append(nd)
        needles = relabelled

    all_tokens = tuple(int(t) for t in tokens) + tuple(query_region)
    sample = NiahSample(
        variant=variant,
        seed=int(seed),
        context_len=context_len,
        tokens=all_tokens,
        needles=tuple(needles),
        queries=tuple(query_keys),
        gold_answers=(),
        gold_positions=(),
        value_kind=kind,
    )
    golds = sample.gold_needles()
    return NiahSample(
        **{
            **sample.__dict__,
            "gold_answers": tuple(nd.value for nd in golds),
            "gold_positions": tuple(p for nd in golds for p in nd.value_positions),
        }
    )


def derive_seeds(master_seed: int, n: int) -> list[int]:
    """``n`` distinct 63-bit sample seeds derived from a master seed."""
    ss = np.random.SeedSequence(int(master_seed))
    state = ss.generate_state(2 * n + 8, dtype=np.uint64)
    out: list[int] = []
    seen: set[int] = set()
    for word in state:
        s = int(word) >> 1
        if s not in seen:
            seen.add(s)
            out.append(s)
        if len(out) == n:
            return out
    raise RuntimeError("seed derivation produced too many collisions")  # pragma: no cover


def generate_split(variant: TaskVariant | str, n: int, context_len: int, seed: int, **kwargs) -> list[NiahSample]:
    """``n`` samples whose seeds are derived from the master ``seed``."""
    if n < 1:
        raise DomainError("a split needs at least one sample")
    return [generate_sample(variant, context_len, s, **kwargs) for s in derive_seeds(seed, n)]


def exact_match(prediction, gold) -> float:
    """Fraction of gold value sequences that appear verbatim in ``prediction``."""
    gold = [tuple(g) for g in gold]
    if not gold:
        raise DomainError("exact_match needs at least one gold answer")
    predicted = {tuple(p) for p in prediction or ()}
    return sum(g in predicted for g in gold) / len(gold)


def write_samples(path, samples) -> None:
    """One JSON record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_record(), separators=(",", ":")) + "\n")


def read_samples(path) -> list[NiahSample]:
    with open(path, encoding="utf-8") as fh:
        return [NiahSample.from_record(json.loads(line)) for line in fh if line.strip()]
