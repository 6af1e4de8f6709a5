"""Per-head Q/K/V streams for the two backbones, and a planted retrieval head.

The planted head is a single attention head whose weights are fixed by
construction rather than training, so that retrieval succeeds or fails for
reasons that can be read off the geometry. Embedding rows have four sections:

    address  (head_dim - 17)   where a needle value token lives
    content  (16)              one-hot of the value symbol
    marker   (1)               "this is a needle value token"
    intent   (head_dim - 17)   query-side address, only on query-region keys

Keys and values are the first ``head_dim`` columns (address|content|marker).
Queries are the intent section moved into the address coordinates. A value
token of key ``k`` (ordinal ``m``, offset ``j``) carries address ``u(k, m, j)``;
the decoding query for that answer step is ``query_gain * u(k, m, j)``, so
without noise the gold token is the unique arg-max of the attention logits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import logit

from .errors import DomainError, ShapeError
from .kernels import as_matrix, as_vector, softmax_row
from .memory import (
    DEFAULT_GATE_CAP,
    AugmentedKvStates,
    GateParams,
    KvStates,
    apply_decaying_memory,
    compute_gates,
)
from .niah import FILLER_BASE, N_FILLER, N_SYMBOLS, VARIANT_ORDER, NiahSample

__all__ = [
    "BackboneKind",
    "HeadStates",
    "PlantedModelSpec",
    "build_head_states",
    "constant_gate_params",
    "decode_queries",
    "dense_attention",
    "embed_tokens",
    "planted_gate_params",
    "readout_symbol",
    "zero_gate_params",
]


class BackboneKind(str, Enum):
    STANDARD = "standard"
    MEMORY_AUGMENTED = "memory_augmented"

    @classmethod
    def parse(cls, text) -> "BackboneKind":
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).lower())
        except ValueError:
            raise DomainError(f"unknown backbone {text!r}") from None


@dataclass(frozen=True)
class PlantedModelSpec:
    head_dim: int = 48
    signal_gain: float = 8.0
    noise_scale: float = 0.5
    seed: int = 0
    query_gain: float = 24.0
    n_heads: int = 1
    head_gain_decay: float = 0.8  # head h has signal_gain * decay**h
    coherence: float = 0.3  # squared share of a needle's address common to all its tokens

    def __post_init__(self):
        if self.head_dim < N_SYMBOLS + 2:
            raise DomainError(f"head_dim must be at least {N_SYMBOLS + 2}")
        if self.signal_gain <= 0 or self.noise_scale < 0 or self.query_gain <= 0:
            raise DomainError("need signal_gain > 0, query_gain > 0, noise_scale >= 0")
        if self.n_heads < 1 or not 0 < self.head_gain_decay <= 1:
            raise DomainError("need n_heads >= 1 and head_gain_decay in (0, 1]")
        if not 0 <= self.coherence < 1:
            raise DomainError("coherence must lie in [0, 1)")

    @property
    def address_dim(self) -> int:
        return self.head_dim - N_SYMBOLS - 1

    @property
    def model_dim(self) -> int:
        return self.head_dim + self.address_dim

    @property
    def marker_col(self) -> int:
        return self.address_dim + N_SYMBOLS

    def head_gain(self, head: int) -> float:
        return self.signal_gain * self.head_gain_decay**head

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class HeadStates:
    queries: np.ndarray
    kv: KvStates
    augmented: AugmentedKvStates | None = None

    def __post_init__(self):
        if self.queries.shape[0] != self.kv.length:
            raise ShapeError("queries and kv must share a row count")
        if self.augmented is not None and self.augmented.length != self.kv.length:
            raise ShapeError("augmented states must share the kv row count")

    @property
    def kind(self) -> BackboneKind:
        return BackboneKind.STANDARD if self.augmented is None else BackboneKind.MEMORY_AUGMENTED

    @property
    def length(self) -> int:
        return self.kv.length

    @property
    def keys(self) -> np.ndarray:
        """Keys the selector and evaluator see: raw for standard, smoothed for memory."""
        return self.kv.keys if self.augmented is None else self.augmented.k_tilde

    @property
    def values(self) -> np.ndarray:
        return self.kv.values if self.augmented is None else self.augmented.v_tilde


def _unit(entropy: list[int], dim: int) -> np.ndarray:
    u = np.random.default_rng(entropy).standard_normal(dim)
    return u / np.linalg.norm(u)


@lru_cache(maxsize=65536)
def _address(spec: PlantedModelSpec, head: int, key: int, ordinal: int, offset: int) -> np.ndarray:
    """Unit address of one needle token: shared needle part plus a token part."""
    dim = spec.address_dim
    shared = _unit([spec.seed, head, key, ordinal, 0xADD], dim)
    own = _unit([spec.seed, head, key, ordinal, offset, 0xADD], dim)
    c = spec.coherence
    u = math.sqrt(c) * shared + math.sqrt(1.0 - c) * own
    u /= np.linalg.norm(u)
    u.setflags(write=False)
    return u


@lru_cache(maxsize=64)
def _filler_table(seed: int, head: int, dim: int) -> np.ndarray:
    table = np.random.default_rng([seed, head, 0xF11]).standard_normal((FILLER_BASE + N_FILLER, dim))
    table.setflags(write=False)
    return table


def _sample_rng(sample: NiahSample, spec: PlantedModelSpec, head: int) -> np.random.Generator:
    return np.random.default_rng(
        [spec.seed, head, sample.seed & (2**63 - 1), VARIANT_ORDER.index(sample.variant), 0x5EED]
    )


def embed_tokens(sample: NiahSample, spec: PlantedModelSpec, head: int = 0) -> np.ndarray:
    """Planted layer input, shape ``(T, spec.model_dim)``.

    Needle value rows get ``head_gain * unit(address, content, marker)``;
    every row gets ``noise_scale`` times a mix of a per-symbol component and
    fresh per-position noise; query-region key rows get the intent vector.
    """
    T = sample.length
    if T < 1:
        raise DomainError("cannot embed an empty sample")
    D, da = spec.model_dim, spec.address_dim
    gain = spec.head_gain(head)
    tokens = np.asarray(sample.tokens)

    X = np.zeros((T, D))
    if spec.noise_scale > 0:
        table = _filler_table(spec.seed, head, D)
        fresh = _sample_rng(sample, spec, head).standard_normal((T, D))
        X += spec.noise_scale * (0.5 * table[tokens] + math.sqrt(0.75) * fresh)

    direction = np.zeros(spec.head_dim)
    for nd in sample.needles:
        for j, (pos, sym) in enumerate(zip(nd.value_positions, nd.value)):
            direction[:] = 0.0
            direction[:da] = _address(spec, head, nd.key, nd.ordinal, j)
            direction[da + sym] = 1.0
            direction[spec.marker_col] = 1.0
            X[pos, : spec.head_dim] += gain * direction / math.sqrt(3.0)

    # query region: [QUERY_MARK, key_1, ..., key_q] at the end of the prompt
    n_q = len(sample.queries)
    for i, key in enumerate(sample.queries):
        intent = np.zeros(da)
        for nd in sample.needles:
            if nd.gold and nd.key == key:
                for j in range(len(nd.value)):
                    intent += _address(spec, head, key, nd.ordinal, j)
        norm = np.linalg.norm(intent)
        if norm > 0:
            X[T - n_q + i, spec.head_dim :] += spec.query_gain * intent / norm
    return X


def decode_queries(sample: NiahSample, spec: PlantedModelSpec, head: int = 0) -> np.ndarray:
    """One query per decoding step, aligned with ``sample.gold_positions``."""
    da = spec.address_dim
    rows = []
    for nd in sample.gold_needles():
        for j in range(len(nd.value)):
            q = np.zeros(spec.head_dim)
            q[:da] = spec.query_gain * _address(spec, head, nd.key, nd.ordinal, j)
            rows.append(q)
    return np.asarray(rows).reshape(len(rows), spec.head_dim)


def readout_symbol(output, spec: PlantedModelSpec) -> int:
    """Value symbol decoded from an attention output (arg-max of the content section)."""
    output = as_vector(output, "attention output")
    da = spec.address_dim
    return int(np.argmax(output[da : da + N_SYMBOLS]))


def build_head_states(embeddings, kind: BackboneKind | str, gate_params: GateParams | None = None) -> HeadStates:
    """Project embeddings to Q/K/V and, for the memory backbone, smooth K/V.

    ``embeddings`` has ``head_dim + address_dim`` columns as produced by
    :func:`embed_tokens`; ``head_dim`` is taken from ``gate_params`` when
    given, otherwise inferred from the layout.
    """
    X = as_matrix(embeddings, "embeddings")
    kind = BackboneKind.parse(kind)
    D = X.shape[1]
    if gate_params is not None:
        if gate_params.model_dim != D:
            raise ShapeError(f"gate weight expects {gate_params.model_dim} features, embeddings have {D}")
        d = gate_params.head_dim
    else:
        d = (D + N_SYMBOLS + 1) // 2
    da = D - d
    if da != d - N_SYMBOLS - 1:
        raise ShapeError(f"embedding width {D} does not match the planted layout for head_dim {d}")

    keys = X[:, :d]
    kv = KvStates(keys=keys, values=keys.copy())
    queries = np.zeros((X.shape[0], d))
    queries[:, :da] = X[:, d:]

    if kind is BackboneKind.STANDARD:
        return HeadStates(queries=queries, kv=kv)
    if gate_params is None:
        raise DomainError("memory_augmented backbone needs gate parameters")
    gates = compute_gates(X, gate_params)
    return HeadStates(queries=queries, kv=kv, augmented=apply_decaying_memory(kv, gates))


def dense_attention(q, keys, values) -> np.ndarray:
    """``softmax(K q / sqrt(d)) V`` over every row."""
    q = as_vector(q, "query")
    keys = as_matrix(keys, "keys")
    values = as_matrix(values, "values")
    if keys.shape[0] == 0:
        raise DomainError("attention over zero keys")
    if keys.shape[0] != values.shape[0]:
        raise ShapeError("keys and values must share a row count")
    if keys.shape[1] != q.shape[0]:
        raise ShapeError(f"query dim {q.shape[0]} != key dim {keys.shape[1]}")
    weights = softmax_row(keys @ q / math.sqrt(q.shape[0]))
    return weights @ values


def zero_gate_params(spec: PlantedModelSpec) -> GateParams:
    """Gates that underflow to exactly 0: the memory backbone becomes a passthrough."""
    return GateParams(
        weight=np.zeros((spec.model_dim, spec.head_dim)),
        bias=np.full(spec.head_dim, -1.0e4),
        gate_cap=DEFAULT_GATE_CAP,
    )


def constant_gate_params(spec: PlantedModelSpec, value: float, gate_cap: float = DEFAULT_GATE_CAP) -> GateParams:
    """Input-independent gates equal to ``min(value, gate_cap)`` everywhere."""
    if not 0.0 < value < 1.0:
        raise DomainError("constant gate must lie in (0, 1)")
    # push the bias past the cap when the target is the cap itself
    bias = 50.0 if value >= gate_cap else float(logit(value))
    return GateParams(
        weight=np.zeros((spec.model_dim, spec.head_dim)),
        bias=np.full(spec.head_dim, bias),
        gate_cap=gate_cap,
    )


def planted_gate_params(
    spec: PlantedModelSpec,
    hold_logit: float = 8.0,
    write_logit: float = -8.0,
    gate_cap: float = DEFAULT_GATE_CAP,
) -> GateParams:
    """Input-dependent gate keyed on the needle marker.

    Background rows (marker near 0) get ``sigmoid(hold_logit)`` clamped to the
    cap, so the memory holds and averages noise; a needle row (marker at
    ``signal_gain / sqrt(3)``) drives the logit to ``write_logit`` and the
    memory is overwritten with the needle.
    """
    marker_level = spec.signal_gain / math.sqrt(3.0)
    weight = np.zeros((spec.model_dim, spec.head_dim))
    weight[spec.marker_col, :] = (write_logit - hold_logit) / marker_level
    return GateParams(weight=weight, bias=np.full(spec.head_dim, hold_logit), gate_cap=gate_cap)
