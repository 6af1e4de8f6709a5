"""Exponentially decaying KV memory.

Each channel of the key and value streams is smoothed by an input-gated
recurrence,

    v~_t = g_t * v~_{t-1} + (1 - g_t) * v_t        (same for k~)

with v~_0 = k~_0 = 0. Gates come from a sigmoid of a linear projection of the
layer input, clamped above at ``gate_cap``; the default cap ``1 - 1/64``
bounds the memory's time constant at 64 steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DomainError, ShapeError
from .kernels import as_matrix, as_vector

__all__ = [
    "DEFAULT_GATE_CAP",
    "AugmentedKvStates",
    "GateParams",
    "KvStates",
    "apply_decaying_memory",
    "compute_gates",
    "reconstruct_from_weights",
    "unrolled_weights",
]

DEFAULT_GATE_CAP = 1.0 - 1.0 / 64.0


@dataclass(frozen=True)
class KvStates:
    """Raw per-head keys and values, both ``(T, head_dim)``."""

    keys: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        keys = as_matrix(self.keys, "keys")
        values = as_matrix(self.values, "values")
        if keys.shape[0] != values.shape[0]:
            raise ShapeError(f"keys have {keys.shape[0]} rows, values have {values.shape[0]}")
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)

    @property
    def length(self) -> int:
        return self.keys.shape[0]


@dataclass(frozen=True)
class AugmentedKvStates:
    """Memory-smoothed keys/values plus the gates that produced them."""

    k_tilde: np.ndarray
    v_tilde: np.ndarray
    gates: np.ndarray

    def __post_init__(self):
        rows = {self.k_tilde.shape[0], self.v_tilde.shape[0], self.gates.shape[0]}
        if len(rows) != 1:
            raise ShapeError("k_tilde, v_tilde and gates must share a row count")

    @property
    def length(self) -> int:
        return self.k_tilde.shape[0]


@dataclass(frozen=True)
class GateParams:
    """Gate projection: ``weight`` is (model_dim, head_dim), ``bias`` is (head_dim,)."""

    weight: np.ndarray
    bias: np.ndarray
    gate_cap: float = DEFAULT_GATE_CAP

    def __post_init__(self):
        weight = as_matrix(self.weight, "gate weight")
        bias = as_vector(self.bias, "gate bias")
        if weight.shape[1] != bias.shape[0]:
            raise ShapeError(f"gate weight has {weight.shape[1]} cols, bias has dim {bias.shape[0]}")
        if not 0.0 < self.gate_cap < 1.0:
            raise DomainError(f"gate_cap must lie in (0, 1), got {self.gate_cap}")
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def model_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def head_dim(self) -> int:
        return self.weight.shape[1]

    def to_dict(self) -> dict:
        return {
            "weight": self.weight.tolist(),
            "bias": self.bias.tolist(),
            "gate_cap": float(self.gate_cap),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GateParams":
        return cls(
            weight=np.asarray(data["weight"], dtype=np.float64),
            bias=np.asarray(data["bias"], dtype=np.float64),
            gate_cap=float(data.get("gate_cap", DEFAULT_GATE_CAP)),
        )


def compute_gates(inputs, params: GateParams) -> np.ndarray:
    """``min(sigmoid(inputs @ weight + bias), gate_cap)`` elementwise, shape (T, head_dim)."""
    inputs = as_matrix(inputs, "inputs")
    if inputs.shape[1] != params.model_dim:
        raise ShapeError(
            f"inputs have {inputs.shape[1]} features, gate weight expects {params.model_dim}"
        )
    return np.minimum(expit(inputs @ params.weight + params.bias), params.gate_cap)


def apply_decaying_memory(kv: KvStates, gates) -> AugmentedKvStates:
    """Run the gated recurrence over keys and values, channel by channel.

    Row ``t`` of the output depends only on rows ``<= t`` of the input.
    Gates are accepted anywhere in [0, 1] so tests can probe the uncapped
    limits; :func:`compute_gates` is what enforces the cap in practice.
    """
    gates = as_matrix(gates, "gates")
    if gates.shape[0] != kv.length:
        raise ShapeError(f"gates have {gates.shape[0]} rows, kv has {kv.length}")
    d = kv.keys.shape[1]
    if gates.shape[1] != d or kv.values.shape[1] != d:
        raise ShapeError(
            f"gates ({gates.shape[1]}), keys ({d}) and values ({kv.values.shape[1]}) must share head_dim"
        )
    if np.any(gates < 0.0) or np.any(gates > 1.0):
        raise DomainError("gates must lie in [0, 1]")

    # keys and values share the gate, so run them as one 2d-channel stream
    x = np.concatenate([kv.keys, kv.values], axis=1)
    g = np.concatenate([gates, gates], axis=1)
    inject = (1.0 - g) * x
    out = np.empty_like(x)
    state = np.zeros(x.shape[1])
    for t in range(x.shape[0]):
        state = g[t] * state + inject[t]
        out[t] = state
    return AugmentedKvStates(k_tilde=out[:, :d], v_tilde=out[:, d:], gates=gates)


def unrolled_weights(gates, t: int, channel: int | None = None) -> np.ndarray:
    """Closed-form contribution of inputs 1..t to the memory at step ``t`` (1-based).

    ``w[s-1] = (1 - g_s) * prod_{r=s+1..t} g_r``. Used as an independent oracle
    for :func:`apply_decaying_memory`. With ``channel=None`` the result has
    shape ``(t, head_dim)``, one column per channel.
    """
    gates = as_matrix(gates, "gates")
    T = gates.shape[0]
    if not 1 <= t <= T:
        raise IndexError(f"step t={t} outside 1..{T}")
    if channel is not None and not 0 <= channel < gates.shape[1]:
        raise IndexError(f"channel {channel} outside 0..{gates.shape[1] - 1}")
    g = gates[:t] if channel is None else gates[:t, channel : channel + 1]
    # suffix[s] = prod of g over rows s+1..t-1 (0-based), empty product = 1
    suffix = np.ones_like(g)
    if t > 1:
        suffix[:-1] = np.cumprod(g[:0:-1], axis=0)[::-1]
    weights = (1.0 - g) * suffix
    return weights if channel is None else weights[:, 0]


def reconstruct_from_weights(gates, inputs, t: int, channel: int | None = None):
    """Memory value at step ``t`` rebuilt as the weighted sum of raw inputs.

    Returns a float for one channel, or a ``(head_dim,)`` vector when
    ``channel`` is None.
    """
    inputs = as_matrix(inputs, "inputs")
    w = unrolled_weights(gates, t, channel)
    if channel is None:
        return (w * inputs[:t]).sum(axis=0)
    return float(np.dot(w, inputs[:t, channel]))
