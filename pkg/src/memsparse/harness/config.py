"""Experiment configuration: a TOML file describing a run grid.

Every key is optional; omitted keys take the defaults below. Unknown keys are
rejected. Example::

    context_len = 4096
    n_samples = 100
    seeds = [0]
    data_seed = 0
    backbones = ["standard", "memory_augmented"]
    methods = ["quest", "moba", "snapkv"]
    budgets = ["1/4", "1/8", "1/16"]
    variants = ["S1", "S2", "S3", "MK1", "MK2", "MK3", "MV", "MQ"]
    block_size = 64
    window = 64
    # keep = 1024            # SnapKV retained entries; default fraction * context_len
    selector = "designed"    # or "random"
    random_mode = "keep_forced"   # or "uniform"
    snapkv_pooling = "sum"   # or "max"
    capture_hits = true
    capture_moba_hits = false
    number_len = 7
    uuid_len = 16

    [planted]
    head_dim = 48
    signal_gain = 8.0
    noise_scale = 0.5
    seed = 0
    query_gain = 24.0
    n_heads = 1
    head_gain_decay = 0.8
    coherence = 0.3

    [gate]
    mode = "planted"         # planted | zero | constant | explicit
    hold_logit = 8.0
    write_logit = -8.0
    gate_cap = 0.984375
    # value = 0.5            # constant mode
    # weight = [[...]]       # explicit mode, model_dim x head_dim
    # bias = [...]
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from ..backbone import (
    BackboneKind,
    PlantedModelSpec,
    constant_gate_params,
    planted_gate_params,
    zero_gate_params,
)
from ..errors import BudgetError, ConfigError, DomainError
from ..memory import DEFAULT_GATE_CAP, GateParams
from ..niah import NUMBER_LEN, UUID_LEN, VARIANT_ORDER, TaskVariant
from ..pipeline import METHODS, MethodSetting
from ..sparse import BudgetSpec, parse_fraction

__all__ = ["ALLOWED_BLOCK_SIZES", "WORKERS_ENV", "ExperimentConfig", "GateConfig", "load_config", "read_config"]

ALLOWED_BLOCK_SIZES = (16, 64, 128)
WORKERS_ENV = "MEMSPARSE_WORKERS"
GATE_MODES = ("planted", "zero", "constant", "explicit")


@dataclass(frozen=True)
class GateConfig:
    mode: str = "planted"
    hold_logit: float = 8.0
    write_logit: float = -8.0
    gate_cap: float = DEFAULT_GATE_CAP
    value: float | None = None
    weight: tuple[tuple[float, ...], ...] | None = None
    bias: tuple[float, ...] | None = None

    def build(self, spec: PlantedModelSpec) -> GateParams:
        if self.mode == "planted":
            return planted_gate_params(spec, self.hold_logit, self.write_logit, self.gate_cap)
        if self.mode == "zero":
            return zero_gate_params(spec)
        if self.mode == "constant":
            return constant_gate_params(spec, self.value, self.gate_cap)
        return GateParams(np.asarray(self.weight, dtype=float), np.asarray(self.bias, dtype=float), self.gate_cap)

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


@dataclass(frozen=True)
class ExperimentConfig:
    backbones: tuple[BackboneKind, ...] = (BackboneKind.STANDARD, BackboneKind.MEMORY_AUGMENTED)
    methods: tuple[str, ...] = ("quest", "moba", "snapkv")
    budgets: tuple[Fraction, ...] = (Fraction(1, 4), Fraction(1, 8), Fraction(1, 16))
    variants: tuple[TaskVariant, ...] = VARIANT_ORDER
    context_len: int = 4096
    n_samples: int = 100
    seeds: tuple[int, ...] = (0,)
    data_seed: int = 0
    block_size: int = 64
    window: int = 64
    keep: int | None = None
    selector: str = "designed"
    random_mode: str = "keep_forced"
    snapkv_pooling: str = "sum"
    capture_hits: bool = True
    capture_moba_hits: bool = False
    number_len: int = NUMBER_LEN
    uuid_len: int = UUID_LEN
    planted: PlantedModelSpec = field(default_factory=PlantedModelSpec)
    gate: GateConfig = field(default_factory=GateConfig)

    def __post_init__(self):
        # axis order carries no meaning: dedupe and sort so equal grids compare equal
        backbone_order = list(BackboneKind)
        object.__setattr__(self, "backbones", tuple(sorted(set(self.backbones), key=backbone_order.index)))
        object.__setattr__(
            self, "methods", tuple(sorted(set(self.methods), key=lambda m: METHODS.index(m) if m in METHODS else len(METHODS)))
        )
        object.__setattr__(self, "budgets", tuple(sorted(set(self.budgets), reverse=True)))
        object.__setattr__(self, "variants", tuple(sorted(set(self.variants), key=VARIANT_ORDER.index)))
        self.validate()

    # ---- validation -------------------------------------------------------

    def validate(self) -> None:
        def fail(msg):
            raise ConfigError(msg)

        if self.n_samples < 1:
            fail("n_samples must be >= 1")
        if not self.seeds:
            fail("seeds must be a non-empty list")
        if self.context_len < 2:
            fail("context_len must be >= 2")
        if not (self.backbones and self.methods and self.budgets and self.variants):
            fail("backbones, methods, budgets and variants must be non-empty")
        for m in self.methods:
            if m not in METHODS:
                fail(f"unknown method {m!r}; expected one of {', '.join(METHODS)}")
        if self.selector not in ("designed", "random"):
            fail("selector must be 'designed' or 'random'")
        if self.random_mode not in ("keep_forced", "uniform"):
            fail("random_mode must be 'keep_forced' or 'uniform'")
        if self.snapkv_pooling not in ("sum", "max"):
            fail("snapkv_pooling must be 'sum' or 'max'")
        if self.block_size not in ALLOWED_BLOCK_SIZES:
            fail(f"block_size must be one of {ALLOWED_BLOCK_SIZES}, got {self.block_size}")
        if not 1 <= self.window <= self.context_len:
            fail(f"window must lie in 1..context_len, got {self.window}")
        if self.gate.mode not in GATE_MODES:
            fail(f"gate.mode must be one of {GATE_MODES}")
        if self.gate.mode == "constant" and self.gate.value is None:
            fail("gate.mode = 'constant' needs gate.value")
        if self.gate.mode == "explicit" and (self.gate.weight is None or self.gate.bias is None):
            fail("gate.mode = 'explicit' needs gate.weight and gate.bias")
        try:
            self.gate.build(self.planted)
        except (DomainError, ValueError) as exc:
            fail(f"gate parameters invalid: {exc}")

        for frac in self.budgets:
            for method in self.methods:
                setting = self.setting(method, frac)
                if setting.unit == "block":
                    k = setting.top_k(self.context_len)
                    n_blocks = BudgetSpec.blocks(frac, self.context_len, self.block_size).candidate_count
                    n_forced = 1 if n_blocks == 1 else 2
                    if self.selector == "random" and self.random_mode == "uniform":
                        n_forced = 0
                    if k < n_forced:
                        fail(
                            f"{method} budget {frac} gives top-K {k} blocks, fewer than the "
                            f"{n_forced} forced blocks (context_len {self.context_len}, block_size {self.block_size})"
                        )
                elif method == "snapkv":
                    keep = setting.keep_for(self.context_len)
                    if keep < self.window:
                        fail(f"snapkv keep {keep} < window {self.window} at budget {frac}: window must fit in the cache")
                    if keep > self.context_len:
                        fail(f"snapkv keep {keep} exceeds context_len {self.context_len}")

    # ---- derived views ----------------------------------------------------

    def setting(self, method: str, fraction: Fraction) -> MethodSetting:
        return MethodSetting(
            method=method,
            fraction=fraction,
            block_size=self.block_size,
            window=self.window,
            keep=self.keep,
            selector=self.selector,
            random_mode=self.random_mode,
            pooling=self.snapkv_pooling,
        )

    def gate_params(self) -> GateParams:
        return self.gate.build(self.planted)

    def hits_enabled(self, method: str) -> bool:
        if not self.capture_hits:
            return False
        return method != "moba" or self.capture_moba_hits

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **_coerce(changes))

    def to_dict(self) -> dict:
        return {
            "backbones": [b.value for b in self.backbones],
            "methods": list(self.methods),
            "budgets": [str(f) for f in self.budgets],
            "variants": [v.value for v in self.variants],
            "context_len": self.context_len,
            "n_samples": self.n_samples,
            "seeds": list(self.seeds),
            "data_seed": self.data_seed,
            "block_size": self.block_size,
            "window": self.window,
            "keep": self.keep,
            "selector": self.selector,
            "random_mode": self.random_mode,
            "snapkv_pooling": self.snapkv_pooling,
            "capture_hits": self.capture_hits,
            "capture_moba_hits": self.capture_moba_hits,
            "number_len": self.number_len,
            "uuid_len": self.uuid_len,
            "planted": self.planted.to_dict(),
            "gate": self.gate.to_dict(),
        }

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


def fingerprint(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


_TOP_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"planted", "gate"}
_PLANTED_KEYS = {f.name for f in dataclasses.fields(PlantedModelSpec)}
_GATE_KEYS = {f.name for f in dataclasses.fields(GateConfig)}


def _coerce(raw: dict) -> dict:
    """Turn TOML-level values into the dataclass field types."""
    out = dict(raw)
    try:
        if "backbones" in out:
            out["backbones"] = tuple(BackboneKind.parse(b) for b in out["backbones"])
        if "methods" in out:
            out["methods"] = tuple(str(m).lower() for m in out["methods"])
        if "budgets" in out:
            out["budgets"] = tuple(parse_fraction(b) for b in out["budgets"])
        if "variants" in out:
            out["variants"] = tuple(TaskVariant.parse(v) for v in out["variants"])
        if "seeds" in out:
            out["seeds"] = tuple(int(s) for s in out["seeds"])
    except (DomainError, BudgetError) as exc:
        raise ConfigError(str(exc)) from None
    for name in ("context_len", "n_samples", "data_seed", "block_size", "window", "number_len", "uuid_len"):
        if name in out:
            if isinstance(out[name], bool) or not isinstance(out[name], (int, np.integer)):
                raise ConfigError(f"{name} must be an integer")
            out[name] = int(out[name])
    return out


def _build(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - _TOP_KEYS - {"planted", "gate"}
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    kwargs = _coerce({k: v for k, v in raw.items() if k in _TOP_KEYS})

    planted = raw.get("planted", {})
    if not isinstance(planted, dict):
        raise ConfigError("[planted] must be a table")
    bad = set(planted) - _PLANTED_KEYS
    if bad:
        raise ConfigError(f"unknown [planted] key(s): {', '.join(sorted(bad))}")
    try:
        kwargs["planted"] = PlantedModelSpec(**planted)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"[planted]: {exc}") from None

    gate = raw.get("gate", {})
    if not isinstance(gate, dict):
        raise ConfigError("[gate] must be a table")
    bad = set(gate) - _GATE_KEYS
    if bad:
        raise ConfigError(f"unknown [gate] key(s): {', '.join(sorted(bad))}")
    gate = dict(gate)
    if "weight" in gate:
        gate["weight"] = tuple(tuple(float(x) for x in row) for row in gate["weight"])
    if "bias" in gate:
        gate["bias"] = tuple(float(x) for x in gate["bias"])
    kwargs["gate"] = GateConfig(**gate)
    return ExperimentConfig(**kwargs)


def load_config(text: str) -> ExperimentConfig:
    """Parse and validate TOML config text."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        where = f"line {m.group(1)}: " if m else ""
        raise ConfigError(f"config parse error at {where}{exc}") from None
    return _build(raw)


def read_config(path: str | os.PathLike | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return load_config(Path(path).read_text(encoding="utf-8"))


def resolve_workers(cli_value: int | None) -> int:
    """CLI flag wins, then the environment variable, then 1."""
    if cli_value is not None:
        return max(1, int(cli_value))
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return 1
