"""Sparse KV selection on memory-augmented attention, with planted NIAH tasks."""

from .analysis import STD_CONVENTION, AggregateResult, aggregate, head_hit, hit_rates, run_random_ablation, top_head_distribution
from .backbone import (
    BackboneKind,
    HeadStates,
    PlantedModelSpec,
    build_head_states,
    constant_gate_params,
    decode_queries,
    dense_attention,
    embed_tokens,
    planted_gate_params,
    zero_gate_params,
)
from .errors import BudgetError, CapacityError, ConfigError, DomainError, MemsparseError, ShapeError
from .memory import DEFAULT_GATE_CAP, AugmentedKvStates, GateParams, KvStates, apply_decaying_memory, compute_gates, unrolled_weights
from .niah import NiahSample, TaskVariant, exact_match, generate_sample, generate_split
from .pipeline import MethodSetting, evaluate_sample
from .sparse import (
    BudgetSpec,
    CandidateSet,
    moba_block_reps,
    quest_block_reps,
    quest_score,
    random_select,
    select_blocks,
    snapkv_select,
    sparse_attention,
)

__version__ = "0.1.0"
