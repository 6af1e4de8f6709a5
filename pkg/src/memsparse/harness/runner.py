"""Grid execution: every (backbone, method, budget, task) cell of a config.

Cells sharing a backbone and task reuse the same samples and head states, so
work is grouped by (backbone, task) and each group evaluates all of its
method x budget settings in one pass. Groups are independent; with
``workers > 1`` they run in a process pool. Finished cells are appended to the
store as soon as their group completes, and ``resume=True`` skips cells whose
fingerprint is already stored.
"""

from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from ..backbone import BackboneKind
from ..errors import BudgetError, CapacityError
from ..niah import TaskVariant, generate_split
from ..pipeline import evaluate_sample
from .config import ExperimentConfig, fingerprint
from .store import ResultStore

__all__ = ["RunResult", "cell_fingerprint", "grid_cells", "run_grid"]

_AXES = ("backbones", "methods", "budgets", "variants")


@dataclass(frozen=True)
class RunResult:
    fingerprint: str
    backbone: str
    method: str
    budget: str
    block_size: int
    top_k: int
    task: str
    accuracy: float
    per_seed_accuracy: tuple[float, ...]
    hit_rates: tuple[float, ...] | None
    seeds: tuple[int, ...]
    data_seed: int
    n_samples: int
    selector: str
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 100.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 100]")

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.budget)

    def to_record(self, *, with_time: bool = True) -> dict:
        rec = dataclasses.asdict(self)
        rec["per_seed_accuracy"] = list(self.per_seed_accuracy)
        rec["seeds"] = list(self.seeds)
        rec["hit_rates"] = None if self.hit_rates is None else list(self.hit_rates)
        if not with_time:
            rec.pop("wall_time")
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "RunResult":
        hr = rec.get("hit_rates")
        return cls(
            fingerprint=rec["fingerprint"],
            backbone=rec["backbone"],
            method=rec["method"],
            budget=str(rec["budget"]),
            block_size=int(rec["block_size"]),
            top_k=int(rec["top_k"]),
            task=rec["task"],
            accuracy=float(rec["accuracy"]),
            per_seed_accuracy=tuple(float(a) for a in rec["per_seed_accuracy"]),
            hit_rates=None if hr is None else tuple(float(h) for h in hr),
            seeds=tuple(int(s) for s in rec["seeds"]),
            data_seed=int(rec["data_seed"]),
            n_samples=int(rec["n_samples"]),
            selector=rec["selector"],
            wall_time=float(rec.get("wall_time", 0.0)),
        )


def cell_fingerprint(config: ExperimentConfig, backbone: BackboneKind, method: str, budget: Fraction, task: TaskVariant) -> str:
    """Hash of everything that determines one cell's numbers."""
    shared = {k: v for k, v in config.to_dict().items() if k not in _AXES}
    shared.update(backbone=backbone.value, method=method, budget=str(budget), task=task.value)
    # the gate only matters for the memory backbone
    if backbone is BackboneKind.STANDARD:
        shared.pop("gate")
    return fingerprint(shared)


def grid_cells(config: ExperimentConfig) -> list[tuple[BackboneKind, str, Fraction, TaskVariant]]:
    """Cells in canonical order: backbone, method, budget, task."""
    return [
        (b, m, f, v)
        for b in config.backbones
        for m in config.methods
        for f in config.budgets
        for v in config.variants
    ]


def _evaluate_group(config: ExperimentConfig, backbone: BackboneKind, variant: TaskVariant, cells: list[tuple[str, Fraction]]) -> list[RunResult]:
    start = time.perf_counter()
    label = f"backbone={backbone.value} task={variant.label}"
    try:
        samples = generate_split(
            variant,
            config.n_samples,
            config.context_len,
            config.data_seed,
            number_len=config.number_len,
            uuid_len=config.uuid_len,
        )
    except CapacityError as exc:
        raise CapacityError(f"cell {label}: {exc}") from None

    settings = [config.setting(m, f) for m, f in cells]
    gate = config.gate_params() if backbone is BackboneKind.MEMORY_AUGMENTED else None
    randomised = config.selector == "random" or any(m == "random" for m, _ in cells)
    # designed selectors ignore the seed, so one pass serves all seeds
    eval_seeds = config.seeds if randomised else config.seeds[:1]
    n_heads = config.planted.n_heads

    scores = np.zeros((len(eval_seeds), len(settings)))
    hits = np.zeros((len(settings), n_heads))
    for si, seed in enumerate(eval_seeds):
        for sample in samples:
            try:
                outcomes = evaluate_sample(sample, config.planted, backbone, settings, gate, seed=seed)
            except (BudgetError, CapacityError) as exc:
                raise type(exc)(f"cell {label}: {exc}") from None
            for i, o in enumerate(outcomes):
                scores[si, i] += o.score
                hits[i] += o.hits
    scores *= 100.0 / len(samples)
    hits /= len(samples) * len(eval_seeds)
    if not randomised:
        scores = np.repeat(scores, len(config.seeds), axis=0)

    elapsed = (time.perf_counter() - start) / max(1, len(cells))
    out = []
    for i, (method, frac) in enumerate(cells):
        per_seed = tuple(float(s) for s in scores[:, i])
        acc = float(np.mean(per_seed)) if len(set(per_seed)) > 1 else per_seed[0]
        out.append(
            RunResult(
                fingerprint=cell_fingerprint(config, backbone, method, frac, variant),
                backbone=backbone.value,
                method=method,
                budget=str(frac),
                block_size=config.block_size,
                top_k=settings[i].top_k(config.context_len),
                task=variant.label,
                accuracy=min(100.0, max(0.0, acc)),
                per_seed_accuracy=per_seed,
                hit_rates=tuple(float(h) for h in hits[i]) if config.hits_enabled(method) else None,
                seeds=tuple(config.seeds),
                data_seed=config.data_seed,
                n_samples=config.n_samples,
                selector=config.selector,
                wall_time=elapsed,
            )
        )
    return out


def run_grid(
    config: ExperimentConfig,
    *,
    workers: int = 1,
    store: str | Path | ResultStore | None = None,
    resume: bool = False,
    on_result: Callable[[RunResult], None] | None = None,
) -> list[RunResult]:
    """Evaluate every grid cell; results come back in canonical cell order.

    ``on_result`` is called once per newly computed cell after it has been
    persisted; an exception raised there aborts the run, leaving the store
    with whatever was finished (this is how interruption is simulated).
    """
    if store is not None and not isinstance(store, ResultStore):
        store = ResultStore(store)
    if store is not None and not resume:
        store.reset()

    done: dict[str, RunResult] = {}
    if store is not None and resume:
        for rec in store.load():
            r = RunResult.from_record(rec)
            done[r.fingerprint] = r

    cells = grid_cells(config)
    keys = {c: cell_fingerprint(config, *c) for c in cells}
    groups: dict[tuple[BackboneKind, TaskVariant], list[tuple[str, Fraction]]] = {}
    for b, m, f, v in cells:
        if keys[(b, m, f, v)] not in done:
            groups.setdefault((b, v), []).append((m, f))

    def collect(results: Iterable[RunResult]):
        for r in results:
            done[r.fingerprint] = r
            if store is not None:
                store.append(r.to_record())
            if on_result is not None:
                on_result(r)

    jobs = list(groups.items())
    if workers <= 1 or len(jobs) <= 1:
        for (b, v), todo in jobs:
            collect(_evaluate_group(config, b, v, todo))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_evaluate_group, config, b, v, todo) for (b, v), todo in jobs]
            try:
                for fut in futures:
                    collect(fut.result())
            except BaseException:
                for fut in futures:
                    fut.cancel()
                raise

    return [done[keys[c]] for c in cells]
