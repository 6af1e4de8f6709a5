"""Report artifacts from a list of RunResults.

Written into ``out_dir``:

    table.csv          one row per (method, block, backbone, budget), task columns
    records.jsonl      one RunResult per line (re-parses with RunResult.from_record)
    plot_data.jsonl    accuracy-vs-budget series and per-head hit-rate distributions
    report_meta.json   conventions needed to read the numbers
    *.png              figures drawn from plot_data (format "figures")

Wall-clock time is left out of every artifact so that replaying a config
reproduces the report byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..analysis import STD_CONVENTION, aggregate, top_head_distribution
from ..niah import TaskVariant
from .runner import RunResult

__all__ = ["FORMATS", "TABLE_TASKS", "canonical_order", "emit_report", "plot_series", "read_records", "render_table"]

TABLE_TASKS = tuple(
    v.label
    for v in (
        TaskVariant.S1,
        TaskVariant.S2,
        TaskVariant.S3,
        TaskVariant.MK1,
        TaskVariant.MK2,
        TaskVariant.MK3,
        TaskVariant.MV,
        TaskVariant.MQ,
    )
)
TABLE_HEADER = ("Method", "Block", "Backbone", "Top-K", "Budget") + TABLE_TASKS
FORMATS = ("table", "plot_data", "figures")


def _cell(r: RunResult) -> str:
    if len(r.per_seed_accuracy) > 1:
        return aggregate(r.per_seed_accuracy).render(2)
    return f"{r.accuracy:.2f}"


def _row_order(results: Sequence[RunResult]) -> list[tuple]:
    seen = []
    for r in results:
        key = (r.method, r.block_size, r.backbone, r.top_k, r.budget)
        if key not in seen:
            seen.append(key)
    return seen


def render_table(results: Sequence[RunResult]) -> str:
    """CSV text in the Method/Block/Backbone/Top-K/Budget + task layout."""
    results = canonical_order(results)
    cells = {(r.method, r.block_size, r.backbone, r.top_k, r.budget, r.task): r for r in results}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    for key in _row_order(results):
        row = list(key)
        for task in TABLE_TASKS:
            r = cells.get(key + (task,))
            row.append("" if r is None else _cell(r))
        w.writerow(row)
    return buf.getvalue()


def plot_series(results: Sequence[RunResult]) -> list[dict]:
    """Structured series: accuracy against budget, and sorted head hit rates."""
    series = []
    curves: dict[tuple, list[tuple[Fraction, float]]] = defaultdict(list)
    for r in results:
        curves[(r.backbone, r.method, r.block_size, r.task)].append((Fraction(r.budget), r.accuracy))
    avg: dict[tuple, dict[Fraction, list[float]]] = defaultdict(lambda: defaultdict(list))
    for (b, m, B, task), pts in curves.items():
        pts.sort()
        series.append(
            {
                "kind": "accuracy_vs_budget",
                "backbone": b,
                "method": m,
                "block_size": B,
                "task": task,
                "x": [float(f) for f, _ in pts],
                "x_label": [str(f) for f, _ in pts],
                "y": [a for _, a in pts],
            }
        )
        for f, a in pts:
            avg[(b, m, B)][f].append(a)
    for (b, m, B), by_budget in avg.items():
        fr = sorted(by_budget)
        series.append(
            {
                "kind": "accuracy_vs_budget",
                "backbone": b,
                "method": m,
                "block_size": B,
                "task": "average",
                "x": [float(f) for f in fr],
                "x_label": [str(f) for f in fr],
                "y": [float(np.mean(by_budget[f])) for f in fr],
            }
        )

    # heads pooled over tasks: mean rate per head, then ranked
    pooled: dict[tuple, list[tuple[float, ...]]] = defaultdict(list)
    for r in results:
        if r.hit_rates is None:
            continue
        pooled[(r.backbone, r.method, r.block_size, r.budget)].append(r.hit_rates)
        series.append(
            {
                "kind": "hit_rate_distribution",
                "backbone": r.backbone,
                "method": r.method,
                "block_size": r.block_size,
                "budget": r.budget,
                "task": r.task,
                "rates": top_head_distribution(r.hit_rates, len(r.hit_rates)),
            }
        )
    for (b, m, B, budget), rows in pooled.items():
        rates = np.mean(np.asarray(rows), axis=0)
        series.append(
            {
                "kind": "hit_rate_distribution",
                "backbone": b,
                "method": m,
                "block_size": B,
                "budget": budget,
                "task": "pooled",
                "rates": top_head_distribution(rates, rates.size),
            }
        )
    return series


def _meta(results: Sequence[RunResult]) -> dict:
    r0 = results[0]
    return {
        "n_results": len(results),
        "accuracy_unit": "percent exact match with partial credit",
        "std_convention": STD_CONVENTION,
        "cell_format": "mean ± std over seeds, 2 decimals" if len(r0.seeds) > 1 else "accuracy, 2 decimals",
        "head_ranking": "pooled across all heads of the analysis model",
        "hit_rate_pooling": "per-head mean over samples; 'pooled' series also average over tasks",
        "seeds": list(r0.seeds),
        "data_seed": r0.data_seed,
        "n_samples": r0.n_samples,
        "selector": r0.selector,
    }


def emit_report(results: Iterable[RunResult], out_dir: str | Path, formats: Iterable[str] = FORMATS) -> list[Path]:
    """Write the requested artifacts and return their paths."""
    results = canonical_order(results)
    if not results:
        raise ValueError("nothing to report")
    formats = set(formats)
    unknown = formats - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown report format(s): {', '.join(sorted(unknown))}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name: str, text: str):
        p = out / name
        p.write_text(text, encoding="utf-8")
        written.append(p)

    if "table" in formats:
        put("table.csv", render_table(results))
        put("records.jsonl", "".join(json.dumps(r.to_record(with_time=False), sort_keys=True) + "\n" for r in results))
    series = plot_series(results)
    if "plot_data" in formats:
        put("plot_data.jsonl", "".join(json.dumps(s, sort_keys=True) + "\n" for s in series))
    put("report_meta.json", json.dumps(_meta(results), indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    if "figures" in formats:
        from .plotting import draw_figures

        written.extend(draw_figures(series, out))
    return written


def canonical_order(results: Iterable[RunResult]) -> list[RunResult]:
    """Backbone, method, budget (largest first), then task in table order."""
    backbones = ("standard", "memory_augmented")
    methods = ("quest", "moba", "snapkv", "random")

    def key(r: RunResult):
        return (
            backbones.index(r.backbone) if r.backbone in backbones else len(backbones),
            methods.index(r.method) if r.method in methods else len(methods),
            -Fraction(r.budget),
            r.block_size,
            TABLE_TASKS.index(r.task) if r.task in TABLE_TASKS else len(TABLE_TASKS),
        )

    return sorted(results, key=key)


def read_records(path: str | Path) -> list[RunResult]:
    """Results from a store or records file, last write per cell, canonical order."""
    text = Path(path).read_text(encoding="utf-8")
    latest: dict[str, RunResult] = {}
    for line in text.splitlines():
        if line.strip():
            r = RunResult.from_record(json.loads(line))
            latest[r.fingerprint] = r
    return canonical_order(latest.values())
