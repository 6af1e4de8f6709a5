"""Command line entry point: ``memsparse <verb> ...``.

Verbs: generate, run, analyze, report, validate.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .analysis import run_random_ablation
from .errors import MemsparseError
from .harness.config import read_config, resolve_workers
from .harness.report import FORMATS, TABLE_TASKS, emit_report, read_records, render_table
from .harness.runner import run_grid
from .niah import TaskVariant, generate_split, write_samples


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.replace(" ", "").split(",") if s]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _common(p: argparse.ArgumentParser, *, out_default: str | None = "results") -> None:
    p.add_argument("--config", type=Path, help="TOML experiment config (defaults when omitted)")
    p.add_argument("--seeds", type=_seeds, help="comma-separated selector seeds, e.g. 0,1,2,3,4")
    p.add_argument("--workers", type=int, help="parallel worker processes (env MEMSPARSE_WORKERS)")
    p.add_argument("--out", type=Path, default=Path(out_default) if out_default else None, help="output directory")


def _load(args):
    cfg = read_config(args.config)
    if getattr(args, "seeds", None):
        cfg = cfg.replace(seeds=args.seeds)
    return cfg


def cmd_validate(args) -> int:
    cfg = _load(args)
    n = len(cfg.backbones) * len(cfg.methods) * len(cfg.budgets) * len(cfg.variants)
    print(f"ok: {n} cells, fingerprint {cfg.fingerprint()}")
    return 0


def cmd_generate(args) -> int:
    cfg = _load(args)
    variants = [TaskVariant.parse(v) for v in args.variants.split(",")] if args.variants else list(cfg.variants)
    n = args.n or cfg.n_samples
    args.out.mkdir(parents=True, exist_ok=True)
    for v in variants:
        samples = generate_split(
            v, n, cfg.context_len, cfg.data_seed, number_len=cfg.number_len, uuid_len=cfg.uuid_len
        )
        path = args.out / f"{v.value.lower()}.jsonl"
        write_samples(path, samples)
        print(f"{v.label}\t{len(samples)}\t{path}")
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    workers = resolve_workers(args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    results = run_grid(cfg, workers=workers, store=args.out / "results.jsonl", resume=args.resume)
    emit_report(results, args.out, args.formats.split(",") if args.formats else FORMATS)
    sys.stdout.write(render_table(results))
    return 0


def cmd_analyze(args) -> int:
    cfg = _load(args)
    workers = resolve_workers(args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    w = csv.writer(sys.stdout, lineterminator="\n")
    if args.what == "hits":
        cfg = cfg.replace(capture_hits=True, capture_moba_hits=args.include_moba)
        results = run_grid(cfg, workers=workers)
        emit_report(results, args.out, ("plot_data", "figures"))
        w.writerow(["Backbone", "Method", "Budget", "Task", "TopHeadRates"])
        for r in results:
            if r.hit_rates is not None:
                rates = sorted(r.hit_rates, reverse=True)[: args.top]
                w.writerow([r.backbone, r.method, r.budget, r.task, " ".join(f"{x:.4f}" for x in rates)])
        return 0

    seeds = args.seeds or [0, 1, 2, 3, 4]
    modes = ("keep_forced", "uniform") if args.random_mode == "both" else (args.random_mode,)
    header = ["Mode", "Method", "Backbone", "Budget", *TABLE_TASKS]
    lines, records = [header], []
    for mode in modes:
        table = run_random_ablation(cfg.replace(random_mode=mode), seeds, workers=workers)
        rows = {}
        for (backbone, method, budget, task), agg in table.items():
            rows.setdefault((method, backbone, budget), {})[task] = agg
            records.append({"mode": mode, "backbone": backbone, "method": method, "budget": budget, "task": task, **agg.to_dict()})
        for key, by_task in rows.items():
            lines.append([mode, *key, *[by_task[t].render(2) if t in by_task else "" for t in TABLE_TASKS]])
    with (args.out / "random_ablation.csv").open("w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(lines)
    (args.out / "random_ablation.jsonl").write_text(
        "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records), encoding="utf-8"
    )
    w.writerows(lines)
    return 0


def cmd_report(args) -> int:
    results = read_records(args.results)
    emit_report(results, args.out, args.formats.split(",") if args.formats else FORMATS)
    sys.stdout.write(render_table(results))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memsparse", description="Sparse KV selection experiments on planted NIAH tasks.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", help="check a config and print its fingerprint")
    _common(p, out_default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("generate", help="write NIAH task splits as JSONL")
    _common(p, out_default="data")
    p.add_argument("--variants", help="comma-separated variants (default: config variants)")
    p.add_argument("--n", type=int, help="samples per variant (default: config n_samples)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run the grid, persist results and emit the report")
    _common(p)
    p.add_argument("--resume", action="store_true", help="skip cells already in OUT/results.jsonl")
    p.add_argument("--formats", help=f"comma-separated subset of {','.join(FORMATS)}")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="head hit rates or the random-selector ablation")
    p.add_argument("what", choices=("hits", "random"))
    _common(p, out_default="analysis")
    p.add_argument("--top", type=int, default=50, help="heads listed per cell for 'hits'")
    p.add_argument("--include-moba", action="store_true", help="also capture MoBA hits")
    p.add_argument(
        "--random-mode",
        choices=("keep_forced", "uniform", "both"),
        default="both",
        help="whether random draws keep the first/local blocks and the SnapKV window",
    )
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="re-emit report artifacts from a results file")
    p.add_argument("--results", type=Path, required=True, help="results.jsonl or records.jsonl")
    p.add_argument("--out", type=Path, default=Path("report"))
    p.add_argument("--formats", help=f"comma-separated subset of {','.join(FORMATS)}")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MemsparseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
