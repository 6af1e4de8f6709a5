import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from memsparse.analysis import (
    STD_CONVENTION,
    AggregateResult,
    HitRecord,
    aggregate,
    covers,
    head_hit,
    hit_rates,
    run_random_ablation,
    top_head_distribution,
)
from memsparse.backbone import PlantedModelSpec, build_head_states, dense_attention, decode_queries, embed_tokens, readout_symbol
from memsparse.errors import ConfigError, ShapeError
from memsparse.harness.config import load_config
from memsparse.niah import exact_match, generate_split
from memsparse.sparse import CandidateSet
from oracles import sort_topk


def tok(*idx):
    return CandidateSet(tuple(idx), "token")


def blk(*idx, B=64):
    return CandidateSet(tuple(idx), "block", block_size=B)


def test_covers_token():
    assert covers(tok(5), 5)


def test_covers_block_interior():
    assert covers(blk(0, 1), 100, 64)


def test_covers_block_boundary():
    assert not covers(blk(0), 64, 64)


def test_hit_all_steps():
    assert head_hit([tok(1, 2), tok(2, 3)], [1, 3]) == 1


def test_hit_one_miss_in_ten():
    sels = [tok(i) for i in range(10)]
    gold = list(range(10))
    gold[6] = 99
    assert head_hit(sels, gold) == 0


def test_hit_fixed_selection_any_steps():
    kept = tok(3, 10, 40)
    for n in (1, 5, 50):
        assert head_hit([kept] * n, [10] * n) == 1
        assert head_hit([kept] * 3 * n, [3, 10, 40] * n) == 1
        assert head_hit([kept] * n, [10] * (n - 1) + [11]) == 0


def test_hit_length_mismatch():
    with pytest.raises(ShapeError):
        head_hit([tok(1)], [1, 2])


def test_hit_record():
    assert HitRecord(0, (blk(0, 2),), (130,), 64).hit == 1


def test_hit_rates_per_head():
    assert hit_rates([[1, 0], [1, 1], [0, 0], [1, 0]]).tolist() == [0.75, 0.25]


def test_top_heads_all_perfect():
    assert top_head_distribution([1.0, 1.0, 1.0], 3) == [1.0, 1.0, 1.0]


def test_top_heads_full_sort_oracle():
    rng = np.random.default_rng(0)
    rates = hit_rates(rng.integers(0, 2, (40, 30)))
    expected = sorted(rates.tolist(), reverse=True)
    assert top_head_distribution(rates, 30) == expected
    assert top_head_distribution(rates, 10) == expected[:10]
    assert set(np.argsort(-rates, kind="stable")[:10].tolist()) == set(sort_topk(rates.tolist(), 10))


def test_top_heads_drop_nan():
    assert top_head_distribution([0.5, float("nan"), 0.9], 2) == [0.9, 0.5]
    with pytest.raises(ShapeError):
        top_head_distribution([0.5, float("nan")], 2)


def test_aggregate_identical():
    a = aggregate([84.9] * 5)
    assert a.std == 0.0 and a.mean == 84.9


def test_aggregate_population_std():
    a = aggregate([1.0, 2.0, 3.0, 4.0])
    assert STD_CONVENTION == "population"
    assert a.mean == 2.5 and a.std == pytest.approx(np.std([1, 2, 3, 4]), abs=1e-15)


def test_render_format():
    assert AggregateResult(84.92, 0.7345, 5, (1, 2, 3, 4, 5)).render() == "84.92 ± 0.73"


def test_aggregate_empty():
    with pytest.raises(ConfigError):
        aggregate([])


@given(st.lists(st.floats(0, 100), min_size=1, max_size=10))
def test_aggregate_bounds(vals):
    a = aggregate(vals)
    assert min(vals) - 1e-9 <= a.mean <= max(vals) + 1e-9
    assert a.std >= 0


SMALL = """
context_len = 1024
n_samples = 12
variants = ["S1", "MK1"]
methods = ["quest", "snapkv"]
"""


def test_ablation_repeated_seed_has_zero_std():
    cfg = load_config(SMALL + 'budgets = ["1/4"]\n')
    out = run_random_ablation(cfg, seeds=[3, 3, 3])
    assert out and all(a.std == 0.0 and a.n_seeds == 3 for a in out.values())


def test_ablation_full_budget_matches_dense():
    cfg = load_config(SMALL + 'budgets = ["1"]\nbackbones = ["standard"]\n')
    out = run_random_ablation(cfg, seeds=[0, 1, 2, 3, 4])
    spec = PlantedModelSpec()
    for task in ("S1", "MK1"):
        score = 0.0
        for s in generate_split(task, 12, 1024, 0):
            st_ = build_head_states(embed_tokens(s, spec), "standard")
            flat = [readout_symbol(dense_attention(q, st_.keys, st_.values), spec) for q in decode_queries(s, spec)]
            score += exact_match([tuple(flat)], s.gold_answers)
        dense = 100.0 * score / 12
        label = task[:-1] + "-" + task[-1]
        for method in ("quest", "snapkv"):
            agg = out[("standard", method, "1", label)]
            assert agg.std == 0.0
            assert all(abs(v - dense) < 1e-9 for v in agg.per_seed)
