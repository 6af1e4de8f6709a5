import dataclasses
import math

import numpy as np
import pytest

from memsparse.backbone import (
    BackboneKind,
    PlantedModelSpec,
    build_head_states,
    constant_gate_params,
    decode_queries,
    dense_attention,
    embed_tokens,
    planted_gate_params,
    readout_symbol,
    zero_gate_params,
)
from memsparse.errors import DomainError, ShapeError
from memsparse.niah import generate_sample
from oracles import naive_attention

SPEC = PlantedModelSpec()
QUIET = dataclasses.replace(SPEC, noise_scale=0.0)


def test_layout_dims():
    assert SPEC.address_dim == SPEC.head_dim - 17
    assert SPEC.model_dim == SPEC.head_dim + SPEC.address_dim


def test_noiseless_needle_rows_have_signal_norm():
    s = generate_sample("MK1", 1024, 4)
    X = embed_tokens(s, QUIET)
    for nd in s.needles:
        for pos in nd.value_positions:
            assert math.isclose(np.linalg.norm(X[pos, : QUIET.head_dim]), QUIET.signal_gain, rel_tol=1e-12)
            assert X[pos, QUIET.marker_col] == pytest.approx(QUIET.signal_gain / math.sqrt(3))
    # rows with no needle and outside the query region are empty
    busy = {p for nd in s.needles for p in nd.value_positions}
    idle = [t for t in range(s.length - len(s.queries)) if t not in busy]
    assert np.all(X[idle] == 0.0)


def test_embedding_deterministic():
    s = generate_sample("S2", 512, 9)
    assert np.array_equal(embed_tokens(s, SPEC), embed_tokens(s, SPEC))


def test_embedding_changes_with_seed():
    same = 0
    for i in range(100):
        a = embed_tokens(generate_sample("S1", 256, 2 * i), SPEC)
        b = embed_tokens(generate_sample("S1", 256, 2 * i + 1), SPEC)
        same += np.array_equal(a, b)
    assert same == 0
    s = generate_sample("S1", 256, 0)
    assert not np.array_equal(embed_tokens(s, SPEC), embed_tokens(s, dataclasses.replace(SPEC, seed=1)))


def test_standard_states_have_no_memory():
    st = build_head_states(embed_tokens(generate_sample("S1", 256, 0), SPEC), "standard")
    assert st.kind is BackboneKind.STANDARD
    assert st.augmented is None
    assert st.keys is st.kv.keys


def test_zero_gates_reproduce_raw_states():
    X = embed_tokens(generate_sample("S1", 256, 0), SPEC)
    st = build_head_states(X, "memory_augmented", zero_gate_params(SPEC))
    assert np.array_equal(st.augmented.k_tilde, st.kv.keys)
    assert np.array_equal(st.augmented.v_tilde, st.kv.values)


def test_memory_backbone_needs_gates():
    X = embed_tokens(generate_sample("S1", 256, 0), SPEC)
    with pytest.raises(DomainError):
        build_head_states(X, "memory_augmented")


def test_embedding_width_checked():
    with pytest.raises(ShapeError):
        build_head_states(np.zeros((4, 10)), "standard")


def test_memory_carries_needle_forward():
    s = generate_sample("S1", 1024, 21)
    nd = s.needles[0]
    last = nd.value_positions[-1]
    X = embed_tokens(s, QUIET)
    direction = X[last, : QUIET.head_dim] / np.linalg.norm(X[last, : QUIET.head_dim])
    raw = build_head_states(X, "standard")
    mem = build_head_states(X, "memory_augmented", planted_gate_params(QUIET))
    after = range(last + 1, min(last + 65, s.length - len(s.queries)))
    assert len(after) > 0
    for t in after:
        assert raw.keys[t] @ direction == 0.0
        assert mem.keys[t] @ direction > 0.0


def test_constant_gate_values():
    X = embed_tokens(generate_sample("S1", 128, 0), SPEC)
    for g in (0.25, 0.5, 1 - 1 / 64):
        st = build_head_states(X, "memory_augmented", constant_gate_params(SPEC, g))
        np.testing.assert_allclose(st.augmented.gates, g, rtol=0, atol=1e-15)


def test_planted_gate_writes_on_needles():
    s = generate_sample("S1", 512, 3)
    X = embed_tokens(s, SPEC)
    st = build_head_states(X, "memory_augmented", planted_gate_params(SPEC))
    g = st.augmented.gates[:, 0]
    needle_rows = list(s.needles[0].value_positions)
    assert g[needle_rows].max() < 0.01
    assert np.median(g) > 0.9


def test_decode_queries_align_with_gold_steps():
    s = generate_sample("MV", 1024, 2)
    q = decode_queries(s, SPEC)
    assert q.shape == (s.n_steps, SPEC.head_dim)


def test_noiseless_dense_readout_recovers_answer():
    s = generate_sample("MK1", 1024, 8)
    st = build_head_states(embed_tokens(s, QUIET), "standard")
    preds = [readout_symbol(dense_attention(q, st.keys, st.values), QUIET) for q in decode_queries(s, QUIET)]
    assert tuple(preds) == s.gold_answers[0]


def test_dense_single_row():
    assert dense_attention([1, 0], [[1, 0]], [[2, 3]]).tolist() == [2.0, 3.0]


def test_dense_identical_keys_average():
    out = dense_attention([0.3, -2.0], [[1, 1], [1, 1]], [[2.0, 0.0], [4.0, 2.0]])
    np.testing.assert_allclose(out, [3.0, 1.0], rtol=0, atol=1e-15)


def test_dense_matches_naive_oracle():
    rng = np.random.default_rng(16)
    for _ in range(20):
        q = rng.standard_normal(8)
        K, V = rng.standard_normal((16, 8)), rng.standard_normal((16, 5))
        expected = naive_attention(q.tolist(), K.tolist(), V.tolist())
        np.testing.assert_allclose(dense_attention(q, K, V), expected, rtol=0, atol=1e-9)


def test_dense_shape_errors():
    with pytest.raises(ShapeError):
        dense_attention([1, 0, 0], [[1, 0]], [[1, 1]])
    with pytest.raises(DomainError):
        dense_attention([1, 0], np.zeros((0, 2)), np.zeros((0, 2)))


def test_backbone_parse():
    assert BackboneKind.parse("memory_augmented") is BackboneKind.MEMORY_AUGMENTED
    with pytest.raises(DomainError):
        BackboneKind.parse("transformer-xl")
