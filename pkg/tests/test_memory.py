import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from memsparse.errors import DomainError, ShapeError
from memsparse.memory import (
    DEFAULT_GATE_CAP,
    GateParams,
    KvStates,
    apply_decaying_memory,
    compute_gates,
    reconstruct_from_weights,
    unrolled_weights,
)
from oracles import naive_recurrence, naive_unrolled


def test_gate_cap_value():
    assert DEFAULT_GATE_CAP == 63 / 64


def test_gates_zero_projection_give_half():
    p = GateParams(np.zeros((5, 3)), np.zeros(3), gate_cap=0.9)
    assert np.all(compute_gates(np.ones((4, 5)), p) == 0.5)


def test_gates_saturate_at_cap():
    p = GateParams(np.zeros((5, 3)), np.full(3, 40.0))
    assert np.all(compute_gates(np.ones((4, 5)), p) == 1 - 1 / 64)


def test_gates_lower_saturation():
    p = GateParams(np.zeros((5, 3)), np.full(3, -1e4))
    assert np.all(compute_gates(np.ones((4, 5)), p) < 1e-12)


def test_gate_cap_must_be_open_interval():
    with pytest.raises(DomainError):
        GateParams(np.zeros((2, 2)), np.zeros(2), gate_cap=1.0)


def test_gate_params_round_trip():
    rng = np.random.default_rng(3)
    p = GateParams(rng.standard_normal((4, 2)), rng.standard_normal(2), 0.95)
    q = GateParams.from_dict(p.to_dict())
    assert np.array_equal(p.weight, q.weight) and np.array_equal(p.bias, q.bias) and p.gate_cap == q.gate_cap


def test_gate_shape_mismatch():
    p = GateParams(np.zeros((5, 3)), np.zeros(3))
    with pytest.raises(ShapeError):
        compute_gates(np.ones((4, 6)), p)


def test_zero_gates_passthrough_bit_exact():
    rng = np.random.default_rng(0)
    kv = KvStates(rng.standard_normal((20, 4)), rng.standard_normal((20, 4)))
    aug = apply_decaying_memory(kv, np.zeros((20, 4)))
    assert np.array_equal(aug.k_tilde, kv.keys)
    assert np.array_equal(aug.v_tilde, kv.values)


def test_half_gate_impulse_response():
    v = np.zeros((3, 2))
    v[0, 0] = 1.0
    aug = apply_decaying_memory(KvStates(v, v), np.full((3, 2), 0.5))
    assert aug.v_tilde[:, 0].tolist() == [0.5, 0.25, 0.125]


def test_unit_gates_hold_zero_state():
    rng = np.random.default_rng(1)
    kv = KvStates(rng.standard_normal((6, 3)), rng.standard_normal((6, 3)))
    aug = apply_decaying_memory(kv, np.ones((6, 3)))
    assert np.all(aug.k_tilde == 0) and np.all(aug.v_tilde == 0)


def test_gates_out_of_range():
    kv = KvStates(np.zeros((2, 1)), np.zeros((2, 1)))
    with pytest.raises(DomainError):
        apply_decaying_memory(kv, np.full((2, 1), 1.5))


def test_gates_row_mismatch():
    kv = KvStates(np.zeros((2, 1)), np.zeros((2, 1)))
    with pytest.raises(ShapeError):
        apply_decaying_memory(kv, np.zeros((3, 1)))


def test_unrolled_single_step():
    assert unrolled_weights([[0.5]], 1, 0).tolist() == [0.5]


def test_unrolled_three_steps():
    assert unrolled_weights(np.full((3, 1), 0.5), 3, 0).tolist() == [0.125, 0.25, 0.5]


def test_unrolled_index_errors():
    with pytest.raises(IndexError):
        unrolled_weights(np.zeros((3, 1)), 4, 0)
    with pytest.raises(IndexError):
        unrolled_weights(np.zeros((3, 1)), 1, 1)


@settings(max_examples=100)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 4)), elements=st.floats(0, 1)), st.data())
def test_unrolled_telescoping(gates, data):
    t = data.draw(st.integers(1, gates.shape[0]))
    c = data.draw(st.integers(0, gates.shape[1] - 1))
    w = unrolled_weights(gates, t, c)
    assert np.all(w >= 0)
    assert abs(w.sum() - (1 - np.prod(gates[:t, c]))) < 1e-12
    np.testing.assert_allclose(w, naive_unrolled(gates.tolist(), t, c), rtol=0, atol=1e-15)


@settings(max_examples=60)
@given(st.integers(1, 24), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_recurrence_matches_oracles(T, d, seed):
    rng = np.random.default_rng(seed)
    g = rng.uniform(0, DEFAULT_GATE_CAP, (T, d))
    k, v = rng.standard_normal((T, d)), rng.standard_normal((T, d))
    aug = apply_decaying_memory(KvStates(k, v), g)
    np.testing.assert_allclose(aug.v_tilde, naive_recurrence(g.tolist(), v.tolist()), rtol=0, atol=1e-12)
    for t in (1, T):
        for c in range(d):
            assert abs(aug.k_tilde[t - 1, c] - reconstruct_from_weights(g, k, t, c)) < 1e-12


def test_recurrence_is_causal():
    rng = np.random.default_rng(5)
    k = rng.standard_normal((10, 2))
    g = rng.uniform(0, 0.9, (10, 2))
    a = apply_decaying_memory(KvStates(k, k), g)
    k2 = k.copy()
    k2[7:] += 100.0
    b = apply_decaying_memory(KvStates(k2, k2), g)
    assert np.array_equal(a.k_tilde[:7], b.k_tilde[:7])


def test_unrolled_all_channels_matches_single():
    rng = np.random.default_rng(9)
    g = rng.uniform(0, 1, (15, 4))
    x = rng.standard_normal((15, 4))
    for t in (1, 7, 15):
        W = unrolled_weights(g, t)
        for c in range(4):
            assert np.array_equal(W[:, c], unrolled_weights(g, t, c))
        np.testing.assert_allclose(reconstruct_from_weights(g, x, t), [reconstruct_from_weights(g, x, t, c) for c in range(4)], atol=1e-15)
