import numpy as np
import pytest

from roar import numeric as nm
from roar.attention import (
    ObjectFrame,
    apply_object_attention,
    attention_energies,
    attention_weights,
    uniform_weights,
)

from conftest import check_gradients


def params(rng, H=4, D=3, A=5, scale=1.0):
    return {
        "W_wa": rng.standard_normal((H, A)) * scale,
        "W_ua": rng.standard_normal((D, A)) * scale,
        "b_a": rng.standard_normal(A) * scale,
        "W_w": rng.standard_normal((A, 1)) * scale,
    }


def energy_oracle(h, F, p):
    N, A = F.shape[0], p["W_wa"].shape[1]
    e = np.zeros(N)
    for i in range(N):
        for a in range(A):
            s = p["b_a"][a]
            for k in range(h.size):
                s += h[k] * p["W_wa"][k, a]
            for d in range(F.shape[1]):
                s += F[i, d] * p["W_ua"][d, a]
            e[i] += np.tanh(s) * p["W_w"][a, 0]
    return e


def test_zero_inputs_give_zero_energies(rng):
    p = params(rng)
    p["b_a"] = np.zeros(5)
    e = attention_energies(np.zeros((1, 4)), np.zeros((1, 3, 3)), p).data
    assert np.array_equal(e, np.zeros((1, 3)))


def test_identical_objects_equal_energies(rng):
    p = params(rng)
    row = rng.standard_normal(3)
    e = attention_energies(rng.standard_normal((1, 4)), np.stack([row, row])[None], p).data
    assert e[0, 0] == e[0, 1]


def test_energies_match_loop_oracle(rng):
    p = params(rng)
    h = rng.standard_normal((2, 4))
    F = rng.standard_normal((2, 6, 3))
    e = attention_energies(h, F, p).data
    for b in range(2):
        assert np.max(np.abs(e[b] - energy_oracle(h[b], F[b], p))) <= 1e-12


def test_weight_examples():
    w, _ = attention_weights(nm.Tensor(np.full((1, 4), 0.7)), np.ones((1, 4), bool))
    assert np.allclose(w.data, 0.25, atol=1e-15)
    w, _ = attention_weights(nm.Tensor([[np.log(2.0), 0.0]]), np.ones((1, 2), bool))
    assert np.allclose(w.data, [[2 / 3, 1 / 3]], atol=1e-15)
    w, _ = attention_weights(nm.Tensor([[-5.0, 9.0]]), np.array([[True, False]]))
    assert w.data.tolist() == [[1.0, 0.0]]


def test_all_masked_frame_flags_no_objects():
    w, none = attention_weights(nm.Tensor([[1.0, 2.0], [0.0, 0.0]]), np.array([[False, False], [True, True]]))
    assert w.data[0].tolist() == [0.0, 0.0] and none.tolist() == [True, False]


def test_weights_sum_to_one_and_shift_invariant(rng):
    for _ in range(50):
        e = rng.standard_normal((3, 7)) * 5
        mask = rng.random((3, 7)) < 0.6
        mask[:, 0] = True
        w, _ = attention_weights(nm.Tensor(e), mask)
        assert np.all(np.abs(w.data.sum(axis=1) - 1.0) <= 1e-12)
        assert np.all(w.data[~mask] == 0.0)
        shifted, _ = attention_weights(nm.Tensor(e + 3.7), mask)
        assert np.max(np.abs(shifted.data - w.data)) <= 1e-12


def test_aggregate_examples(rng):
    F = rng.standard_normal((1, 3, 4))
    agg, _ = apply_object_attention(nm.Tensor([[0.0, 1.0, 0.0]]), F)
    assert np.array_equal(agg.data[0], F[0, 1])
    row = rng.standard_normal(4)
    agg, _ = apply_object_attention(nm.Tensor([[0.5, 0.5]]), np.stack([row, row])[None])
    assert np.allclose(agg.data[0], row, atol=1e-15)
    alpha = rng.dirichlet(np.ones(3))[None]
    agg, weighted = apply_object_attention(nm.Tensor(alpha), F)
    oracle = sum(alpha[0, i] * F[0, i] for i in range(3))
    assert np.max(np.abs(agg.data[0] - oracle)) <= 1e-12
    assert weighted.shape == (1, 3, 4)


def test_permuting_objects_permutes_weights(rng):
    p = params(rng)
    h = rng.standard_normal((1, 4))
    F = rng.standard_normal((1, 5, 3))
    mask = np.array([[True, True, False, True, True]])
    perm = np.array([3, 0, 4, 2, 1])
    w, _ = attention_weights(attention_energies(h, F, p), mask)
    wp, _ = attention_weights(attention_energies(h, F[:, perm], p), mask[:, perm])
    assert np.max(np.abs(wp.data - w.data[:, perm])) <= 1e-12
    agg, _ = apply_object_attention(w, F)
    aggp, _ = apply_object_attention(wp, F[:, perm])
    assert np.max(np.abs(agg.data - aggp.data)) <= 1e-12


def test_uniform_weights():
    w = uniform_weights(np.array([[True, True, False, False], [False] * 4]))
    assert w.data.tolist() == [[0.5, 0.5, 0.0, 0.0], [0.0] * 4]


def test_object_frame_shape_check():
    ObjectFrame(np.zeros((3, 2)), [True, False, True])
    with pytest.raises(ValueError):
        ObjectFrame(np.zeros((3, 2)), [True, False])


def test_shape_mismatch_raises(rng):
    with pytest.raises(nm.ShapeError):
        attention_energies(np.zeros((1, 9)), np.zeros((1, 2, 3)), params(rng))
    with pytest.raises(nm.ShapeError):
        attention_energies(np.zeros((1, 4)), np.zeros((1, 2, 8)), params(rng))


@pytest.mark.parametrize("seed", range(5))
def test_attention_block_gradients(seed):
    rng = np.random.default_rng(seed)
    p = params(rng, scale=0.7)
    h = rng.uniform(-2, 2, (2, 4))
    F = rng.uniform(-2, 2, (2, 4, 3))
    mask = np.array([[True, True, False, True], [True, False, False, False]])
    out_w = rng.standard_normal((2, 3))

    def build(t):
        w, _ = attention_weights(attention_energies(t["h"], F, t), mask)
        agg, _ = apply_object_attention(w, F)
        return nm.sum(agg * out_w)

    errs = check_gradients(build, dict(p, h=h))
    assert max(errs.values()) < 1e-6, errs
