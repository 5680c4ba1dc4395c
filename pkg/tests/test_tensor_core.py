import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import rssigat.tensor_core as tc
from gradcheck import check_case, primitive_cases


def _loss_and_grad(build_loss, leaf: tc.Tensor):
    with tc.Tape() as tape:
        loss = build_loss()
        grads = tc.backward(loss, tape)
    return float(loss.data), grads[leaf]


# ---------------------------------------------------------------------------
# forward values

def test_matmul_identity():
    a = tc.constant(np.arange(6.0).reshape(2, 3))
    out = tc.matmul(a, tc.constant(np.eye(3)))
    np.testing.assert_array_equal(out.data, a.data)


def test_matmul_hand_case():
    a = tc.constant([[1.0, 2.0], [3.0, 4.0]])
    b = tc.constant([[1.0], [1.0]])
    np.testing.assert_array_equal(tc.matmul(a, b).data, [[3.0], [7.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(tc.ShapeError):
        tc.matmul(tc.constant(np.ones((2, 3))), tc.constant(np.ones((2, 3))))


def test_grad_of_sum_is_ones():
    x = tc.Tensor(np.array([1.0, 5.0, -2.0]), requires_grad=True)
    _, g = _loss_and_grad(lambda: tc.sum_all(x), x)
    np.testing.assert_array_equal(g, np.ones(3))


def test_grad_of_sum_of_squares():
    x = tc.Tensor(np.array([1.0, 2.0]), requires_grad=True)
    _, g = _loss_and_grad(lambda: tc.sum_all(tc.mul(x, x)), x)
    np.testing.assert_array_equal(g, [2.0, 4.0])


def test_grad_sum_matmul_is_ones_bt():
    rng = np.random.default_rng(0)
    a = tc.Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b_data = rng.standard_normal((4, 2))
    _, g = _loss_and_grad(lambda: tc.sum_all(tc.matmul(a, tc.constant(b_data))), a)
    np.testing.assert_allclose(g, np.ones((3, 2)) @ b_data.T, atol=1e-12)


def test_backward_requires_scalar_loss():
    x = tc.Tensor(np.ones(3), requires_grad=True)
    with tc.Tape() as tape:
        y = tc.mul(x, x)
        with pytest.raises(tc.ShapeError):
            tc.backward(y, tape)


def test_non_finite_trips_error():
    with pytest.raises(tc.NonFiniteError):
        tc.Tensor([np.inf, 1.0])
    with pytest.raises(tc.NonFiniteError):
        tc.log(tc.constant([-1.0]))


def test_log_clamp_floor():
    x = tc.Tensor(np.array([1e-20, 0.5]), requires_grad=True)
    with tc.Tape() as tape:
        out = tc.log(x, floor=1e-12)
        loss = tc.sum_all(out)
        grads = tc.backward(loss, tape)
    np.testing.assert_allclose(out.data, [np.log(1e-12), np.log(0.5)])
    assert grads[x][0] == 0.0  # clamped region contributes no gradient
    np.testing.assert_allclose(grads[x][1], 2.0)


# ---------------------------------------------------------------------------
# segment softmax

def test_segment_softmax_singleton():
    out = tc.segment_softmax(tc.constant([3.7]), np.array([0]))
    np.testing.assert_array_equal(out.data, [1.0])


def test_segment_softmax_symmetric_pair():
    out = tc.segment_softmax(tc.constant([0.0, 0.0]), np.array([0, 0]))
    np.testing.assert_array_equal(out.data, [0.5, 0.5])


def test_segment_softmax_matches_direct_softmax():
    logits = np.array([1.0, 2.0, 3.0])
    out = tc.segment_softmax(tc.constant(logits), np.zeros(3, dtype=int))
    direct = np.exp(logits - logits.max())
    direct /= direct.sum()
    np.testing.assert_allclose(out.data, direct, rtol=1e-15)


def test_segment_softmax_empty():
    out = tc.segment_softmax(tc.constant(np.zeros(0)), np.zeros(0, dtype=int))
    assert out.data.size == 0


def test_segment_softmax_rejects_ungrouped():
    with pytest.raises(tc.ShapeError):
        tc.segment_softmax(tc.constant([1.0, 2.0, 3.0]), np.array([0, 1, 0]))


def test_segment_softmax_extreme_logits_stay_finite():
    logits = np.array([1e4, -1e4, 1e4, 0.0])
    segments = np.array([0, 0, 1, 1])
    out = tc.segment_softmax(tc.constant(logits), segments)
    assert np.isfinite(out.data).all()
    np.testing.assert_allclose(out.data[:2].sum(), 1.0)
    np.testing.assert_allclose(out.data[2:].sum(), 1.0)


@settings(deadline=None, max_examples=40)
@given(st.data())
def test_segment_softmax_sums_and_shift_invariance(data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    n_segments = data.draw(st.integers(1, 6))
    sizes = [data.draw(st.integers(1, 5)) for _ in range(n_segments)]
    segments = np.repeat(np.arange(n_segments), sizes)
    logits = rng.standard_normal(segments.size)
    out = tc.segment_softmax(tc.constant(logits), segments).data
    for s in range(n_segments):
        np.testing.assert_allclose(out[segments == s].sum(), 1.0, atol=1e-9)
    shifts = rng.standard_normal(n_segments)
    shifted = tc.segment_softmax(tc.constant(logits + shifts[segments]), segments).data
    np.testing.assert_allclose(shifted, out, atol=1e-12)


# ---------------------------------------------------------------------------
# finite-difference checks, >= 20 random instances per differentiable op

def test_every_primitive_matches_finite_differences():
    for trial in range(20):
        rng = np.random.default_rng(1000 + trial)
        for build_loss, leaf in primitive_cases(rng):
            check_case(build_loss, leaf)


def test_gradient_accumulates_over_reuse():
    x = tc.Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    # x enters twice: through mul(x, x) and an extra add
    _, g = _loss_and_grad(lambda: tc.sum_all(tc.add(tc.mul(x, x), x)), x)
    np.testing.assert_allclose(g, 2 * x.data + 1)


def test_inference_without_tape_records_nothing():
    x = tc.Tensor(np.ones(3), requires_grad=True)
    out = tc.relu(x)
    assert out.data.sum() == 3.0  # no tape active, no error


def test_scatter_add_unsorted_indices():
    vals = tc.constant(np.ones((5, 2)))
    out = tc.scatter_add_rows(vals, np.array([3, 0, 3, 1, 0]), 4)
    np.testing.assert_array_equal(out.data, [[2, 2], [1, 1], [0, 0], [2, 2]])
