import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from symcorr.exceptions import ContractError, DegenerateRowError, ShapeError
from symcorr.tensor import ops

from oracles import bilinear_pixel, conv_loops, matmul_loops

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_matmul_identity_left(rng):
    m = rng.normal(size=(3, 5))
    assert np.array_equal(ops.matmul(np.eye(3), m), m)


def test_matmul_hand_sum():
    assert np.array_equal(ops.matmul([[1, 2], [3, 4]], [[1], [1]]), [[3.0], [7.0]])


def test_matmul_against_triple_loop(rng):
    a = rng.integers(-9, 9, size=(5, 7)).astype(float)
    b = rng.integers(-9, 9, size=(7, 2)).astype(float)
    assert np.abs(ops.matmul(a, b) - matmul_loops(a, b)).max() == 0.0
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 2))
    np.testing.assert_allclose(ops.matmul(a, b), matmul_loops(a, b), rtol=0, atol=1e-13)


@given(arrays(np.float64, (4, 3), elements=finite))
def test_matmul_identity_both_sides(a):
    assert np.array_equal(ops.matmul(a, np.eye(3)), a)
    assert np.array_equal(ops.matmul(np.eye(4), a), a)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ops.matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_pair_dot_is_bitwise_symmetric(rng):
    for _ in range(50):
        a, b = rng.normal(size=(7, 5)), rng.normal(size=(4, 5)) * 100
        assert np.array_equal(ops.pair_dot(a, b), ops.pair_dot(b, a).T)
    np.testing.assert_allclose(ops.pair_dot(a, b), a @ b.T, rtol=1e-13, atol=1e-12)


def test_softmax_uniform_row():
    np.testing.assert_allclose(ops.row_softmax(np.full((1, 4), 3.0), 1.0), [[0.25] * 4], atol=1e-15)


def test_softmax_single_column_is_ones(rng):
    assert np.array_equal(ops.row_softmax(rng.normal(size=(5, 1)), 2.0), np.ones((5, 1)))


def test_softmax_large_logits_do_not_overflow():
    out = ops.row_softmax(np.array([[1000.0, 0.0]]), 1.0)
    assert np.all(np.isfinite(out))
    assert out[0, 0] == pytest.approx(1.0) and out[0, 1] == pytest.approx(0.0, abs=1e-300)


@given(arrays(np.float64, (3, 6), elements=st.floats(-1e6, 1e6)), st.floats(0.01, 100))
def test_softmax_rows_sum_to_one(m, scale):
    out = ops.row_softmax(m, scale)
    assert np.all(np.abs(out.sum(axis=1) - 1.0) <= 1e-9)
    assert np.all((out >= 0) & (out <= 1))


@pytest.mark.parametrize("scale", [0.0, -1.0])
def test_softmax_rejects_nonpositive_scale(scale):
    with pytest.raises(ContractError):
        ops.row_softmax(np.zeros((1, 2)), scale)


def test_unit_normalize_345():
    np.testing.assert_allclose(ops.row_unit_normalize([[3.0, 4.0]]), [[0.6, 0.8]], atol=1e-15)


def test_unit_normalize_norms_and_idempotence(rng):
    once = ops.row_unit_normalize(rng.normal(size=(6, 8)))
    assert np.all(np.abs(np.linalg.norm(once, axis=1) - 1.0) <= 1e-9)
    assert np.abs(ops.row_unit_normalize(once) - once).max() <= 1e-12


def test_unit_normalize_zero_row_reports_index():
    with pytest.raises(DegenerateRowError) as err:
        ops.row_unit_normalize([[1.0, 0.0], [0.0, 0.0]])
    assert err.value.row == 1


def test_bilinear_constant_preserved():
    out = ops.bilinear_resize(np.full((2, 2, 1), 0.7), 4, 4)
    np.testing.assert_allclose(out, 0.7, atol=1e-15)


def test_bilinear_identity(rng):
    g = rng.normal(size=(3, 5, 2))
    assert np.array_equal(ops.bilinear_resize(g, 3, 5), g)


def test_bilinear_ramp_matches_scalar_oracle():
    g = np.array([[0.0, 1.0], [0.0, 1.0]])[:, :, None]
    out = ops.bilinear_resize(g, 4, 4)
    for y in range(4):
        for x in range(4):
            assert out[y, x, 0] == pytest.approx(bilinear_pixel(g[:, :, 0], y, x, 4, 4), abs=1e-15)
    np.testing.assert_allclose(out[0, :, 0], [0.0, 0.25, 0.75, 1.0], atol=1e-15)


def test_bilinear_random_matches_scalar_oracle(rng):
    g = rng.normal(size=(3, 5, 2))
    out = ops.bilinear_resize(g, 7, 4)
    ref = np.array([[bilinear_pixel(g, y, x, 7, 4) for x in range(4)] for y in range(7)])
    np.testing.assert_allclose(out, ref, atol=1e-13)


@settings(max_examples=50)
@given(arrays(np.float64, (3, 4, 1), elements=finite), st.integers(1, 9), st.integers(1, 9))
def test_bilinear_stays_within_input_bounds(g, h, w):
    out = ops.bilinear_resize(g, h, w)
    assert out.min() >= g.min() - 1e-12 and out.max() <= g.max() + 1e-12


def test_bilinear_rejects_empty_target():
    with pytest.raises(ShapeError):
        ops.bilinear_resize(np.zeros((2, 2, 1)), 0, 3)


def test_conv_identity_kernel(rng):
    g = rng.normal(size=(4, 6, 2))
    k = np.zeros((2, 2, 3, 3))
    k[0, 0, 1, 1] = k[1, 1, 1, 1] = 1.0
    assert np.array_equal(ops.conv2d(g, k, np.zeros(2)), g)


def test_conv_bias_only(rng):
    out = ops.conv2d(rng.normal(size=(3, 3, 2)), np.zeros((1, 2, 3, 3)), np.array([0.3]))
    assert np.array_equal(out, np.full((3, 3, 1), 0.3))


def test_conv_against_four_loop_oracle(rng):
    g = rng.normal(size=(5, 5, 2))
    k = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    assert np.abs(ops.conv2d(g, k, b) - conv_loops(g, k, b)).max() < 1e-12


def test_im2col_col2im_are_adjoint(rng):
    g = rng.normal(size=(4, 3, 2))
    cols = rng.normal(size=ops.im2col(g).shape)
    lhs = np.sum(ops.im2col(g) * cols)
    rhs = np.sum(g * ops.col2im(cols, 4, 3, 2))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        ops.conv2d(np.zeros((3, 3, 2)), np.zeros((1, 3, 3, 3)), np.zeros(1))


def test_sigmoid_is_stable():
    out = ops.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [0.0, 0.5, 1.0], atol=1e-300)
    assert math.isclose(ops.sigmoid(np.array([2.0]))[0], 1 / (1 + math.exp(-2.0)), rel_tol=1e-15)
