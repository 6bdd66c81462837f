import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import dims, seeds
from nearby_orbit.gaussians import g_factor
from nearby_orbit.symplectic import (
    J_matrix,
    NotFreeError,
    SingularSMinusIError,
    SymplecticMatrix,
    block_decompose,
    cayley_transform,
    eval_W,
    generating_function_of,
    grad_W,
    is_symplectic,
    matrix_of_generating_function,
    random_symplectic,
    reproject_symplectic,
    symplectic_defect,
    symplectic_form,
)

J2 = J_matrix(1)


# symplectic_form


@given(seeds, dims)
def test_sigma_vanishes_on_diagonal(seed, n):
    z = np.random.default_rng(seed).normal(size=2 * n)
    assert symplectic_form(z, z) == pytest.approx(0.0, abs=1e-12)


def test_sigma_unit_vectors():
    # (z')^T J z with z = (1, 0), z' = (0, 1)
    assert symplectic_form([1.0, 0.0], [0.0, 1.0]) == -1.0


@given(seeds, dims)
def test_sigma_matches_matrix_form_and_is_antisymmetric(seed, n):
    rng = np.random.default_rng(seed)
    z, zp = rng.normal(size=(2, 2 * n))
    s = symplectic_form(z, zp)
    assert s == pytest.approx(zp @ J_matrix(n) @ z, abs=1e-12)
    assert s == pytest.approx(-symplectic_form(zp, z), abs=1e-12)


@given(seeds, dims, st.floats(-3, 3), st.floats(-3, 3))
def test_sigma_bilinear(seed, n, a, b):
    rng = np.random.default_rng(seed)
    z1, z2, w = rng.normal(size=(3, 2 * n))
    lhs = symplectic_form(a * z1 + b * z2, w)
    rhs = a * symplectic_form(z1, w) + b * symplectic_form(z2, w)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_sigma_dimension_mismatch():
    with pytest.raises(ValueError):
        symplectic_form([1.0, 0.0], [1.0, 0.0, 0.0, 0.0])


def test_sigma_broadcasts():
    z = np.array([[1.0, 0.0], [0.0, 2.0]])
    np.testing.assert_allclose(symplectic_form(z, [0.0, 1.0]), [-1.0, 0.0])


# is_symplectic


def test_identity_and_J_are_symplectic():
    assert is_symplectic(np.eye(4))
    assert is_symplectic(J_matrix(2))


def test_shear_is_symplectic():
    assert is_symplectic(np.array([[1.0, 0.0], [3.7, 1.0]]))


def test_non_symplectic_rejected():
    assert not is_symplectic(np.diag([2.0, 2.0]))
    with pytest.raises(ValueError):
        SymplecticMatrix(np.diag([2.0, 2.0]))


def test_odd_dimension_rejected():
    with pytest.raises(ValueError):
        is_symplectic(np.eye(3))


@settings(max_examples=100)
@given(seeds, dims)
def test_random_symplectic_group_membership(seed, n):
    S = random_symplectic(n, np.random.default_rng(seed), 0.5)
    assert symplectic_defect(S) <= 1e-10
    assert abs(np.linalg.det(S) - 1.0) <= 1e-8


def test_symplectic_matrix_value_semantics():
    S = SymplecticMatrix(J2)
    assert S.n == 1
    with pytest.raises(ValueError):
        S.entries[0, 0] = 3.0
    np.testing.assert_allclose(S @ S, -np.eye(2))


# block_decompose


def test_blocks_of_J():
    A, B, C, D, free = block_decompose(J2)
    assert (A, B, C, D) == (0.0, 1.0, -1.0, 0.0)
    assert free


def test_identity_not_free():
    _, B, _, _, free = block_decompose(np.eye(2))
    assert B == 0.0 and not free


def test_g_factor_of_standard_state_not_free():
    S = g_factor(np.eye(1), np.zeros((1, 1)))
    np.testing.assert_array_equal(S, np.eye(2))
    assert not block_decompose(S)[4]


@given(seeds, dims)
def test_blocks_reassemble(seed, n):
    S = random_symplectic(n, np.random.default_rng(seed))
    A, B, C, D, _ = block_decompose(S)
    np.testing.assert_array_equal(np.block([[A, B], [C, D]]), S)


# generating functions


def test_generating_function_of_J():
    W = generating_function_of(J2)
    for x, xp in [(1.0, 2.0), (-0.3, 0.7), (2.5, -1.5)]:
        assert eval_W(W, x, xp) == pytest.approx(-x * xp, abs=1e-15)


def test_squeeze_has_no_generating_function():
    with pytest.raises(NotFreeError):
        generating_function_of(np.diag([2.0, 0.5]))


@settings(max_examples=100)
@given(seeds, dims)
def test_generating_function_reproduces_S(seed, n):
    rng = np.random.default_rng(seed)
    S = random_symplectic(n, rng)
    if not block_decompose(S)[4] or np.linalg.cond(S[:n, n:]) > 1e6:
        return
    W = generating_function_of(S)
    xp, pp = rng.normal(size=(2, n))
    # p' = -dW/dx' = L^T x - Q x' fixes x, then p = dW/dx
    x = np.linalg.solve(W.L.T, pp + W.Q @ xp)
    p, dWdxp = grad_W(W, x, xp)
    np.testing.assert_allclose(-dWdxp, pp, atol=1e-9)
    np.testing.assert_allclose(np.concatenate([x, p]), S @ np.concatenate([xp, pp]), atol=1e-8)


@given(seeds, dims)
def test_generating_function_round_trip(seed, n):
    S = random_symplectic(n, np.random.default_rng(seed), 0.5)
    if np.linalg.cond(S[:n, n:]) > 1e6:
        return
    np.testing.assert_allclose(matrix_of_generating_function(generating_function_of(S)), S, atol=1e-8)


def test_eval_W_against_finite_differences(rng):
    S = random_symplectic(2, rng, 0.7)
    W = generating_function_of(S)
    x, xp = rng.normal(size=(2, 2))
    gx, gxp = grad_W(W, x, xp)
    h = 1e-6
    for k in range(2):
        e = np.eye(2)[k] * h
        assert (eval_W(W, x + e, xp) - eval_W(W, x - e, xp)) / (2 * h) == pytest.approx(gx[k], abs=1e-7)
        assert (eval_W(W, x, xp + e) - eval_W(W, x, xp - e)) / (2 * h) == pytest.approx(gxp[k], abs=1e-7)


# Cayley transform


def test_cayley_of_minus_identity_vanishes():
    np.testing.assert_array_equal(cayley_transform(-np.eye(4)), np.zeros((4, 4)))


def test_cayley_of_J():
    # (J + I)(J - I)^{-1} = -J, so M_J = 1/2 J (-J) = I / 2
    np.testing.assert_allclose(cayley_transform(J2), 0.5 * np.eye(2), atol=1e-15)


def test_cayley_of_identity_is_singular():
    with pytest.raises(SingularSMinusIError):
        cayley_transform(np.eye(2))


@settings(max_examples=100)
@given(seeds, dims)
def test_cayley_raw_product_is_symmetric(seed, n):
    S = random_symplectic(n, np.random.default_rng(seed), 0.5)
    if abs(np.linalg.det(S - np.eye(2 * n))) < 1e-3:
        return
    MS = cayley_transform(S, symmetrize=False)
    assert np.max(np.abs(MS - MS.T)) <= 1e-10 * max(1.0, np.max(np.abs(MS)))


def test_reprojection_removes_defect(rng):
    S = random_symplectic(2, rng)
    noisy = S + 1e-7 * rng.normal(size=S.shape)
    assert symplectic_defect(noisy) > 1e-9
    fixed = reproject_symplectic(noisy)
    assert symplectic_defect(fixed) < 1e-13
    assert np.max(np.abs(fixed - S)) < 1e-5
