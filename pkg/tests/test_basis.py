from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpfda.basis import (
    InvalidIndexError,
    Quadrature,
    SobolevParams,
    basis_matrix,
    eval_basis,
    eval_function,
    l2_distance,
    project_to_coeffs,
    quad_l2_distance,
)
from dpfda.synth import MU1_COEFFS, mu2

coeff_arrays = st.integers(1, 8).flatmap(
    lambda r: arrays(np.float64, r, elements=st.floats(-5, 5, allow_nan=False))
)


def mp_basis(ell, t):
    # independent high-precision evaluator
    mpmath.mp.dps = 40
    t = mpmath.mpf(t)
    if ell == 1:
        return mpmath.mpf(1)
    k = ell // 2
    f = mpmath.cos if ell % 2 == 0 else mpmath.sin
    return mpmath.sqrt(2) * f(2 * k * mpmath.pi * t)


def test_eval_basis_examples():
    assert eval_basis(1, 0.37) == 1.0
    assert eval_basis(2, 0.0) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert eval_basis(3, 0.25) == pytest.approx(float(mp_basis(3, 0.25)), abs=1e-14)
    assert eval_basis(3, 0.25) == pytest.approx(math.sqrt(2), abs=1e-14)


@pytest.mark.parametrize("ell", [0, -3])
def test_eval_basis_rejects_bad_index(ell):
    with pytest.raises(InvalidIndexError):
        eval_basis(ell, 0.1)


def test_basis_matrix_against_high_precision(rng):
    t = rng.uniform(0, 1, 7)
    phi = basis_matrix(t, 9)
    for i, ti in enumerate(t):
        for ell in range(1, 10):
            assert phi[i, ell - 1] == pytest.approx(float(mp_basis(ell, ti)), abs=1e-13)
            assert phi[i, ell - 1] == eval_basis(ell, ti)


def test_basis_matrix_shapes():
    assert basis_matrix(np.zeros((4, 3)), 5).shape == (4, 3, 5)
    assert basis_matrix(0.3, 2).shape == (2,)
    with pytest.raises(InvalidIndexError):
        basis_matrix([0.1], 0)


def test_eval_function_examples():
    assert eval_function([2.5, 0, 0, 0], 0.77) == pytest.approx(2.5)
    assert eval_function(MU1_COEFFS, 0.0) == pytest.approx(1.4, abs=1e-14)
    assert eval_function(np.zeros(4), np.linspace(0, 1, 5)) == pytest.approx(np.zeros(5))


def test_l2_distance_examples():
    a = np.array([0.3, -1.0, 2.0])
    assert l2_distance(a, a) == 0.0
    assert l2_distance([1, 0], [0, 1]) == pytest.approx(math.sqrt(2))
    # zero padding
    assert l2_distance([1.0], [1.0, 0.0, 2.0]) == pytest.approx(2.0)


def test_l2_distance_matches_quadrature(rng):
    for _ in range(10):
        a, b = rng.normal(size=5), rng.normal(size=5)
        assert l2_distance(a, b) == pytest.approx(quad_l2_distance(a, b), abs=1e-8)


def test_project_to_coeffs_examples():
    f = lambda x: eval_function(MU1_COEFFS, x)
    got = project_to_coeffs(f, 3, Quadrature(2049))
    assert got == pytest.approx([0.8, 0.6 / math.sqrt(2), (2 / 3) / math.sqrt(2)], abs=1e-10)
    assert project_to_coeffs(lambda x: np.ones_like(x), 2) == pytest.approx([1.0, 0.0], abs=1e-12)
    e4 = project_to_coeffs(lambda x: eval_basis(4, x), 5)
    assert e4 == pytest.approx(np.eye(5)[3], abs=1e-8)


def test_orthonormality_first_16():
    q = Quadrature(4097)
    phi = basis_matrix(q.nodes, 16)
    gram = phi.T @ (q.weights[:, None] * phi)
    assert np.max(np.abs(gram - np.eye(16))) < 1e-8


def test_quadrature_exact_on_cubic():
    q = Quadrature(5)
    assert q.integrate(q.nodes**3) == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(ValueError):
        Quadrature(4)


def test_mu2_quadrature_distance_to_zero():
    # int_0^1 mu2^2, computed exactly with mpmath
    mpmath.mp.dps = 30
    exact = mpmath.quad(lambda x: (mpmath.mpf(1) / 7 + 5 * x**2 / 7 - 10 * (0.5 - x) ** 3 / 7) ** 2, [0, 1])
    assert quad_l2_distance(mu2, lambda x: 0 * x) == pytest.approx(float(mpmath.sqrt(exact)), abs=1e-12)


def test_sobolev_params_validation():
    with pytest.raises(ValueError):
        SobolevParams(1.0, 1.0)
    with pytest.raises(ValueError):
        SobolevParams(2.0, 0.0)


@given(coeff_arrays, coeff_arrays)
def test_parseval(a, b):
    assert l2_distance(a, b) == pytest.approx(quad_l2_distance(a, b), abs=1e-8)


@given(coeff_arrays, st.floats(-3, 3), st.floats(0, 1))
def test_eval_function_linear(a, c, t):
    b = np.linspace(-1, 1, a.size)
    lhs = eval_function(c * a + b, t)
    rhs = c * eval_function(a, t) + eval_function(b, t)
    assert lhs == pytest.approx(rhs, abs=1e-9)
