import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eistab.basis import build_basis, conjugate_matrix, from_tilde, tilde_column_variances, to_tilde
from eistab.matrix import assemble_rank_one, sample_projection, target_covariance
from eistab.params import ModelParams


def test_n2_basis():
    U = build_basis(ModelParams(2, 0.5, 1, 1)).columns
    r = 1 / math.sqrt(2)
    assert np.allclose(U, [[r, -r], [r, r]], atol=1e-15)


def test_n4_basis_structure():
    U = build_basis(ModelParams(4, 0.5, 1, 1)).columns
    assert np.allclose(U[:, 0], 0.5)
    assert np.allclose(U[:, 1], [-0.5, -0.5, 0.5, 0.5])
    assert np.allclose(U[2:, 2], 0) and np.allclose(U[:2, 3], 0)


def test_orthonormal_large():
    U = build_basis(ModelParams(500, 0.3, 1, 1)).columns
    assert np.abs(U.T @ U - np.eye(500)).max() <= 1e-10


@given(n=st.integers(2, 80), f=st.floats(0.02, 0.98))
def test_basis_invariants(n, f):
    k = math.floor(f * n + 1e-9)
    if not 1 <= k <= n - 1:
        return
    p = ModelParams(n, f, 1, 1)
    U = build_basis(p).columns
    assert np.abs(U.T @ U - np.eye(n)).max() <= 1e-10
    assert np.allclose(U[:, 1], assemble_rank_one(p).m_vector, atol=1e-14)
    block = U[:, 2 : k + 1]
    assert np.all(block[k:] == 0) and np.all(np.abs(block[:k].sum(axis=0)) <= 1e-12)
    block = U[:, k + 1 :]
    assert np.all(block[:k] == 0) and np.all(np.abs(block[k:].sum(axis=0)) <= 1e-12)


def test_to_tilde_examples(rng):
    p = ModelParams(30, 0.4, 1, 1)
    B = build_basis(p)
    y = to_tilde(B, np.ones(30))
    assert y[0] == pytest.approx(math.sqrt(30)) and np.abs(y[1:]).max() < 1e-12
    y = to_tilde(B, assemble_rank_one(p).m_vector)
    assert y[1] == pytest.approx(1) and abs(y[0]) < 1e-12 and np.abs(y[2:]).max() < 1e-12
    x = rng.standard_normal(30)
    assert np.linalg.norm(to_tilde(B, x)) == pytest.approx(np.linalg.norm(x), abs=1e-10)
    assert np.allclose(from_tilde(B, to_tilde(B, x)), x, atol=1e-10)


def test_dimension_mismatch():
    B = build_basis(ModelParams(10, 0.5, 1, 1))
    with pytest.raises(ValueError):
        to_tilde(B, np.ones(9))
    with pytest.raises(ValueError):
        conjugate_matrix(B, np.zeros((9, 9)))


def test_conjugate_examples(rng):
    p = ModelParams(20, 0.5, 2, 1)
    B = build_basis(p)
    assert np.all(conjugate_matrix(B, np.zeros((20, 20))) == 0)
    W = sample_projection(p, rng)
    assert np.abs(conjugate_matrix(B, W)[:, 0]).max() < 1e-12


@pytest.mark.parametrize("n,f,sI,sE", [(50, 0.4, 2, 1), (7, 0.3, 0.5, 3), (2, 0.5, 1, 1)])
def test_tilde_profile_reproduces_target(n, f, sI, sE):
    # U D U^T is the within-row covariance of W exactly
    p = ModelParams(n, f, sI, sE)
    U = build_basis(p).columns
    D = tilde_column_variances(p)
    assert np.abs(U @ np.diag(D) @ U.T - target_covariance(p)).max() < 1e-13


def test_tilde_profile_homogeneous_collapse():
    D = tilde_column_variances(ModelParams(10, 0.3, 1.5, 1.5))
    assert D[0] == 0 and np.allclose(D[1:], 1.5)
