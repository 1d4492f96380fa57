import math

import numpy as np
import pytest

from eistab.basis import build_basis, tilde_column_variances
from eistab.matrix import (
    MomentAccumulator,
    assemble_rank_one,
    coupling_operator,
    empirical_covariance,
    project_rows,
    sample_basis_batch,
    sample_projection,
    sample_projection_batch,
    sample_unconstrained,
    sample_via_basis,
    target_covariance,
    write_matrix_csv,
)
from eistab.params import ModelParams, norm_bound_L
from eistab.streams import TrialStream


def test_n2_forced_structure(rng):
    s = 1.7
    p = ModelParams(2, 0.5, s, s)
    W = sample_projection_batch(p, rng, 40000)
    assert np.allclose(W[..., 0], -W[..., 1], atol=1e-14)
    rows = W.reshape(-1, 2)
    C = target_covariance(p)
    assert C == pytest.approx(np.array([[s / 2, -s / 2], [-s / 2, s / 2]]))
    se = s / 2 * math.sqrt(2 / rows.shape[0])
    assert abs(empirical_covariance(rows, 0, 0) - s / 2) < 5 * se
    assert abs(empirical_covariance(rows, 0, 1) + s / 2) < 5 * se


def test_row_sums_vanish_large():
    p = ModelParams(1000, 0.5, 2, 1)
    W = sample_projection(p, TrialStream(3, 0))
    assert np.abs(W.row_sums()).max() <= 1e-10
    assert np.abs(W.row_sums()).max() <= 1e-10 * math.sqrt(p.n) * norm_bound_L(p)


def test_basis_route_constraint(rng):
    p = ModelParams(40, 0.3, 2, 0.5)
    W = sample_via_basis(p, build_basis(p), rng)
    assert W.route == "basis"
    assert np.abs(W.entries @ np.ones(40)).max() < 1e-12


def test_basis_mismatch(rng):
    with pytest.raises(ValueError):
        sample_via_basis(ModelParams(10, 0.5, 1, 1), build_basis(ModelParams(12, 0.5, 1, 1)), rng)


def test_projection_is_reproducible():
    p = ModelParams(30, 0.4, 2, 1)
    a = sample_projection(p, TrialStream(9, 4)).entries
    b = sample_projection(p, TrialStream(9, 4)).entries
    assert np.array_equal(a, b)


def test_projection_idempotent(rng):
    sigma = np.array([2.0, 2.0, 1.0, 1.0, 1.0])
    V = rng.standard_normal((6, 5))
    W = project_rows(V, sigma)
    assert np.allclose(project_rows(W, sigma), W, atol=1e-15)


@pytest.mark.parametrize("route", ["projection", "basis"])
def test_small_covariance_monte_carlo(route, rng):
    p = ModelParams(8, 0.25, 2, 1)
    if route == "projection":
        W = sample_projection_batch(p, rng, 20000)
    else:
        W = sample_basis_batch(p, build_basis(p), rng, 20000)
    acc = MomentAccumulator(8)
    acc.add(W)
    z = (acc.covariance() - target_covariance(p)) / acc.covariance_se()
    assert np.abs(z).max() < 5
    assert np.abs(acc.mean() / acc.mean_se()).max() < 5


def test_rows_uncorrelated(rng):
    p = ModelParams(6, 0.5, 2, 1)
    W = sample_projection_batch(p, rng, 30000)
    acc = MomentAccumulator(12)
    acc.add(np.concatenate([W[:, 0], W[:, 3]], axis=1))
    z = acc.covariance()[:6, 6:] / acc.covariance_se()[:6, 6:]
    assert np.abs(z).max() < 5


def test_rank_one_n4():
    r = assemble_rank_one(ModelParams(4, 0.5, 1, 1, a=0.7))
    assert np.allclose(r.m_vector, [-0.5, -0.5, 0.5, 0.5])
    x = np.arange(4.0)
    assert np.allclose(r.apply(x), 0.7 * (r.m_vector @ x) * np.ones(4))


def test_rank_one_norms():
    m = assemble_rank_one(ModelParams(37, 0.3, 1, 1)).m_vector
    assert abs(m.sum()) < 1e-12 and abs(m @ m - 1) < 1e-12


def test_coupling_operator_matches_dense(rng):
    p = ModelParams(15, 0.4, 2, 1, a=1.3)
    W = sample_projection(p, rng)
    r = assemble_rank_one(p)
    dense = W.J + r.a * np.outer(np.ones(15), r.m_vector)  # test-only materialization
    op = coupling_operator(W, r)
    x = rng.standard_normal(15)
    X = rng.standard_normal((15, 3))
    assert np.allclose(op.matvec(x), dense @ x)
    assert np.allclose(op.rmatvec(x), dense.T @ x)
    assert np.allclose(op.matmat(X), dense @ X)
    # a = 0 drops the rank-one part
    op0 = coupling_operator(W, assemble_rank_one(p.with_(a=0.0)))
    assert np.allclose(op0.matvec(x), W.J @ x)


def test_empirical_covariance_examples():
    assert empirical_covariance(np.zeros((5, 3)), 0, 1) == 0
    assert empirical_covariance(np.array([[1.0], [-1.0]]), 0, 0) == pytest.approx(2)
    with pytest.raises(ValueError):
        empirical_covariance(np.zeros((1, 3)), 0, 1)


def test_moment_accumulator_matches_numpy(rng):
    X = rng.standard_normal((500, 4))
    acc = MomentAccumulator(4)
    acc.add(X[:200])
    acc.add(X[200:])
    assert np.allclose(acc.covariance(), X.T @ X / 500)
    assert np.allclose(acc.mean(), X.mean(axis=0))


def test_unconstrained_has_nonzero_row_sums():
    p = ModelParams(50, 0.5, 1, 1)
    V = sample_unconstrained(p, TrialStream(2, 0))
    assert np.abs(V.sum(axis=1)).max() > 1e-3


def test_matrix_csv_roundtrip(tmp_path, rng):
    p = ModelParams(6, 0.5, 2, 1)
    W = sample_projection(p, rng)
    path = tmp_path / "w.csv"
    write_matrix_csv(path, W)
    back = np.loadtxt(path, delimiter=",")
    assert np.array_equal(back, W.entries)
    assert b"\r" not in path.read_bytes()


def test_tilde_variance_profile_column_two():
    p = ModelParams(50, 0.4, 2, 1)
    D = tilde_column_variances(p)
    assert D[1] == pytest.approx(2 * 1 / (0.4 * 2 + 0.6 * 1))
