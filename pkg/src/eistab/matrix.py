"""Sampling of the row-constrained Gaussian coupling matrix W.

Each row of W is Gaussian with covariance

    C = diag(sigma) - sigma sigma^T / (n sigma_*),

which is the law of independent N(0, sigma_j) entries conditioned on a zero row
sum.  Two routes produce it: projecting free draws (``sample_projection``) and
drawing independent entries in the adapted basis (``sample_via_basis``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .basis import OrthonormalBasis, tilde_column_variances
from .params import ModelParams, derive_mu, sigma_star
from .streams import TrialStream


@dataclass(frozen=True, eq=False)
class ConstrainedMatrix:
    entries: np.ndarray
    params: ModelParams
    route: str
    raw: Optional[np.ndarray] = None  # unprojected draw, kept for spectrum comparisons

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def J(self) -> np.ndarray:
        return self.entries / np.sqrt(self.n)

    def row_sums(self) -> np.ndarray:
        return self.entries.sum(axis=1)


@dataclass(frozen=True, eq=False)
class RankOnePart:
    """The mean part a*M with M x = (m, x) u, stored as (m, a)."""

    m_vector: np.ndarray
    a: float

    @property
    def n(self) -> int:
        return self.m_vector.shape[0]

    def apply_M(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        coeff = self.m_vector @ x
        return np.multiply.outer(np.ones(self.n), coeff)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.a * self.apply_M(x)


def target_covariance(p: ModelParams) -> np.ndarray:
    """Within-row covariance delta_jl sigma_j - sigma_j sigma_l / (n sigma_*)."""
    s = p.sigma_vector
    return np.diag(s) - np.outer(s, s) / (p.n * sigma_star(p))


def project_rows(V: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """W = V - sigma * S / (n sigma_*) row by row, S being the row sum of V."""
    S = V.sum(axis=-1, keepdims=True)
    return V - sigma * (S / sigma.sum())


def _scaled_draw(p: ModelParams, normals: np.ndarray) -> np.ndarray:
    return normals * np.sqrt(p.sigma_vector)


def sample_projection(p: ModelParams, rng, keep_raw: bool = False) -> ConstrainedMatrix:
    """Draw W by exact projection of independent N(0, sigma_j) entries.

    ``rng`` is a :class:`TrialStream` (row-addressed) or a numpy Generator
    (row-major draw).
    """
    n = p.n
    if isinstance(rng, TrialStream):
        Z = rng.rows(n, n)
    else:
        Z = rng.standard_normal((n, n))
    V = _scaled_draw(p, Z)
    W = project_rows(V, p.sigma_vector)
    return ConstrainedMatrix(W, p, "projection", V if keep_raw else None)


def sample_via_basis(p: ModelParams, basis: OrthonormalBasis, rng) -> ConstrainedMatrix:
    """Draw independent tilde-entries with the block column variances, return U W~ U^T."""
    n = p.n
    if basis.n != n or basis.fn_count != p.fn_count:
        raise ValueError("basis was built for different (n, f)")
    Z = rng.rows(n, n) if isinstance(rng, TrialStream) else rng.standard_normal((n, n))
    Wt = Z * np.sqrt(tilde_column_variances(p))
    U = basis.columns
    return ConstrainedMatrix(U @ Wt @ U.T, p, "basis")


def sample_unconstrained(p: ModelParams, rng) -> np.ndarray:
    """Free draw with independent N(0, sigma_j) entries and no row constraint."""
    n = p.n
    Z = rng.rows(n, n) if isinstance(rng, TrialStream) else rng.standard_normal((n, n))
    return _scaled_draw(p, Z)


def sample_projection_batch(p: ModelParams, rng: np.random.Generator, size: int) -> np.ndarray:
    """Stack of ``size`` projected matrices, shape (size, n, n)."""
    V = rng.standard_normal((size, p.n, p.n)) * np.sqrt(p.sigma_vector)
    return project_rows(V, p.sigma_vector)


def sample_basis_batch(p: ModelParams, basis: OrthonormalBasis, rng: np.random.Generator, size: int) -> np.ndarray:
    Wt = rng.standard_normal((size, p.n, p.n)) * np.sqrt(tilde_column_variances(p))
    U = basis.columns
    return U @ Wt @ U.T


def assemble_rank_one(p: ModelParams) -> RankOnePart:
    mu_I, mu_E = derive_mu(p)
    k = p.fn_count
    m = np.empty(p.n)
    m[:k] = mu_I / np.sqrt(p.n)
    m[k:] = mu_E / np.sqrt(p.n)
    return RankOnePart(m, float(p.a))


def coupling_operator(W: ConstrainedMatrix | np.ndarray, rank_one: RankOnePart | None = None) -> LinearOperator:
    """J + aM as a matrix-free operator (M never materialized)."""
    entries = np.asarray(getattr(W, "entries", W), dtype=float)
    n = entries.shape[0]
    J = entries / np.sqrt(n)
    if rank_one is None or rank_one.a == 0:
        return LinearOperator((n, n), matvec=lambda x: J @ x, rmatvec=lambda x: J.T @ x,
                              matmat=lambda X: J @ X, dtype=float)
    m, a = rank_one.m_vector, rank_one.a

    def matvec(x):
        x = np.asarray(x, dtype=float)
        return J @ x + a * np.multiply.outer(np.ones(n), m @ x)

    def rmatvec(x):
        # M^T x = (u, x) m
        x = np.asarray(x, dtype=float)
        return J.T @ x + a * np.multiply.outer(m, x.sum(axis=0))

    return LinearOperator((n, n), matvec=matvec, rmatvec=rmatvec, matmat=matvec, dtype=float)


def empirical_covariance(samples, j: int, l: int) -> float:
    """Unbiased covariance of entries j and l, pooling every row of every sample."""
    rows = np.asarray(samples, dtype=float)
    rows = rows.reshape(-1, rows.shape[-1])
    if rows.shape[0] < 2:
        raise ValueError("need at least two rows to estimate a covariance")
    a = rows[:, j] - rows[:, j].mean()
    b = rows[:, l] - rows[:, l].mean()
    return float(a @ b / (rows.shape[0] - 1))


class MomentAccumulator:
    """Streaming first/second moments of n-vectors with product-variance tracking.

    Feed blocks of rows with :meth:`add`; :meth:`covariance` and
    :meth:`covariance_se` give the pooled covariance and its standard error from
    the empirical variance of the products x_j x_l (means are known to be zero
    for the constrained ensemble and are tracked only for the mean test).
    """

    def __init__(self, dim: int):
        self.count = 0
        self.s1 = np.zeros(dim)
        self.s2 = np.zeros((dim, dim))
        self.s4 = np.zeros((dim, dim))

    def add(self, rows: np.ndarray):
        rows = np.asarray(rows, dtype=float).reshape(-1, self.s1.shape[0])
        sq = rows * rows
        self.count += rows.shape[0]
        self.s1 += rows.sum(axis=0)
        self.s2 += rows.T @ rows
        self.s4 += sq.T @ sq

    def mean(self) -> np.ndarray:
        return self.s1 / self.count

    def mean_se(self) -> np.ndarray:
        var = np.diag(self.covariance())
        return np.sqrt(var / self.count)

    def covariance(self) -> np.ndarray:
        """Second moment about zero (the zero-mean covariance estimator)."""
        return self.s2 / self.count

    def covariance_se(self) -> np.ndarray:
        c = self.covariance()
        prod_var = self.s4 / self.count - c * c
        return np.sqrt(np.maximum(prod_var, 0.0) / self.count)


def write_matrix_csv(path, W: ConstrainedMatrix | np.ndarray):
    """Row-major dump, 17 significant digits, no header."""
    entries = np.asarray(getattr(W, "entries", W), dtype=float)
    with open(path, "w", newline="\n") as fh:
        for row in entries:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
