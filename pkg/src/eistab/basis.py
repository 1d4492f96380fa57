"""Orthonormal basis adapted to the block structure.

Column 1 is u/sqrt(n), column 2 is m, columns 3..k+1 span the part of the
inhibitory coordinate block orthogonal to its all-ones vector, and the
remaining columns do the same for the excitatory block.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .params import ModelParams, derive_mu, sigma_star


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    columns: np.ndarray
    fn_count: int

    @property
    def n(self) -> int:
        return self.columns.shape[0]


def _householder_complement(size: int) -> np.ndarray:
    """Orthonormal columns spanning the complement of ones(size)/sqrt(size).

    Uses the reflector H = I - 2 v v^T / (v^T v) with v = e_1 + ones/sqrt(size),
    which maps e_1 to -ones/sqrt(size); columns 2..size of H are the answer.
    The plus sign keeps v away from cancellation.
    """
    if size == 1:
        return np.zeros((1, 0))
    v = np.full(size, 1.0 / np.sqrt(size))
    v[0] += 1.0
    H = np.eye(size) - np.outer(v, v) * (2.0 / (v @ v))
    return H[:, 1:]


@lru_cache(maxsize=16)
def _basis_columns(n: int, k: int) -> np.ndarray:
    mu_I, mu_E = -np.sqrt((n - k) / k), np.sqrt(k / (n - k))
    U = np.zeros((n, n))
    U[:, 0] = 1.0 / np.sqrt(n)
    U[:k, 1] = mu_I / np.sqrt(n)
    U[k:, 1] = mu_E / np.sqrt(n)
    U[:k, 2 : k + 1] = _householder_complement(k)
    U[k:, k + 1 :] = _householder_complement(n - k)
    U.setflags(write=False)
    return U


def build_basis(p: ModelParams) -> OrthonormalBasis:
    k = p.fn_count
    if k <= 0 or k >= p.n:
        raise ValueError("both blocks must be nonempty")
    derive_mu(p)
    return OrthonormalBasis(_basis_columns(p.n, k), k)


def _check_dim(U: OrthonormalBasis, size: int):
    if size != U.n:
        raise ValueError(f"dimension mismatch: basis has n={U.n}, got {size}")


def to_tilde(U: OrthonormalBasis, x: np.ndarray) -> np.ndarray:
    """Coordinates y_i = (x, u_i)."""
    x = np.asarray(x, dtype=float)
    _check_dim(U, x.shape[0])
    return U.columns.T @ x


def from_tilde(U: OrthonormalBasis, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    _check_dim(U, y.shape[0])
    return U.columns @ y


def conjugate_matrix(U: OrthonormalBasis, W) -> np.ndarray:
    """U^T W U; accepts a ConstrainedMatrix, an (n, n) array or a stack (..., n, n)."""
    entries = np.asarray(getattr(W, "entries", W), dtype=float)
    if entries.shape[-2:] != (U.n, U.n):
        raise ValueError(f"dimension mismatch: basis has n={U.n}, matrix shape {entries.shape}")
    Uc = U.columns
    return Uc.T @ entries @ Uc


def tilde_column_variances(p: ModelParams) -> np.ndarray:
    """Column variances of U^T W U: (0, sI*sE/s*, sI, ..., sI, sE, ..., sE)."""
    k = p.fn_count
    out = np.empty(p.n)
    out[0] = 0.0
    out[1] = p.sigma_I * p.sigma_E / sigma_star(p)
    out[2 : k + 1] = p.sigma_I
    out[k + 1 :] = p.sigma_E
    return out
