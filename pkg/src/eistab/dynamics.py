"""Free linear flow x' = Jx and its lift to x' = -kappa x + (J + aM) x."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .params import ModelParams

MAX_STEP = 0.01
MIN_STEP = 1e-9
ORACLE_MAX_DIM = 64


class IntegrationError(RuntimeError):
    pass


@dataclass
class Trajectory:
    time_grid: np.ndarray
    states: np.ndarray  # (K+1, n) or (K+1, n, r)
    w_values: Optional[np.ndarray] = None  # (K+1,) or (K+1, r)
    full_states: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)


def _as_apply(J):
    if isinstance(J, np.ndarray):
        return lambda x: J @ x
    op = J if isinstance(J, LinearOperator) else aslinearoperator(J)
    return op.dot


def operator_norm_estimate(J, iters: int = 30) -> float:
    """Largest singular value of J by power iteration on J^T J.

    The start vector is deterministic and deliberately not parallel to the
    all-ones vector, which the constrained J annihilates.
    """
    if isinstance(J, np.ndarray):
        fwd, adj = (lambda x: J @ x), (lambda x: J.T @ x)
        n = J.shape[1]
    else:
        op = J if isinstance(J, LinearOperator) else aslinearoperator(J)
        fwd, adj, n = op.matvec, op.rmatvec, op.shape[1]
    v = np.cos(0.7548776662466927 * np.arange(1, n + 1) * np.pi) + 1e-3
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = adj(fwd(v))
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        est = math.sqrt(nrm)
        v = w / nrm
    return est


def _cumulative_simpson(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Cumulative integral by piecewise-quadratic (Simpson) rules.

    Consecutive interval pairs use the three-point rule, which is exact for
    cubics on uniform pairs; the left half of a pair and a trailing odd
    interval integrate the interpolating quadratic.  Works on nonuniform grids.
    """
    K = len(times) - 1
    out = np.zeros_like(values, dtype=float)
    if K == 1:
        out[1] = 0.5 * (times[1] - times[0]) * (values[0] + values[1])
        return out
    i = 0
    while i < K:
        if i + 2 <= K:
            a, b, c = i, i + 1, i + 2
        else:
            a, b, c = i - 1, i, i + 1
        h1, h2 = times[b] - times[a], times[c] - times[b]
        H = h1 + h2
        f0, f1, f2 = values[a], values[b], values[c]
        total = H / 6.0 * ((2.0 - h2 / h1) * f0 + H * H / (h1 * h2) * f1 + (2.0 - h1 / h2) * f2)
        left = (h1 * (2 * h1 + 3 * h2) / (6 * H)) * f0 + (h1 * (h1 + 3 * h2) / (6 * h2)) * f1 \
            - (h1**3 / (6 * h2 * H)) * f2
        if i + 2 <= K:
            out[i + 1] = out[i] + left
            out[i + 2] = out[i] + total
            i += 2
        else:
            out[i + 1] = out[i] + (total - left)
            i += 1
    return out


def accumulate_w(traj_or_times, values=None, m_vector=None) -> np.ndarray:
    """Cumulative integral of (x(s), m) over the grid, with w(0) = 0.

    Call either as ``accumulate_w(times, values)`` with the sampled integrand
    or as ``accumulate_w(traj, m_vector=m)`` to integrate (states, m).
    """
    if isinstance(traj_or_times, Trajectory):
        times = traj_or_times.time_grid
        if m_vector is None:
            raise ValueError("m_vector is required when passing a Trajectory")
        values = np.tensordot(traj_or_times.states, m_vector, axes=([1], [0]))
    else:
        times = np.asarray(traj_or_times, dtype=float)
        values = np.asarray(values, dtype=float)
    if len(times) < 2:
        raise ValueError("need at least two grid points")
    return _cumulative_simpson(times, values)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 1 or grid[0] != 0.0:
        raise ValueError("time grid must be one-dimensional and start at 0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return grid


def _rk4_run(apply, x0, grid, h_max, m_vector):
    states = np.empty((len(grid),) + x0.shape)
    states[0] = x0
    x = x0.copy()
    fine_t = [0.0]
    fine_v = [m_vector @ x] if m_vector is not None else None
    n_steps = 0
    for k in range(len(grid) - 1):
        dt = grid[k + 1] - grid[k]
        sub = max(2, math.ceil(dt / h_max - 1e-12))
        sub += sub % 2  # even substeps so Simpson pairs land on grid points
        h = dt / sub
        for j in range(sub):
            k1 = apply(x)
            k2 = apply(x + (0.5 * h) * k1)
            k3 = apply(x + (0.5 * h) * k2)
            k4 = apply(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if fine_v is not None:
                fine_t.append(grid[k] + (j + 1) * h)
                fine_v.append(m_vector @ x)
        n_steps += sub
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"non-finite state at t={grid[k + 1]}")
        states[k + 1] = x
        if fine_v is not None:
            fine_t[-1] = grid[k + 1]
    w = None
    if fine_v is not None:
        fine_t = np.asarray(fine_t)
        w_fine = _cumulative_simpson(fine_t, np.asarray(fine_v))
        idx = np.searchsorted(fine_t, grid)
        w = w_fine[idx]
    return states, w, n_steps


def propagate_free(J, x0, grid, tol: float = 1e-6, *, m_vector=None, step: float | None = None,
                   verify: bool = False, norm_estimate: float | None = None) -> Trajectory:
    """Integrate x' = Jx with classical RK4 on a fixed step.

    The step is ``min(0.01, 0.1 / ||J||_est)`` unless ``step`` is given.  With
    ``m_vector`` the observable w(t) = int_0^t (x(s), m) ds is accumulated on
    the integrator grid.  With ``verify`` the run is repeated at half step
    until the Richardson estimate of the endpoint error per unit time is
    below ``tol``.

    ``J`` may be a dense array or a LinearOperator; ``x0`` may be a vector or an
    (n, r) block of vectors integrated together.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = _check_grid(grid)
    x0 = np.asarray(x0, dtype=float)
    apply = _as_apply(J)
    if norm_estimate is None:
        norm_estimate = operator_norm_estimate(J)
    h = step if step is not None else (MAX_STEP if norm_estimate == 0 else min(MAX_STEP, 0.1 / norm_estimate))
    if len(grid) == 1:
        w = np.zeros((1,) + x0.shape[1:]) if m_vector is not None else None
        return Trajectory(grid, x0[None].copy(), w, diagnostics={"step": h, "norm_estimate": norm_estimate})

    states, w, n_steps = _rk4_run(apply, x0, grid, h, m_vector)
    diag = {"step": h, "norm_estimate": norm_estimate, "n_steps": n_steps}
    if verify:
        t_end = grid[-1]
        while True:
            if h / 2 < MIN_STEP:
                raise IntegrationError("step-size underflow while meeting tolerance")
            half_states, half_w, half_steps = _rk4_run(apply, x0, grid, h / 2, m_vector)
            scale = max(np.linalg.norm(half_states[-1]), np.finfo(float).tiny)
            err = np.linalg.norm(states[-1] - half_states[-1]) / scale / 15.0
            states, w, n_steps, h = half_states, half_w, half_steps, h / 2
            diag.update(step=h, n_steps=n_steps, error_estimate=err / t_end)
            if err / t_end <= tol:
                break
    return Trajectory(grid, states, w, diagnostics=diag)


def full_solution(traj: Trajectory, p: ModelParams, m_vector=None) -> Trajectory:
    """Closed-form lift of the free trajectory:

    x(t) = exp(-kappa t) (x_free(t) + a w(t) u).
    """
    if traj.w_values is None:
        raise ValueError("trajectory has no accumulated w; propagate with m_vector")
    t = traj.time_grid
    decay = np.exp(-p.kappa * t)
    shape = (-1,) + (1,) * (traj.states.ndim - 1)
    w = traj.w_values
    w_b = w[:, None] if w.ndim == 1 else w[:, None, :]
    full = decay.reshape(shape) * (traj.states + p.a * w_b)
    return replace(traj, full_states=full)


def _expm_taylor(X: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Scaling-and-squaring with a truncated Taylor series.

    The series is cut once the tail bound ||Y||^(K+1)/(K+1)! / (1 - ||Y||/(K+2))
    falls below rtol * 2^-s, so the error after s squarings stays under rtol.
    """
    n = X.shape[0]
    norm = np.linalg.norm(X, 1)
    s = max(0, math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0
    Y = X / (2.0**s)
    ny = norm / (2.0**s)
    target = rtol * 2.0**-s
    result = np.eye(n)
    term = np.eye(n)
    k = 0
    while True:
        k += 1
        term = term @ Y / k
        result = result + term
        tail = ny ** (k + 1) / math.factorial(k + 1) / max(1e-300, 1.0 - ny / (k + 2))
        if tail <= target or k > 60:
            break
    for _ in range(s):
        result = result @ result
    return result


def reference_expm_small(M: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(tM) for dense matrices up to 64 x 64 (test oracle)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if M.shape[0] > ORACLE_MAX_DIM:
        raise ValueError(f"oracle limited to {ORACLE_MAX_DIM}x{ORACLE_MAX_DIM}, got {M.shape}")
    return _expm_taylor(t * M)


def integrated_exponential(J: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """(exp(tJ), int_0^t exp(sJ) ds) from the exponential of [[J, I], [0, 0]]."""
    n = J.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = J
    aug[:n, n:] = np.eye(n)
    E = _expm_taylor(t * aug)
    return E[:n, :n], E[:n, n:] * 1.0


def check_rank_one_identities(W, m_vector: np.ndarray, a: float, t: float, rng=None) -> dict:
    """Deviations of M^2 = 0, JM = 0 and the exponential splitting identity."""
    entries = np.asarray(getattr(W, "entries", W), dtype=float)
    n = entries.shape[0]
    if n > ORACLE_MAX_DIM:
        raise ValueError(f"identity check limited to n <= {ORACLE_MAX_DIM}")
    rng = np.random.default_rng(0) if rng is None else rng
    J = entries / np.sqrt(n)
    u = np.ones(n)
    x = rng.standard_normal(n)
    Mx = (m_vector @ x) * u
    M2x = (m_vector @ Mx) * u
    JMx = J @ Mx
    lhs = reference_expm_small(J + a * m_vector[None, :], t)
    expJ, intJ = integrated_exponential(J, t)
    rhs = expJ + a * np.outer(u, m_vector @ intJ)
    return {
        "M2x": float(np.max(np.abs(M2x))),
        "JMx": float(np.max(np.abs(JMx))),
        "expm_identity": float(np.max(np.abs(lhs - rhs))),
        "expm_scale": float(np.max(np.abs(lhs))),
    }


def export_trajectory_csv(traj: Trajectory, states_path, w_path=None):
    """Long-format (t, i, x_i(t)) table and, if accumulated, the (t, w) table."""
    from .results import write_csv

    states = np.asarray(traj.states)
    if states.ndim != 2:
        raise ValueError("export expects a single trajectory of shape (K+1, n)")
    rows = ((t, i, x) for t, xs in zip(traj.time_grid, states) for i, x in enumerate(xs))
    write_csv(states_path, ["t", "i", "x"], rows)
    if w_path is not None:
        if traj.w_values is None:
            raise ValueError("trajectory has no accumulated w")
        write_csv(w_path, ["t", "w"], zip(traj.time_grid, traj.w_values))
