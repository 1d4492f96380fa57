"""Empirical estimators for single runs and ensembles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import ndtr

from .params import InitialCondition, ModelParams, norm_bound_L
from . import theory


ROUNDOFF_VAR = 1e-24


def counting_measure(x, lam):
    """Fraction of coordinates with x_i <= lam (Heaviside with theta(0) = 1)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty state vector")
    xs = np.sort(x)
    return np.searchsorted(xs, lam, side="right") / x.size


def stieltjes(x, z: complex) -> complex:
    """n^-1 sum 1/(x_i - z); ``x`` may carry leading batch axes."""
    z = complex(z)
    if z.imag == 0:
        raise ValueError("Stieltjes transform needs Im z != 0")
    x = np.asarray(x, dtype=float)
    return np.mean(1.0 / (x - z), axis=-1)


def ks_distance(sample, cdf, cdf_left=None) -> float:
    """sup_lam |F_n(lam) - F(lam)| evaluated at the sorted sample points.

    ``cdf_left`` supplies F(lam-) when the reference has atoms; by default F
    is taken continuous.  Meaningful for roughly 100+ points.
    """
    xs = np.sort(np.asarray(sample, dtype=float).ravel())
    n = xs.size
    if n == 0:
        raise ValueError("empty sample")
    F = np.asarray(cdf(xs), dtype=float)
    F_left = F if cdf_left is None else np.asarray(cdf_left(xs), dtype=float)
    i = np.arange(1, n + 1)
    upper = np.max(i / n - F)
    lower = np.max(F_left - (i - 1) / n)
    return float(max(upper, lower, 0.0))


def block_variances(x, p: ModelParams) -> tuple[float, float]:
    """Population variance of the coordinates within each block (axis -1)."""
    x = np.asarray(x, dtype=float)
    k = p.fn_count
    return np.var(x[..., :k], axis=-1), np.var(x[..., k:], axis=-1)


def empirical_R(traj, t: float, s: float, p: ModelParams) -> float:
    """n^-1 sum_j sigma_j x_j(t) x_j(s) for one trajectory."""
    grid = np.asarray(traj.time_grid)

    def index(v):
        hits = np.flatnonzero(np.isclose(grid, v, rtol=0, atol=1e-12))
        if hits.size == 0:
            raise ValueError(f"time {v} is not on the trajectory grid")
        return hits[0]

    xt, xs = traj.states[index(t)], traj.states[index(s)]
    return float(np.mean(p.sigma_vector * xt * xs))


@dataclass
class DecayFit:
    n_values: np.ndarray
    variances: np.ndarray
    slope: float
    slope_se: float
    intercept: float
    degenerate: bool = False


def fit_log_slope(n_values, variances) -> DecayFit:
    n_values = np.asarray(n_values, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if np.any(variances <= 0) or not np.all(np.isfinite(variances)):
        return DecayFit(n_values, variances, math.nan, math.nan, math.nan, degenerate=True)
    X, Y = np.log(n_values), np.log(variances)
    coef, cov = np.polyfit(X, Y, 1, cov=True) if len(X) > 2 else (np.polyfit(X, Y, 1), np.full((2, 2), np.nan))
    return DecayFit(n_values, variances, float(coef[0]), float(math.sqrt(cov[0, 0])), float(coef[1]))


def trial_variance(values) -> float:
    """E|g - E g|^2 estimated over trials (unbiased); works for complex values."""
    v = np.asarray(values)
    return float(np.sum(np.abs(v - v.mean()) ** 2) / (v.size - 1))


def self_averaging_decay(samples: Mapping[int, Sequence[complex]], min_sizes: int = 4,
                         min_trials: int = 100) -> DecayFit:
    """Fit log Var_trials[g_n] against log n.

    ``samples`` maps n to the per-trial values of an observable (for instance
    g_n(z, t)).  A vanishing variance is flagged as ``degenerate`` with a NaN
    slope.
    """
    if len(samples) < min_sizes:
        raise ValueError(f"need at least {min_sizes} network sizes")
    ns = sorted(samples)
    for n in ns:
        if len(samples[n]) < min_trials:
            raise ValueError(f"need at least {min_trials} trials at n={n}, got {len(samples[n])}")
    variances = []
    for n in ns:
        v = trial_variance(samples[n])
        # spread at the level of rounding in the mean counts as none
        scale = float(np.mean(np.abs(np.asarray(samples[n])) ** 2))
        variances.append(0.0 if v <= ROUNDOFF_VAR * scale else v)
    return fit_log_slope(ns, variances)


# -- w_n(t) ------------------------------------------------------------------

@dataclass
class WnReport:
    branch: str  # "divergent" or "gaussian"
    n: int
    t: float
    n_trials: int
    sample_mean: float
    sample_variance: float
    predicted_mean: float = math.nan
    mean_ratio: float = math.nan
    mean_ratio_se: float = math.nan
    predicted_variance: float = math.nan
    predicted_variance_naive: float = math.nan
    variance_rel_error: float = math.nan
    variance_rel_error_naive: float = math.nan
    integral_variance: float = math.nan
    qq_max_deviation: float = math.nan
    extra: dict = field(default_factory=dict)


def qq_max_deviation(samples) -> float:
    """Largest gap between plotting positions (i - 1/2)/N and the fitted-Gaussian CDF.

    Measured on the probability scale of the Q-Q plot.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    N = x.size
    sd = x.std(ddof=1)
    if sd == 0:
        return 0.0
    probs = ndtr((x - x.mean()) / sd)
    pos = (np.arange(1, N + 1) - 0.5) / N
    return float(np.max(np.abs(probs - pos)))


def wn_tests(w_samples, p: ModelParams, ic: InitialCondition, t: float, branch: Optional[str] = None,
             min_trials: int = 200) -> WnReport:
    """Compare w_n(t) samples with the limiting mean (c_I != c_E) or variance (c_I == c_E)."""
    w = np.asarray(w_samples, dtype=float).ravel()
    natural = "gaussian" if ic.c_I == ic.c_E else "divergent"
    if branch is not None and branch != natural:
        raise ValueError(f"branch {branch!r} does not match the initial offsets (expected {natural!r})")
    if w.size < max(2, min_trials):
        raise ValueError(f"need at least {max(2, min_trials)} trials, got {w.size}")
    mean, var = float(w.mean()), float(w.var(ddof=1))
    rep = WnReport(natural, p.n, t, w.size, mean, var)
    if natural == "divergent":
        pred = theory.w_mean(p, ic, t)
        rep.predicted_mean = pred
        if pred != 0:
            rep.mean_ratio = mean / pred
            rep.mean_ratio_se = math.sqrt(var / w.size) / abs(pred)
    else:
        pv = theory.w_variance(p, ic, t, "printed")
        pn = theory.w_variance(p, ic, t, "naive")
        rep.predicted_variance = pv
        rep.predicted_variance_naive = pn
        rep.integral_variance = theory.w_integral_variance(p, ic, t)
        if pv > 0:
            rep.variance_rel_error = abs(var - pv) / pv
        if pn > 0:
            rep.variance_rel_error_naive = abs(var - pn) / pn
        rep.qq_max_deviation = qq_max_deviation(w)
    return rep


# -- spectrum ------------------------------------------------------------------

@dataclass
class SpectrumReport:
    eig_J: np.ndarray
    eig_J_prime: np.ndarray
    eig_unconstrained: Optional[np.ndarray]
    spectral_radius_J: float
    spectral_radius_J_prime: float
    spectral_radius_unconstrained: float
    norm_J: float
    norm_bound: float
    prime_vs_plain_deviation: float
    error: Optional[str] = None


def match_deviation(a, b) -> float:
    """Max distance under the optimal one-to-one matching of two eigenvalue multisets."""
    a, b = np.asarray(a), np.asarray(b)
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max())


def spectrum_diag(W, p: ModelParams, rank_one=None, match: bool = True) -> SpectrumReport:
    """Eigenvalues of J, of J' = J + aM and of the unconstrained J' built from the raw draw."""
    entries = np.asarray(W.entries, dtype=float)
    n = entries.shape[0]
    if n > 2000:
        raise ValueError("dense eigensolve limited to n <= 2000")
    from .matrix import assemble_rank_one

    rank_one = assemble_rank_one(p) if rank_one is None else rank_one
    J = entries / math.sqrt(n)
    mean_row = rank_one.a * rank_one.m_vector[None, :]  # every row of aM equals a*m
    nan = float("nan")
    try:
        eJ = np.linalg.eigvals(J)
        eJp = np.linalg.eigvals(J + mean_row)
        eU = None
        if getattr(W, "raw", None) is not None:
            eU = np.linalg.eigvals(W.raw / math.sqrt(n) + mean_row)
        norm = float(np.linalg.norm(J, 2))
    except np.linalg.LinAlgError as exc:
        empty = np.array([], dtype=complex)
        return SpectrumReport(empty, empty, None, nan, nan, nan, nan, norm_bound_L(p), nan, error=str(exc))
    dev = match_deviation(eJ, eJp) if match else nan
    return SpectrumReport(
        eig_J=eJ, eig_J_prime=eJp, eig_unconstrained=eU,
        spectral_radius_J=float(np.abs(eJ).max()),
        spectral_radius_J_prime=float(np.abs(eJp).max()),
        spectral_radius_unconstrained=float(np.abs(eU).max()) if eU is not None else nan,
        norm_J=norm, norm_bound=norm_bound_L(p), prime_vs_plain_deviation=dev,
    )
