"""Large-n predictions: variance series, limiting CDF, covariance kernels, w statistics."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .params import (
    InitialCondition,
    ModelParams,
    NoiseLaw,
    amplitude_A,
    derive_mu,
    sigma_star_limit,
)

SERIES_RTOL = 1e-14
SERIES_MAX_TERMS = 300


class SeriesWarning(RuntimeWarning):
    pass


def _bessel_tail(x: float, rtol: float = SERIES_RTOL, max_terms: int = SERIES_MAX_TERMS) -> tuple[float, bool]:
    """sum_{m>=1} x^m / (m!)^2 for x >= 0, i.e. I0(2 sqrt(x)) - 1 without cancellation."""
    if x < 0:
        raise ValueError("series argument must be nonnegative")
    if x == 0:
        return 0.0, True
    term = x
    total = x
    for m in range(2, max_terms + 1):
        term *= x / (m * m)
        total += term
        if term < rtol * total:
            return total, True
        if not math.isfinite(total):
            return total, False
    return total, False


@dataclass(frozen=True)
class VarianceSeries:
    """A sigma_*^{-1} sum_{m>=1} sigma_*^m t^{2m} / (m!)^2."""

    A: float
    sigma_star: float
    truncation_tol: float = SERIES_RTOL
    max_terms: int = SERIES_MAX_TERMS

    def __call__(self, t: float) -> float:
        if t < 0:
            raise ValueError("t must be nonnegative")
        tail, ok = _bessel_tail(self.sigma_star * t * t, self.truncation_tol, self.max_terms)
        if not ok:
            warnings.warn(f"variance series did not converge at t={t}", SeriesWarning, stacklevel=2)
        return self.A / self.sigma_star * tail


def sigma_tilde(A: float, sigma_star: float, t: float) -> float:
    """Limiting variance added to each coordinate by time t."""
    if A < 0 or sigma_star <= 0:
        raise ValueError("need A >= 0 and sigma_star > 0")
    return VarianceSeries(A, sigma_star)(float(t))


def sigma_tilde_bessel(A: float, sigma_star: float, t: float, dps: int = 40) -> float:
    """Closed form A/sigma_* (I0(2 sqrt(sigma_*) t) - 1) at extended precision."""
    import mpmath

    with mpmath.workdps(dps):
        val = mpmath.mpf(A) / sigma_star * (mpmath.besseli(0, 2 * mpmath.sqrt(sigma_star) * t) - 1)
        return float(val)


def R0_kernel(A: float, sigma_star: float, t: float, s: float) -> float:
    """A * I0(2 sqrt(sigma_* t s)) as a power series."""
    if t < 0 or s < 0:
        raise ValueError("times must be nonnegative")
    tail, _ = _bessel_tail(sigma_star * t * s)
    return A * (1.0 + tail)


def R12_kernel(p: ModelParams, ic: InitialCondition, t: float, s: float) -> tuple[float, float]:
    """Limiting E{x_1(t) x_1(s)} (inhibitory) and E{x_n(t) x_n(s)} (excitatory)."""
    if t < 0 or s < 0:
        raise ValueError("times must be nonnegative")
    s_star = sigma_star_limit(p)
    A = amplitude_A(p, ic)
    tail, _ = _bessel_tail(s_star * t * s)
    growth = A / s_star * tail
    return ic.second_moment_I + growth, ic.second_moment_E + growth


def weighted_mean_offset(p: ModelParams, ic: InitialCondition) -> float:
    """sigma_I f c_I + sigma_E (1-f) c_E."""
    return p.sigma_I * p.f * ic.c_I + p.sigma_E * (1.0 - p.f) * ic.c_E


def block_variance(p: ModelParams, ic: InitialCondition, t: float) -> tuple[float, float]:
    """Limiting within-block variance of x_i(t): (sigma0_I + sigma~(t), sigma0_E + sigma~(t))."""
    st = sigma_tilde(amplitude_A(p, ic), sigma_star_limit(p), t)
    return ic.sigma0_I + st, ic.sigma0_E + st


# -- limiting distribution -------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _step(z, left: bool):
    return (z > 0).astype(float) if left else (z >= 0).astype(float)


def _normal_cdf(z, scale: float, left: bool):
    if scale == 0.0:
        return _step(z, left)
    return ndtr(z / scale)


def _gauss_integral(z):
    # int_{-inf}^{z} Phi(y) dy
    return z * ndtr(z) + np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def convolved_cdf(law: NoiseLaw, variance: float, center: float, spread: float, lam, left: bool = False):
    """CDF at ``lam`` of (noise with ``law``/``variance``) + N(center, spread).

    ``left=True`` returns the left limit, which only differs where the result
    has atoms (no Gaussian spread and a discrete noise law).
    """
    lam = np.asarray(lam, dtype=float)
    z = lam - center
    law = NoiseLaw(law)
    if law is NoiseLaw.GAUSSIAN:
        return _normal_cdf(z, math.sqrt(variance + spread), left)
    s = math.sqrt(spread)
    if law is NoiseLaw.POINT_MASS or variance == 0:
        return _normal_cdf(z, s, left)
    b = math.sqrt(variance)
    if law is NoiseLaw.RADEMACHER:
        return 0.5 * (_normal_cdf(z - b, s, left) + _normal_cdf(z + b, s, left))
    half = math.sqrt(3.0) * b
    if s == 0.0:
        return np.clip((z + half) / (2 * half), 0.0, 1.0)
    # uniform on [-half, half] convolved with N(0, s^2), exact antiderivative form
    return s / (2 * half) * (_gauss_integral((z + half) / s) - _gauss_integral((z - half) / s))


def convolved_cdf_quadrature(law: NoiseLaw, variance: float, center: float, spread: float, lam):
    """Same as :func:`convolved_cdf` for the uniform law, by 64-point Gauss-Legendre."""
    if NoiseLaw(law) is not NoiseLaw.UNIFORM:
        raise ValueError("quadrature path is for the uniform law")
    lam = np.asarray(lam, dtype=float)
    half = math.sqrt(3.0 * variance)
    s = math.sqrt(spread)
    xs = half * _GL_NODES
    vals = ndtr((lam[..., None] - center - xs) / s) if s > 0 else _step(lam[..., None] - center - xs, False)
    return (vals * _GL_WEIGHTS).sum(axis=-1) / 2.0


def limit_cdf(p: ModelParams, ic: InitialCondition, t: float, lam, left: bool = False):
    """f N_I(lam, t) + (1-f) N_E(lam, t)."""
    A = amplitude_A(p, ic)
    spread = sigma_tilde(A, sigma_star_limit(p), t) if t > 0 else 0.0
    if not math.isfinite(spread):
        raise OverflowError(f"variance series overflows at t={t}")
    F_I = convolved_cdf(ic.nu_I, ic.sigma0_I, ic.c_I, spread, lam, left)
    F_E = convolved_cdf(ic.nu_E, ic.sigma0_E, ic.c_E, spread, lam, left)
    return p.f * F_I + (1.0 - p.f) * F_E


# -- the observable w_n(t) ------------------------------------------------

def w_mean(p: ModelParams, ic: InitialCondition, t: float) -> float:
    """sqrt(n) t (f c_I mu_I + (1-f) c_E mu_E) with f = floor(fn)/n, i.e. t (c, m)."""
    mu_I, mu_E = derive_mu(p)
    fn = p.fn_count / p.n
    return math.sqrt(p.n) * t * (fn * ic.c_I * mu_I + (1.0 - fn) * ic.c_E * mu_E)


def initial_projection_variance(p: ModelParams, ic: InitialCondition, weights: str = "printed") -> float:
    """Variance of (xi, m): (1-f) sigma0_I + f sigma0_E.

    ``weights="naive"`` gives the block-fraction mixture f sigma0_I + (1-f) sigma0_E.
    """
    f = p.f
    if weights == "printed":
        return (1.0 - f) * ic.sigma0_I + f * ic.sigma0_E
    if weights == "naive":
        return f * ic.sigma0_I + (1.0 - f) * ic.sigma0_E
    raise ValueError(f"unknown weights {weights!r}")


def w_variance(p: ModelParams, ic: InitialCondition, t: float, weights: str = "printed") -> float:
    """Limiting variance attributed to w_n(t) when c_I = c_E.

    Returns (1-f) sigma0_I + f sigma0_E + sigma~(t).  This is the variance of
    the projection (x(t), m) at time t; for the time integral itself see
    :func:`w_integral_variance`.
    """
    if ic.c_I != ic.c_E:
        raise ValueError("w_variance applies only when c_I == c_E (Gaussian branch)")
    st = sigma_tilde(amplitude_A(p, ic), sigma_star_limit(p), t)
    return initial_projection_variance(p, ic, weights) + st


def w_integral_variance(p: ModelParams, ic: InitialCondition, t: float, weights: str = "printed") -> float:
    """Limiting variance of int_0^t (x(s), m) ds when c_I = c_E.

    Integrating the covariance of the projection, sigma_y + A sum_m
    sigma_*^m (s s')^(m+1) / ((m+1)!)^2, over [0, t]^2 gives

        sigma_y t^2 + A sum_{m>=0} sigma_*^m t^(2m+4) / (((m+1)!)^2 (m+2)^2).
    """
    if ic.c_I != ic.c_E:
        raise ValueError("w_integral_variance applies only when c_I == c_E")
    s_star = sigma_star_limit(p)
    A = amplitude_A(p, ic)
    total = 0.0
    x = s_star * t * t
    term = t**4  # sigma_*^m t^(2m+4) / ((m+1)!)^2 at m = 0
    for m in range(SERIES_MAX_TERMS):
        if m > 0:
            term *= x / ((m + 1) ** 2)
        contrib = term / (m + 2) ** 2
        total += contrib
        if m > 0 and contrib < SERIES_RTOL * total:
            break
    return initial_projection_variance(p, ic, weights) * t * t + A * total


# -- stability -------------------------------------------------------------

@dataclass
class StabilityReport:
    kappa: float
    sigma_star: float
    A: float
    t_max: float
    times: np.ndarray
    log_decay: np.ndarray  # log(exp(-2 kappa t) sigma~(t)), -inf where sigma~ = 0
    eventually_decreasing: bool
    critical_kappa: float
    candidate_sigma_star: float
    candidate_sqrt_sigma_star: float

    @property
    def closer_candidate(self) -> str:
        d1 = abs(self.critical_kappa - self.candidate_sigma_star)
        d2 = abs(self.critical_kappa - self.candidate_sqrt_sigma_star)
        return "sigma_star" if d1 < d2 else "sqrt_sigma_star"


def _log_sigma_tilde(A, s_star, times):
    out = np.full(len(times), -np.inf)
    for i, t in enumerate(times):
        if t > 0 and A > 0:
            tail, _ = _bessel_tail(s_star * t * t, max_terms=100000)
            out[i] = math.log(A / s_star) + math.log(tail)
    return out


def _decreasing_tail(log_st, times, kappa, tail_fraction):
    start = np.searchsorted(times, times[-1] * (1.0 - tail_fraction))
    seg = log_st[start:] - 2.0 * kappa * times[start:]
    if not np.all(np.isfinite(seg)):
        return True  # no growth at all
    return bool(np.all(np.diff(seg) < 0))


def stability_report(p: ModelParams, ic: InitialCondition, t_max: float, n_grid: int = 2001,
                     tail_fraction: float = 0.1) -> StabilityReport:
    """Scan exp(-2 kappa t) sigma~(t) on [0, t_max].

    ``critical_kappa`` is the smallest leak rate for which the decay factor is
    strictly decreasing over the last ``tail_fraction`` of the window, found by
    bisection on the sampled curve.  Both threshold candidates, sigma_* and
    sqrt(sigma_*), are reported alongside; neither is assumed.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    s_star = sigma_star_limit(p)
    A = amplitude_A(p, ic)
    times = np.linspace(0.0, t_max, n_grid)
    log_st = _log_sigma_tilde(A, s_star, times)
    decreasing = _decreasing_tail(log_st, times, p.kappa, tail_fraction)
    if A == 0:
        crit = 0.0
    else:
        lo, hi = 0.0, 1.0
        while not _decreasing_tail(log_st, times, hi, tail_fraction):
            hi *= 2.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _decreasing_tail(log_st, times, mid, tail_fraction):
                hi = mid
            else:
                lo = mid
        crit = hi
    return StabilityReport(
        kappa=p.kappa, sigma_star=s_star, A=A, t_max=t_max, times=times,
        log_decay=log_st - 2.0 * p.kappa * times,
        eventually_decreasing=decreasing, critical_kappa=crit,
        candidate_sigma_star=s_star, candidate_sqrt_sigma_star=math.sqrt(s_star),
    )


def oracle_table(p: ModelParams, ic: InitialCondition, times) -> list[tuple]:
    """Rows (t, sigma~(t), R0(t, t), w_mean(t), w_var(t)); w_var is NaN off the equal-offset branch."""
    s_star = sigma_star_limit(p)
    A = amplitude_A(p, ic)
    rows = []
    for t in times:
        t = float(t)
        wv = w_variance(p, ic, t) if ic.c_I == ic.c_E else math.nan
        rows.append((t, sigma_tilde(A, s_star, t), R0_kernel(A, s_star, t, t), w_mean(p, ic, t), wv))
    return rows


def write_oracle_csv(path, p: ModelParams, ic: InitialCondition, times):
    from .results import write_csv

    return write_csv(path, ["t", "sigma_tilde", "R0_tt", "w_mean", "w_var"], oracle_table(p, ic, times))
