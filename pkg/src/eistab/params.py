"""Model constants for the two-block (inhibitory/excitatory) random network."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class NoiseLaw(str, Enum):
    """Zero-mean law of the initial-condition noise, parameterized by its variance."""

    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    RADEMACHER = "rademacher"
    POINT_MASS = "point-mass"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            key = value.strip().lower().replace("_", "-")
            for member in cls:
                if member.value == key:
                    return member
        return None


@dataclass(frozen=True)
class ModelParams:
    """Ensemble constants.

    The first ``fn_count = floor(f * n)`` columns form the inhibitory block with
    column variance ``sigma_I``; the rest are excitatory with ``sigma_E``.
    """

    n: int
    f: float
    sigma_I: float
    sigma_E: float
    a: float = 1.0
    kappa: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n!r}")
        if not 0.0 < self.f < 1.0:
            raise ValueError(f"f must lie in (0, 1), got {self.f!r}")
        if not (self.sigma_I > 0 and self.sigma_E > 0):
            raise ValueError("column variances sigma_I, sigma_E must be positive")
        if self.a < 0:
            raise ValueError(f"a must be nonnegative, got {self.a!r}")
        k = self.fn_count
        if k < 1 or k > self.n - 1:
            raise ValueError(
                f"degenerate block split: floor(f*n) = {k} for n={self.n}, f={self.f}"
            )

    @property
    def fn_count(self) -> int:
        # guard against 0.29 * 100 = 28.999999999999996
        return int(math.floor(self.f * self.n + 1e-9))

    @property
    def sigma_vector(self) -> np.ndarray:
        """Per-column variances sigma_j, length n."""
        k = self.fn_count
        return np.concatenate([np.full(k, float(self.sigma_I)), np.full(self.n - k, float(self.sigma_E))])

    def with_(self, **changes) -> "ModelParams":
        fields = dict(n=self.n, f=self.f, sigma_I=self.sigma_I, sigma_E=self.sigma_E, a=self.a, kappa=self.kappa)
        fields.update(changes)
        return ModelParams(**fields)


@dataclass(frozen=True)
class InitialCondition:
    """x_i(0) = c_i + xi_i with block offsets and block noise laws."""

    c_I: float = 0.0
    c_E: float = 0.0
    nu_I: NoiseLaw = NoiseLaw.GAUSSIAN
    nu_E: NoiseLaw = NoiseLaw.GAUSSIAN
    sigma0_I: float = 0.0
    sigma0_E: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "nu_I", NoiseLaw(self.nu_I))
        object.__setattr__(self, "nu_E", NoiseLaw(self.nu_E))
        for law, var in ((self.nu_I, self.sigma0_I), (self.nu_E, self.sigma0_E)):
            if var < 0:
                raise ValueError("noise variances must be nonnegative")
            if law is NoiseLaw.POINT_MASS and var != 0:
                raise ValueError("a point-mass noise law has zero variance")

    @property
    def second_moment_I(self) -> float:
        return self.c_I**2 + self.sigma0_I

    @property
    def second_moment_E(self) -> float:
        return self.c_E**2 + self.sigma0_E

    def offsets(self, p: ModelParams) -> np.ndarray:
        k = p.fn_count
        return np.concatenate([np.full(k, float(self.c_I)), np.full(p.n - k, float(self.c_E))])

    def sample(self, p: ModelParams, rng: np.random.Generator) -> np.ndarray:
        """Draw x(0). The inhibitory block is drawn first, then the excitatory one."""
        k = p.fn_count
        xi_I = draw_noise(self.nu_I, self.sigma0_I, k, rng)
        xi_E = draw_noise(self.nu_E, self.sigma0_E, p.n - k, rng)
        return self.offsets(p) + np.concatenate([xi_I, xi_E])


def draw_noise(law: NoiseLaw, variance: float, size: int, rng: np.random.Generator) -> np.ndarray:
    law = NoiseLaw(law)
    scale = math.sqrt(variance)
    if law is NoiseLaw.GAUSSIAN:
        return scale * rng.standard_normal(size)
    if law is NoiseLaw.UNIFORM:
        half = math.sqrt(3.0) * scale
        return rng.uniform(-half, half, size)
    if law is NoiseLaw.RADEMACHER:
        return scale * (2.0 * rng.integers(0, 2, size) - 1.0)
    return np.zeros(size)


def derive_mu(p: ModelParams) -> tuple[float, float]:
    """Block means (mu_I, mu_E) making m orthogonal to (1, ..., 1) with unit norm."""
    k, n = p.fn_count, p.n
    if k <= 0 or k >= n:
        raise ValueError("both blocks must be nonempty")
    return -math.sqrt((n - k) / k), math.sqrt(k / (n - k))


def sigma_star(p: ModelParams) -> float:
    """Column-averaged variance using the integer block size."""
    k = p.fn_count
    return (k * p.sigma_I + (p.n - k) * p.sigma_E) / p.n


def sigma_star_limit(p: ModelParams) -> float:
    """f*sigma_I + (1-f)*sigma_E with the exact fraction f."""
    return p.f * p.sigma_I + (1.0 - p.f) * p.sigma_E


def amplitude_A(p: ModelParams, ic: InitialCondition) -> float:
    """Amplitude of the variance series (exact f, n -> infinity form)."""
    f = p.f
    s_star = sigma_star_limit(p)
    offset_term = p.sigma_I * p.sigma_E * f * (1.0 - f) * (ic.c_I - ic.c_E) ** 2 / s_star
    noise_term = p.sigma_I * ic.sigma0_I * f + p.sigma_E * ic.sigma0_E * (1.0 - f)
    return offset_term + noise_term


def norm_bound_L(p: ModelParams) -> float:
    return max(math.sqrt(p.sigma_I), math.sqrt(p.sigma_E))
