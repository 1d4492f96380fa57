import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eistab.params import (
    InitialCondition,
    ModelParams,
    NoiseLaw,
    amplitude_A,
    derive_mu,
    draw_noise,
    norm_bound_L,
    sigma_star,
    sigma_star_limit,
)
from eistab.matrix import assemble_rank_one


def test_derive_mu_symmetric():
    assert derive_mu(ModelParams(100, 0.5, 1, 1)) == pytest.approx((-1.0, 1.0), abs=1e-15)


def test_derive_mu_asymmetric():
    assert derive_mu(ModelParams(100, 0.2, 1, 1)) == pytest.approx((-2.0, 0.5), abs=1e-15)


def test_empty_block_rejected():
    with pytest.raises(ValueError):
        ModelParams(10, 0.05, 1, 1)


def test_fn_count_floor_is_robust_to_binary_fractions():
    assert ModelParams(10, 0.3, 1, 1).fn_count == 3
    assert ModelParams(100, 0.29, 1, 1).fn_count == 29


@pytest.mark.parametrize("kwargs", [
    dict(n=1, f=0.5, sigma_I=1, sigma_E=1),
    dict(n=10, f=0.0, sigma_I=1, sigma_E=1),
    dict(n=10, f=1.0, sigma_I=1, sigma_E=1),
    dict(n=10, f=0.5, sigma_I=0, sigma_E=1),
    dict(n=10, f=0.5, sigma_I=1, sigma_E=-1),
    dict(n=10, f=0.5, sigma_I=1, sigma_E=1, a=-0.1),
])
def test_invalid_params(kwargs):
    with pytest.raises(ValueError):
        ModelParams(**kwargs)


def test_sigma_star_examples():
    assert sigma_star(ModelParams(4, 0.25, 2, 1)) == pytest.approx(1.25)
    assert sigma_star(ModelParams(3, 0.5, 3, 0.6)) == pytest.approx(1.4)
    for f in (0.1, 0.37, 0.8):
        assert sigma_star(ModelParams(50, f, 1.7, 1.7)) == pytest.approx(1.7)


def test_amplitude_examples():
    p = ModelParams(100, 0.5, 1, 1)
    assert amplitude_A(p, InitialCondition(2, 2, sigma0_I=1, sigma0_E=1)) == pytest.approx(1.0)
    assert amplitude_A(p, InitialCondition(1, 0)) == pytest.approx(0.25)
    q = ModelParams(100, 0.3, 2.5, 0.7)
    assert amplitude_A(q, InitialCondition(-1.5, -1.5)) == 0.0


def test_norm_bound_examples():
    assert norm_bound_L(ModelParams(10, 0.5, 4, 1)) == pytest.approx(2)
    assert norm_bound_L(ModelParams(10, 0.5, 1, 1)) == pytest.approx(1)
    assert norm_bound_L(ModelParams(10, 0.5, 0.25, 2.25)) == pytest.approx(1.5)


@given(n=st.integers(2, 5000), f=st.floats(0.001, 0.999))
def test_mean_vector_orthonormality(n, f):
    k = math.floor(f * n + 1e-9)
    if k < 1 or k > n - 1:
        return
    m = assemble_rank_one(ModelParams(n, f, 1, 1)).m_vector
    assert abs(m.sum()) <= 1e-12 * math.sqrt(n)
    assert abs(m @ m - 1) <= 1e-12
    mu_I, mu_E = derive_mu(ModelParams(n, f, 1, 1))
    assert k * mu_I + (n - k) * mu_E == pytest.approx(0, abs=1e-9)
    assert k * mu_I**2 + (n - k) * mu_E**2 == pytest.approx(n, rel=1e-12)


@given(sI=st.floats(0.01, 10), sE=st.floats(0.01, 10), d=st.floats(0.01, 5), f=st.floats(0.05, 0.95))
def test_sigma_star_monotone(sI, sE, d, f):
    p = ModelParams(40, f, sI, sE)
    if not 1 <= p.fn_count <= 39:
        return
    assert sigma_star(p.with_(sigma_I=sI + d)) >= sigma_star(p)
    assert sigma_star(p.with_(sigma_E=sE + d)) >= sigma_star(p)


@given(f=st.floats(0.05, 0.95), sI=st.floats(0.1, 5), sE=st.floats(0.1, 5),
       cI=st.floats(-3, 3), cE=st.floats(-3, 3), s0I=st.floats(0, 2), s0E=st.floats(0, 2))
def test_amplitude_swap_symmetry(f, sI, sE, cI, cE, s0I, s0E):
    a = amplitude_A(ModelParams(1000, f, sI, sE), InitialCondition(cI, cE, sigma0_I=s0I, sigma0_E=s0E))
    b = amplitude_A(ModelParams(1000, 1 - f, sE, sI), InitialCondition(cE, cI, sigma0_I=s0E, sigma0_E=s0I))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-14)
    assert a >= 0


def test_sigma_star_limit_uses_exact_fraction():
    p = ModelParams(3, 0.5, 3, 0.6)
    assert sigma_star_limit(p) == pytest.approx(1.8)
    assert sigma_star(p) == pytest.approx(1.4)


@pytest.mark.parametrize("law", list(NoiseLaw))
def test_noise_laws_mean_and_variance(law):
    rng = np.random.default_rng(7)
    var = 0.0 if law is NoiseLaw.POINT_MASS else 0.7
    x = draw_noise(law, var, 200_000, rng)
    assert abs(x.mean()) < 5 * math.sqrt(var / x.size) + 1e-15
    if var > 0:
        # variance of the sample variance is (mu4 - var^2)/N; mu4 <= 3 var^2 for these laws
        assert x.var() == pytest.approx(var, abs=5 * math.sqrt(2 * var**2 / x.size))
    else:
        assert np.all(x == 0)


def test_point_mass_requires_zero_variance():
    with pytest.raises(ValueError):
        InitialCondition(nu_I="point_mass", sigma0_I=0.1)


def test_initial_condition_sample_offsets(rng):
    p = ModelParams(10, 0.3, 1, 1)
    ic = InitialCondition(1.0, -2.0, "point_mass", "point_mass")
    x = ic.sample(p, rng)
    assert np.all(x[:3] == 1.0) and np.all(x[3:] == -2.0)
