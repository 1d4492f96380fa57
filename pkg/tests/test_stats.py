import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import ndtr

from eistab import stats, theory
from eistab.dynamics import Trajectory, propagate_free
from eistab.matrix import assemble_rank_one, sample_projection
from eistab.params import InitialCondition, ModelParams
from eistab.streams import TrialStream


def test_counting_measure_examples():
    x = np.array([0.1, 0.5, 0.9])
    assert stats.counting_measure(x, 0.5) == pytest.approx(2 / 3)
    assert stats.counting_measure(x, -1e300) == 0 and stats.counting_measure(x, 1e300) == 1
    with pytest.raises(ValueError):
        stats.counting_measure([], 0.0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.floats(-1e6, 1e6), st.randoms())
def test_counting_measure_permutation_invariant(xs, lam, r):
    ys = list(xs)
    r.shuffle(ys)
    assert stats.counting_measure(xs, lam) == stats.counting_measure(ys, lam)


def test_stieltjes_examples():
    assert stats.stieltjes([0.0], 1j) == pytest.approx(1j)
    assert stats.stieltjes(np.full(7, 2.5), 0.3 + 2j) == pytest.approx(1 / (2.5 - 0.3 - 2j))
    with pytest.raises(ValueError):
        stats.stieltjes([1.0], 2.0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_stieltjes_bound(xs):
    assert abs(stats.stieltjes(xs, 1j)) <= 1 + 1e-12


def test_ks_examples():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(100):
        hits += stats.ks_distance(rng.standard_normal(1000), ndtr) <= 0.05
    assert hits >= 95
    # point mass at 0 against a standard normal: the jump straddles Phi(0) = 1/2
    assert stats.ks_distance(np.zeros(200), ndtr) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        stats.ks_distance([], ndtr)


def test_ks_with_atoms_uses_left_limit():
    x = np.array([0.0, 0.0, 1.0, 1.0])
    F = lambda lam: 0.5 * (lam >= 0) + 0.5 * (lam >= 1)
    Fl = lambda lam: 0.5 * (lam > 0) + 0.5 * (lam > 1)
    assert stats.ks_distance(x, F, Fl) == 0.0


def test_block_variances():
    p = ModelParams(6, 0.5, 1, 1)
    vI, vE = stats.block_variances(np.array([1.0, 2, 3, 10, 10, 10]), p)
    assert vI == pytest.approx(2 / 3) and vE == 0


def test_empirical_R_initial_deterministic():
    p = ModelParams(10, 0.3, 2, 0.5)
    x0 = InitialCondition(1.5, -1, "point-mass", "point-mass").offsets(p)
    tr = Trajectory(np.array([0.0, 1.0]), np.stack([x0, x0]))
    assert stats.empirical_R(tr, 0, 0, p) == pytest.approx(2 * 0.3 * 1.5**2 + 0.5 * 0.7 * 1.0)
    with pytest.raises(ValueError):
        stats.empirical_R(tr, 0.5, 0, p)


def test_empirical_R_ensemble_mean():
    p = ModelParams(500, 0.5, 2, 1)
    ic = InitialCondition(1, -1, sigma0_I=0.25, sigma0_E=0.25)
    grid = [0.0, 0.5, 1.0]
    vals = []
    for trial in range(20):
        ts = TrialStream(77, trial)
        W = sample_projection(p, ts)
        x0 = ic.sample(p, ts.generator())
        vals.append(stats.empirical_R(propagate_free(W.J, x0, grid), 1.0, 0.5, p))
    r1, r2 = theory.R12_kernel(p, ic, 1.0, 0.5)
    expect = p.sigma_I * p.f * r1 + p.sigma_E * (1 - p.f) * r2
    assert np.mean(vals) == pytest.approx(expect, rel=0.10)


def test_self_averaging_degenerate_and_errors():
    fit = stats.self_averaging_decay({n: [0.3 + 0.1j] * 100 for n in (10, 20, 40, 80)})
    assert fit.degenerate and math.isnan(fit.slope)
    with pytest.raises(ValueError):
        stats.self_averaging_decay({n: [0.0] * 100 for n in (10, 20, 40)})
    with pytest.raises(ValueError):
        stats.self_averaging_decay({n: [0.0] * 50 for n in (10, 20, 40, 80)})


def test_self_averaging_synthetic_rate():
    rng = np.random.default_rng(1)
    samples = {n: (rng.standard_normal(400) + 1j * rng.standard_normal(400)) / math.sqrt(n)
               for n in (100, 200, 400, 800)}
    fit = stats.self_averaging_decay(samples)
    assert abs(fit.slope + 1) < 4 * fit.slope_se + 0.05


def test_trial_variance_complex():
    assert stats.trial_variance([1j, -1j]) == pytest.approx(2)


def test_qq_deviation():
    rng = np.random.default_rng(2)
    assert stats.qq_max_deviation(rng.standard_normal(500)) < 0.08
    assert stats.qq_max_deviation(rng.exponential(size=500) ** 3) > 0.08
    assert stats.qq_max_deviation(np.zeros(10)) == 0


def test_wn_tests_branches():
    p = ModelParams(100, 0.5, 1, 1)
    rng = np.random.default_rng(3)
    ic = InitialCondition(0, 1)
    pred = theory.w_mean(p, ic, 1.0)
    rep = stats.wn_tests(pred + rng.standard_normal(300), p, ic, 1.0)
    assert rep.branch == "divergent" and abs(rep.mean_ratio - 1) < 0.05
    with pytest.raises(ValueError):
        stats.wn_tests(np.zeros(300), p, ic, 1.0, branch="gaussian")
    with pytest.raises(ValueError):
        stats.wn_tests(np.zeros(10), p, ic, 1.0)
    eq = InitialCondition(1, 1, sigma0_I=0.5, sigma0_E=0.5)
    rep = stats.wn_tests(np.zeros(300), p, eq, 0.0)
    assert rep.branch == "gaussian" and rep.sample_variance == 0 and rep.qq_max_deviation == 0


def test_spectrum_equal_under_constraint():
    p = ModelParams(200, 0.5, 2, 1, a=1.5)
    W = sample_projection(p, TrialStream(4, 0), keep_raw=True)
    rep = stats.spectrum_diag(W, p)
    assert rep.error is None
    assert rep.prime_vs_plain_deviation <= 1e-6
    assert rep.spectral_radius_unconstrained > rep.spectral_radius_J
    assert rep.norm_J == pytest.approx(np.linalg.norm(W.J, 2))


def test_match_deviation():
    a = np.array([1 + 1j, 2, -3j])
    assert stats.match_deviation(a, a[::-1]) == 0
    assert stats.match_deviation(a, a + 0.1) == pytest.approx(0.1)
