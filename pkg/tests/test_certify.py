import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minpair import certify
from minpair.certify import (CompactExhaustion, check_g, check_m_atomic, check_m_density, check_m_finite,
                             check_su, check_su_generator, envelope_measure, exhaustion_by_cost_level,
                             tightness_bound_check)
from minpair.evaluator import expected_average_cost
from minpair.generators import EX2_PRESETS, gaussian_noise, gen_example1, gen_example2, gen_random_mdp
from minpair.model import FiniteMdp, StationaryPolicy
from minpair.occupancy import exact_cesaro_occupancy

from oracles import random_policy


@pytest.fixture(scope="module")
def ex2():
    return gen_example2(EX2_PRESETS["ex2-gauss"])


def test_su_example2_passes(ex2):
    res = certify.check_su_example2(ex2)
    assert res.passed
    assert all(b >= a for a, b in zip(res.infima, res.infima[1:]))


def test_su_bounded_cost_fails():
    # c = 1 everywhere on a wide grid: infima never grow
    res = check_su_generator(lambda X, A: np.ones_like(X), certify.example2_exhaustion(1.0),
                             np.linspace(-50, 50, 401), np.arange(-50, 51.0), range(1, 20), threshold=10)
    assert not res.passed and set(res.infima) == {1.0}


def test_su_finite_vacuous():
    m = gen_random_mdp(4, 3, seed=1)
    ex = exhaustion_by_cost_level(m, [2.0, 5.0, np.inf])
    res = check_su(m, ex)
    assert res.passed and res.infima[-1] == math.inf


def test_su_rejects_non_nested():
    m = gen_random_mdp(3, 2, seed=2)
    a = np.zeros(m.n_pairs, dtype=bool)
    b = a.copy()
    a[0] = True
    b[1] = True
    with pytest.raises(ValueError, match="nested"):
        check_su(m, CompactExhaustion([a, b]))


def test_m_density_gaussian_passes(ex2):
    cert = certify.check_m_example2(ex2, 2)
    assert cert.passed and cert.max_violation <= 1e-12
    assert cert.guarantee == "certificate over tested family only"
    assert "not checked" in cert.assumed and cert.D == []
    assert cert.total_mass == pytest.approx(ex2.config.noise.ell * 6)
    # peak bound is the analytic Gaussian maximum
    assert ex2.config.noise.ell == pytest.approx(1 / math.sqrt(2 * math.pi * 0.25))


def test_m_density_spike_fails():
    ell = 1.0
    spike = lambda y, x, a: np.where((y > 0.2) & (y < 0.3), 2 * ell, 0.0) + 0 * x
    cells = np.linspace(-1, 1, 21)
    cert = check_m_density(ell, [(-1, 1)], [], spike, [(0.0, 0.0)], cells)
    assert not cert.passed
    assert cert.max_violation == pytest.approx(0.1 * ell)
    assert cert.worst[2] == pytest.approx((0.2, 0.3))


def test_m_density_closed_set_removes_spike():
    spike = lambda y, x, a: np.where((y > 0.2) & (y < 0.3), 2.0, 0.0) + 0 * x
    cells = np.linspace(-1, 1, 21)
    assert check_m_density(1.0, [(-1, 1)], [(0.2, 0.3)], spike, [(0.0, 0.0)], cells).passed


def test_m_density_rejects_bad_inputs():
    with pytest.raises(ValueError, match="cover"):
        check_m_density(1.0, [(-2, 2)], [], lambda y, x, a: 0 * y, [(0, 0)], np.linspace(-1, 1, 5))
    with pytest.raises(ValueError, match="not finite"):
        check_m_density(1.0, [(-1, 1)], [], lambda y, x, a: np.inf * (y + 2), [(0, 0)], np.linspace(-1, 1, 5))


def test_point_mass_kernel_fails_every_finite_nu():
    res = check_m_atomic(lambda x: x, (-1, 1), [(-2, 2)], [], nu_mass=1e6, levels=range(4, 21))
    assert not res.passed
    assert all(b > a for a, b in zip(res.required_mass, res.required_mass[1:]))
    half = check_m_atomic(lambda x: x / 2, (-1, 1), [(-2, 2)], [], nu_mass=1e3)
    assert not half.passed


def test_m_finite_envelope_and_zero():
    m = gen_random_mdp(5, 3, sparsity=0.4, seed=3)
    O, D = [0, 1, 2, 3], [3]
    env = envelope_measure(m, O, D)
    assert check_m_finite(m, O, D, env).passed
    assert not check_m_finite(m, O, D, np.zeros(5)).passed


def test_m_finite_example1_vacuous():
    model, _ = gen_example1("harmonic", "indicator", 30)
    allstates = range(31)
    cert = check_m_finite(model, allstates, allstates, np.zeros(31))
    assert cert.passed and cert.max_violation == 0.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_m_envelope_optimal_and_monotone(seed):
    rng = np.random.default_rng(seed)
    m = gen_random_mdp(5, 3, sparsity=0.5, seed=seed)
    O = sorted(rng.choice(5, size=int(rng.integers(1, 6)), replace=False).tolist())
    D = sorted(rng.choice(5, size=int(rng.integers(0, 3)), replace=False).tolist())
    env = envelope_measure(m, O, D)
    assert check_m_finite(m, O, D, env).passed
    region = [y for y in O if y not in D and env[y] > 0]
    if region:
        y = region[int(rng.integers(len(region)))]
        low = env.copy()
        low[y] *= 0.999
        assert not check_m_finite(m, O, D, low).passed
    # shrinking O or enlarging D keeps a passing certificate passing
    nu = env * rng.uniform(1, 2, size=5)
    assert check_m_finite(m, O[:-1], D, nu).passed
    assert check_m_finite(m, O, sorted(set(D) | {O[0]}), nu).passed


def test_g_trivial_and_drifting():
    one = FiniteMdp.from_rows(1, [(0,)], {(0, 0): [1.0]}, {(0, 0): 3.0})
    res = check_g(one, StationaryPolicy([[1.0]]), 0, 500, threshold=10)
    assert res.passed and res.j_n_over_n == 3.0
    N = 60
    rows = {(i, 0): {min(i + 1, N - 1): 1.0} for i in range(N)}
    drift = FiniteMdp.from_rows(N, [(0,)] * N, rows, {(i, 0): 2.0 ** i for i in range(N)})
    res = check_g(drift, StationaryPolicy.uniform(drift), 0, 50, threshold=1e6, window=10)
    assert not res.passed
    est = expected_average_cost(drift, StationaryPolicy.uniform(drift), 0, 50, window=10)
    assert np.all(np.diff(est.running) > 0)


def test_g_example2_bound(ex2):
    res = certify.check_g_example2(ex2, horizon=1000, mc_horizon=1000, n_paths=1000, seed=1)
    assert res.passed
    assert res.details["start_center"] == 0.0
    assert res.tail_sup <= 2 * (0.25 + 0.25)


def test_tightness_bound_on_su_model():
    m = gen_random_mdp(6, 3, cost_range=(0, 20), seed=5)
    pol = random_policy(m, np.random.default_rng(5))
    levels = [4.0, 8.0, 12.0, 16.0]
    ex = exhaustion_by_cost_level(m, levels)
    su = check_su(m, ex, threshold=0)
    assert su.passed and all(lv < inf for lv, inf in zip(levels, su.infima))
    est = expected_average_cost(m, pol, 0, 2000, window=2000)
    sup_avg = float(est.running.max())
    for n in (10, 100, 2000):
        g = exact_cesaro_occupancy(m, pol, 0, n)
        for mass, bound, ok in tightness_bound_check(m, g.weights, sup_avg, ex):
            assert ok, (mass, bound)


def test_gaussian_noise_family():
    nz = gaussian_noise(0.3)
    w = np.linspace(-3, 3, 10_001)
    assert np.max(nz.pdf(w)) <= nz.ell + 1e-15
    assert abs(np.trapezoid(nz.pdf(w), w) - 1) < 1e-6
