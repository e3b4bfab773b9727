import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from minpair.evaluator import discount_sweep, expected_average_cost
from minpair.generators import gen_example1, gen_random_mdp
from minpair.model import FiniteMdp, StationaryPolicy
from minpair.occupancy import decompose
from minpair.simplex import solve_lp
from minpair.solver import lp_matrices, solve_min_pair, verify_minimum_pair

from oracles import deterministic_policies, rho_enum


def single_state():
    return FiniteMdp.from_rows(1, [(0, 1)], {(0, 0): [1.0], (0, 1): [1.0]}, {(0, 0): 5.0, (0, 1): 2.0})


def three_state():
    # hand-built: two actions in states 0 and 2, one in state 1
    rows = {(0, 0): [0.5, 0.5, 0], (0, 1): [0, 0, 1], (1, 0): [0.2, 0.3, 0.5],
            (2, 0): [1, 0, 0], (2, 1): [0, 0.4, 0.6]}
    costs = {(0, 0): 2.0, (0, 1): 4.0, (1, 0): 1.0, (2, 0): 3.0, (2, 1): 0.5}
    return FiniteMdp.from_rows(3, [(0, 1), (0,), (0, 1)], rows, costs)


def test_simplex_small_lp():
    # min -x1 - x2 s.t. x1 + x3 = 1, x2 + x4 = 2
    res = solve_lp(np.array([-1.0, -1, 0, 0]), np.array([[1.0, 0, 1, 0], [0, 1, 0, 1]]), np.array([1.0, 2]))
    assert res.status == "optimal" and abs(res.objective + 3) <= 1e-12
    np.testing.assert_allclose(res.duals, [-1, -1])


def test_simplex_infeasible_and_unbounded():
    assert solve_lp(np.array([1.0, 1]), np.array([[1.0, 1]]), np.array([-1.0])).status == "infeasible"
    assert solve_lp(np.array([-1.0, 0]), np.array([[1.0, -1]]), np.array([0.0])).status == "unbounded"


def test_simplex_redundant_rows():
    A = np.array([[1.0, 1, 0], [2, 2, 0], [0, 0, 1]])
    res = solve_lp(np.array([1.0, 2, 1]), A, np.array([1.0, 2, 3]))
    assert res.status == "optimal" and abs(res.objective - 4) <= 1e-12
    assert len(res.redundant_rows) == 1


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), rule=st.sampled_from(["bland", "dantzig"]))
def test_simplex_matches_scipy(seed, rule):
    m = gen_random_mdp(1 + seed % 5, 3, sparsity=0.3, seed=seed)
    c, A, b = lp_matrices(m)
    ours = solve_lp(c, A, b, rule=rule)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert ours.status == "optimal" and abs(ours.objective - ref.fun) <= 1e-9


def test_single_state_picks_cheapest_action():
    sol = solve_min_pair(single_state())
    assert sol.rho_star == 2.0
    assert sol.policy.mu[0].tolist() == [0.0, 1.0]


def test_three_state_matches_enumeration():
    m = three_state()
    assert len(list(deterministic_policies(m))) == 4
    sol = solve_min_pair(m)
    assert abs(sol.rho_star - rho_enum(m)) <= 1e-9
    ver = verify_minimum_pair(m, sol, list(deterministic_policies(m)), 3000)
    assert ver.passed, ver.failures()


def test_example1_minimum_pair():
    model, _ = gen_example1("harmonic", "indicator", 50)
    sol = solve_min_pair(model)
    assert abs(sol.rho_star) <= 1e-9
    assert abs(sol.state_marginal[0] - 1) <= 1e-9


def test_nonharris_off_support_is_informational():
    model, _ = gen_example1("telescoping", "linear", 50)
    sol = solve_min_pair(model)
    ver = verify_minimum_pair(model, sol, [], 2000, initial_states=[0, 1, 2, 5])
    assert ver.passed
    info = [c for c in ver.checks if c.informational]
    assert info and all(c.value > sol.rho_star for c in info)


def test_verification_on_single_state_is_exact():
    m = single_state()
    sol = solve_min_pair(m)
    ver = verify_minimum_pair(m, sol, [StationaryPolicy([[1.0, 0.0]]), StationaryPolicy([[0.5, 0.5]])], 200)
    assert ver.passed and all(c.value >= c.target for c in ver.checks)


def test_verification_rejects_bad_candidate_claim():
    m = single_state()
    sol = solve_min_pair(m)
    sol.rho_star = 3.0  # pretend a larger optimum; the cheap action beats it
    ver = verify_minimum_pair(m, sol, [StationaryPolicy([[0.0, 1.0]])], 200)
    assert not ver.passed


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(1, 5), k=st.integers(1, 3),
       sparsity=st.sampled_from([0.0, 0.5, 0.8]))
def test_lp_against_enumeration(seed, n, k, sparsity):
    m = gen_random_mdp(n, k, sparsity=sparsity, seed=seed)
    sol = solve_min_pair(m)
    assert sol.lp_status == "optimal"
    assert abs(sol.rho_star - rho_enum(m)) <= 1e-8
    w = sol.gamma_star.weights
    c, A, b = lp_matrices(m)
    assert np.max(np.abs(A @ w - b)) <= 1e-9 and np.all(w >= 0)
    assert abs(sol.rho_star - w @ m.cost) <= 1e-9
    assert sol.complementary_slackness() <= 1e-8
    assert np.all(sol.reduced_costs() >= -1e-8)
    assert abs(sol.mass_dual - sol.rho_star) <= 1e-8
    rep = decompose(sol.gamma_star)
    assert rep.invariance_residual <= 1e-9 and abs(rep.average_cost - sol.rho_star) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), sparsity=st.sampled_from([0.0, 0.6]))
def test_dual_span_bounds_every_finite_horizon(seed, sparsity):
    # J_k >= k rho* - span(h) for any stationary policy and start
    m = gen_random_mdp(4, 3, sparsity=sparsity, seed=seed)
    sol = solve_min_pair(m)
    span = np.ptp(sol.dual_values)
    rng = np.random.default_rng(seed)
    pols = list(deterministic_policies(m))
    pol = pols[rng.integers(len(pols))]
    run = expected_average_cost(m, pol, int(rng.integers(4)), 300).running
    k = np.arange(1, 301)
    assert np.all(k * run >= k * sol.rho_star - span - 1e-8)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_lp_upper_bounds_discounted_side(seed):
    m = gen_random_mdp(4, 3, seed=seed)
    rho = solve_min_pair(m).rho_star
    best = max(e.scaled_m_alpha for e in discount_sweep(m, [0.5, 0.9, 0.99]))
    assert rho >= best - 1e-6


def test_random_generator_batch_smoke():
    for seed in range(100):
        m = gen_random_mdp(5, 3, seed=seed)
        assert solve_min_pair(m).lp_status == "optimal"


def test_dantzig_rule_agrees():
    m = gen_random_mdp(5, 3, seed=17)
    assert abs(solve_min_pair(m, "bland").rho_star - solve_min_pair(m, "dantzig").rho_star) <= 1e-10
    with pytest.raises(ValueError):
        solve_min_pair(m, "steepest")
