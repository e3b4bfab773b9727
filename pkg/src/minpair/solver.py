"""Minimum average cost rho* and a stationary minimum pair by linear programming.

The LP searches over invariant occupation measures:

    minimize    sum_{(x,a)} c(x,a) gamma(x,a)
    subject to  sum gamma = 1,  gamma >= 0,
                sum_a gamma(y,a) = sum_{(x,a)} q(y|x,a) gamma(x,a)   for every y.

The minimizer need not be unique; on reducible problems the simplex pivot
order decides which closed class carries gamma*.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evaluator import expected_average_cost
from .model import FiniteMdp, StationaryPolicy, require_valid
from .occupancy import OccupationMeasure, StationaryPairReport, decompose
from .simplex import solve_lp

LP_TOL = 1e-9


class SolverError(RuntimeError):
    pass


@dataclass
class MinPairSolution:
    rho_star: float
    gamma_star: OccupationMeasure
    pair: StationaryPairReport
    lp_status: str
    dual_values: np.ndarray  # balance multipliers h(y)
    mass_dual: float  # multiplier of the mass constraint; equals rho_star at optimum
    iterations: int = 0

    @property
    def policy(self) -> StationaryPolicy:
        return self.pair.policy

    @property
    def state_marginal(self) -> np.ndarray:
        return self.pair.state_marginal

    def reduced_costs(self) -> np.ndarray:
        """c(x,a) - g - h(x) + sum_y q(y|x,a) h(y); nonnegative at a dual-feasible point."""
        m = self.gamma_star.model
        h = self.dual_values
        return m.cost - self.mass_dual - h[m.pair_state] + m.transition @ h

    def complementary_slackness(self) -> float:
        return float(np.max(np.abs(self.gamma_star.weights * self.reduced_costs())))


def lp_matrices(model: FiniteMdp):
    """Equality constraints (mass row first, then one balance row per state)."""
    n = model.n_pairs
    A = np.zeros((model.n_states + 1, n))
    A[0] = 1.0
    A[1 + model.pair_state, np.arange(n)] += 1.0
    A[1:] -= model.dense_transition.T
    b = np.zeros(model.n_states + 1)
    b[0] = 1.0
    return model.cost.copy(), A, b


def solve_min_pair(model: FiniteMdp, rule: str = "bland") -> MinPairSolution:
    require_valid(model)
    c, A, b = lp_matrices(model)
    res = solve_lp(c, A, b, tol=LP_TOL, rule=rule)
    if res.status != "optimal":
        # a finite chain always has an invariant law, so the LP is feasible and bounded
        raise SolverError(f"minpair-solver: internal error, LP status {res.status}")
    w = np.clip(res.x, 0.0, None)
    w /= w.sum()
    gamma = OccupationMeasure(model, w)
    pair = decompose(gamma)
    return MinPairSolution(float(w @ model.cost), gamma, pair, res.status,
                           res.duals[1:], float(res.duals[0]), res.iterations)


@dataclass
class VerificationCheck:
    name: str
    passed: bool
    value: float
    target: float
    detail: str = ""
    informational: bool = False


@dataclass
class MinPairVerification:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.informational)

    def failures(self):
        return [c for c in self.checks if not c.passed and not c.informational]


def verify_minimum_pair(model: FiniteMdp, solution: MinPairSolution, candidate_policies,
                        horizon: int, initial_states=None, tol: float = 1e-6,
                        transient_tol: float = 1e-2) -> MinPairVerification:
    """Check a solved pair against the average-cost criteria it must satisfy.

    (i) J_n/n of mu* started from p* equals rho* within ``tol``;
    (ii) every candidate policy's tail-inf of J_k/k from each initial state is
    at least rho* - tol - span(h)/k0, where h are the balance duals and k0 the
    first stage of the tail window. Dual feasibility gives
    J_k >= k rho* + h(x_0) - E h(x_k) for every policy, so the span term is
    the exact finite-horizon allowance; it vanishes as the horizon grows;
    (iii) from each state in supp(p*), J_n/n of mu* is within ``transient_tol``
    of rho*. States outside the support whose average cost exceeds rho* are
    recorded as informational, not failures.
    """
    if solution.lp_status != "optimal":
        raise ValueError("minpair-solver: verification needs an optimal solution")
    rho = solution.rho_star
    mu = solution.policy
    p = solution.state_marginal
    states = range(model.n_states) if initial_states is None else initial_states
    out = MinPairVerification()

    est = expected_average_cost(model, mu, p, horizon)
    out.checks.append(VerificationCheck("stationary_start", abs(est.j_n_over_n - rho) <= tol,
                                        est.j_n_over_n, rho))
    span = float(np.ptp(solution.dual_values))
    for i, pol in enumerate(candidate_policies):
        for x in states:
            e = expected_average_cost(model, pol, int(x), horizon)
            slack = tol + span / (horizon - e.window + 1)
            out.checks.append(VerificationCheck(f"candidate{i}_from_{x}", e.tail_inf >= rho - slack,
                                                e.tail_inf, rho, f"allowance {slack:.3g}"))
    for x in states:
        e = expected_average_cost(model, mu, int(x), horizon)
        if p[x] > 0:
            out.checks.append(VerificationCheck(f"support_state_{x}",
                                                abs(e.j_n_over_n - rho) <= transient_tol,
                                                e.j_n_over_n, rho))
        elif e.j_n_over_n > rho + transient_tol:
            out.checks.append(VerificationCheck(
                f"off_support_state_{x}", False, e.j_n_over_n, rho,
                "average cost above rho* outside supp(p*) is permitted", informational=True))
    return out
