"""Composite reproduction reports for the birth-reset chain and the discretized LQ-type model.

Each report is a list of :class:`Check` rows. All randomness derives from one
seed, so two runs with the same arguments give identical rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import certify
from .chains import f_regularity_probe, hitting_analysis_exact, hitting_analysis_mc
from .evaluator import discount_sweep, discounted_value_iteration, expected_average_cost, pathwise_average_cost
from .generators import EX2_PRESETS, gen_example1, gen_example2
from .model import StationaryPolicy
from .solver import solve_min_pair


@dataclass
class Check:
    module: str
    name: str
    value: float
    target: float
    tolerance: float
    passed: bool
    detail: str = ""

    def row(self):
        return [self.module, self.name, self.value, self.target, self.tolerance, self.passed, self.detail]


CHECK_COLUMNS = ["module", "check", "value", "target", "tolerance", "passed", "detail"]


def _close(module, name, value, target, tol, rel=False, detail=""):
    err = abs(value - target) / (abs(target) if rel else 1.0)
    return Check(module, name, float(value), float(target), tol, bool(err <= tol), detail)


def _at_most(module, name, value, bound, detail=""):
    return Check(module, name, float(value), float(bound), 0.0, bool(value <= bound), detail)


def ex1_average_cost(starts=(1, 5, 20), n: int = 10_000):
    """Exact J_n(i)/n for beta_i = 1/(i+1), c(i) = i+1, c(0) = 0.

    The truncation N = max(starts) + n + 1 lies beyond reach, so the finite
    model is exact for this horizon.
    """
    model, _ = gen_example1("harmonic", "linear_plus_one", truncation=max(starts) + n + 1)
    pol = StationaryPolicy.uniform(model)
    return {i: expected_average_cost(model, pol, i, n).j_n_over_n for i in starts}


def reproduce_ex1(seed: int = 0, horizon: int = 10_000, n_paths: int = 10_000,
                  alphas=(0.9, 0.99, 0.999), truncation: int = 50) -> list[Check]:
    out = []
    # J(i) = i under the linear-plus-one cost
    for i, v in ex1_average_cost(n=horizon).items():
        out.append(_close("evaluator", f"J_n/n from {i} (harmonic, c=i+1)", v, i, 0.01, rel=True,
                          detail=f"n={horizon}, relative"))

    # rho* = 0 with p* = delta_0, m_alpha = 0
    model, chain = gen_example1("harmonic", "indicator", truncation)
    sol = solve_min_pair(model)
    out.append(_close("minpair-solver", "rho*", sol.rho_star, 0.0, 1e-9))
    out.append(_close("minpair-solver", "p*(0)", sol.state_marginal[0], 1.0, 1e-9))
    vals = []
    for e in discount_sweep(model, alphas):
        out.append(_close("evaluator", f"(1-alpha) m_alpha at alpha={e.alpha:g}", e.scaled_m_alpha, 0.0, 1e-9))
        vals.append(discounted_value_iteration(model, e.alpha).values[1])
    inc = all(b > a for a, b in zip(vals, vals[1:]))
    out.append(Check("evaluator", "v_alpha(1) increasing in alpha", float(vals[-1]), float(vals[0]), 0.0, inc,
                     "values grow towards E_1[tau_0] = inf"))

    # harmonic: positive Harris, not regular
    rep = hitting_analysis_exact(chain, 10 ** 6, starts=[1])
    t = rep.expected_hitting_time[0]
    out.append(Check("chain-diagnostics", "harmonic classification", 1.0 if rep.classification == "positive_harris" else 0.0,
                     1.0, 0.0, rep.classification == "positive_harris", rep.classification))
    out.append(Check("chain-diagnostics", "E_1[tau_0] infinite (harmonic)", t.partial, math.inf, 0.0, t.infinite, str(t)))
    reg = f_regularity_probe(chain, 1.0, 10 ** 6, starts=[1])
    out.append(Check("chain-diagnostics", "f=1 regularity (harmonic)", 0.0 if reg.verdict == "no" else 1.0,
                     0.0, 0.0, reg.verdict == "no", reg.verdict))

    # pathwise averages vanish although J(i) = i
    lin, _ = gen_example1("harmonic", "linear_plus_one", truncation=horizon + 10)
    pw = pathwise_average_cost(lin, StationaryPolicy.uniform(lin), 5, horizon, min(n_paths, 2000), seed)
    out.append(_at_most("evaluator", "pathwise median from 5 (harmonic, c=i+1)", pw.quantiles[0.5], 0.05,
                        f"n={horizon}; J_n/n is about 5"))

    # telescoping: escape probability 1/3, exactly and by simulation
    _, tel_chain = gen_example1("telescoping", "linear", truncation)
    tel = hitting_analysis_exact(tel_chain, 10 ** 6, starts=[1])
    out.append(_close("chain-diagnostics", "escape probability from 1 (telescoping, exact)",
                      tel.escape_probability[0], 1 / 3, 1e-6))
    out.append(Check("chain-diagnostics", "telescoping classification",
                     1.0 if tel.classification == "positive_not_harris" else 0.0, 1.0, 0.0,
                     tel.classification == "positive_not_harris", tel.classification))
    tel_model, _ = gen_example1("telescoping", "linear", truncation=horizon + 2)
    mc = hitting_analysis_mc(tel_model, StationaryPolicy.uniform(tel_model), [0], n_paths, horizon,
                             seed + 1, starts=[1])
    frac = float(mc.escape_probability[0])
    se = math.sqrt((1 / 3) * (2 / 3) / n_paths)
    out.append(_close("chain-diagnostics", "never-hit-0 fraction from 1 (telescoping, MC)", frac, 1 / 3, 3 * se,
                      detail=f"{n_paths} paths, horizon {horizon}, 3 binomial SE"))
    return out


def reproduce_ex2(seed: int = 0, horizon: int = 2000, n_paths: int = 2000,
                  presets=("ex2-gauss", "ex2-step")) -> list[Check]:
    out = []
    for name in presets:
        ex = gen_example2(EX2_PRESETS[name])
        cfg = ex.config
        su = certify.check_su_example2(ex)
        out.append(Check("assumption-certify", f"{name} SU infimum at last level", su.infima[-1], su.threshold, 0.0,
                         su.passed, "Gamma_j = [-j, j] x {k delta : |k| <= j}"))
        for j in (1, 3, 6):
            m = certify.check_m_example2(ex, j)
            out.append(Check("assumption-certify", f"{name} M max violation (j={j})", m.max_violation, 0.0,
                             m.tolerance, m.passed, m.guarantee))
        g = certify.check_g_example2(ex, horizon, horizon, n_paths, seed)
        out.append(_at_most("assumption-certify", f"{name} G exact tail J_k/k from 0", g.tail_sup, g.threshold,
                            "bound 2 (delta^2 + sigma^2) sup beta"))
        mc, se = g.details["mc_mean"], g.details["mc_se"]
        out.append(_at_most("assumption-certify", f"{name} G Monte Carlo average cost from 0", mc,
                            g.threshold + 3 * se, f"{n_paths} paths, horizon {horizon}, 3 SE"))
        # one step from 0 under the argmin policy
        x0 = int(np.argmin(np.abs(ex.centers)))
        k = ex.mdp.state_ptr[x0] + int(ex.argmin_policy().mu[x0].argmax())
        row = ex.mdp.transition.getrow(k).toarray().ravel()
        m2 = float(row @ ex.centers ** 2)
        out.append(_at_most("model-gen", f"{name} second moment after one step from 0", m2,
                            cfg.delta ** 2 + cfg.noise.sigma2 + cfg.h ** 2 / 4, "cell-center discretization slack h^2/4"))
    atom = certify.check_m_atomic(lambda x: x, (-1.0, 1.0), [(-2.0, 2.0)], [], nu_mass=1e3)
    out.append(Check("assumption-certify", "point-mass kernel q(.|x) = delta_x rejected", atom.required_mass[-1],
                     atom.nu_mass, 0.0, not atom.passed, "required mass grows with grid refinement"))
    return out


REPORTS = {"ex1": reproduce_ex1, "ex2": reproduce_ex2}
