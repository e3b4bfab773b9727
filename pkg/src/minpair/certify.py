"""Checks of the finite-cost (G), strictly-unbounded-cost (SU) and majorization (M) conditions.

Every certificate states its guarantee level. The finite route for (M) is
exact: in a finite space it suffices to test singleton sets B, and additivity
covers all other B. The density route only tests a finite grid of pairs and a
finite family of cells, so it certifies the inequality over that family only.
Continuity of q and lower semicontinuity of c on D x A are assumed, not checked.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .evaluator import expected_average_cost, default_window
from .generators import Example2Model, example2_average_cost_mc
from .model import FiniteMdp, StationaryPolicy, require_valid

DENSITY_TOL = 1e-12


# ---------------------------------------------------------------- (SU)

@dataclass
class CompactExhaustion:
    """Nested pair sets Gamma_1 <= Gamma_2 <= ... (boolean masks over the pairs of a model)."""

    sets: list
    infima: list = field(default_factory=list)

    def nested(self) -> bool:
        return all(np.all(~a | b) for a, b in zip(self.sets, self.sets[1:]))


@dataclass
class SUResult:
    passed: bool
    infima: list
    threshold: float
    detail: str = ""


def exhaustion_by_cost_level(model: FiniteMdp, levels: Sequence[float]) -> CompactExhaustion:
    """Gamma_j = {(x, a) : c(x, a) <= levels[j]}, for nondecreasing levels."""
    return CompactExhaustion([model.cost <= lv for lv in levels])


def check_su(model: FiniteMdp, exhaustion: CompactExhaustion, threshold: float = math.inf) -> SUResult:
    """inf of the cost outside each Gamma_j; the infimum over an empty set is +inf.

    Passes iff the infima are nondecreasing and the last one exceeds
    ``threshold`` (with the default +inf the last Gamma_j must be all of Gamma,
    which is how a finite model satisfies the condition).
    """
    if not exhaustion.nested():
        raise ValueError("assumption-certify: exhaustion is not nested")
    inf = []
    for mask in exhaustion.sets:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (model.n_pairs,):
            raise ValueError("assumption-certify: exhaustion mask does not match the model's pairs")
        out = model.cost[~mask]
        inf.append(float(out.min()) if out.size else math.inf)
    exhaustion.infima = inf
    mono = all(b >= a for a, b in zip(inf, inf[1:]))
    last = inf[-1] if inf else -math.inf
    ok = mono and (last == math.inf or last > threshold)
    return SUResult(ok, inf, threshold, "" if mono else "infima decrease")


def check_su_generator(cost: Callable, membership: Callable, x_grid, a_grid, levels: Sequence[int],
                       threshold: float) -> SUResult:
    """(SU) for a cost function on a continuous model, probed on an (x, a) grid.

    ``membership(j, X, A)`` returns the mask of grid points inside Gamma_j.
    The infimum outside Gamma_j is taken over grid points only; levels whose
    complement is empty inside the probe window are reported as +inf and
    should be avoided by choosing a probe window wider than the largest level.
    """
    X, A = np.meshgrid(np.asarray(x_grid, float), np.asarray(a_grid, float), indexing="ij")
    C = np.asarray(cost(X, A), dtype=float)
    inf = []
    prev = None
    for j in levels:
        mask = np.asarray(membership(j, X, A), dtype=bool)
        if prev is not None and np.any(prev & ~mask):
            raise ValueError("assumption-certify: exhaustion is not nested")
        prev = mask
        out = C[~mask]
        inf.append(float(out.min()) if out.size else math.inf)
    mono = all(b >= a for a, b in zip(inf, inf[1:]))
    ok = mono and bool(inf) and inf[-1] > threshold
    return SUResult(ok, inf, threshold, f"probed on a {X.shape[0]}x{X.shape[1]} grid")


def example2_exhaustion(delta: float):
    """Gamma_j = [-j, j] x {k delta : |k| <= j}."""
    def membership(j, X, A):
        return (np.abs(X) <= j) & (np.abs(A) <= j * delta + 1e-12)
    return membership


def check_su_example2(ex2: Example2Model, levels=range(1, 41), threshold: float = 100.0) -> SUResult:
    cfg = ex2.config
    top = max(levels)
    x_grid = np.linspace(-1.5 * top - 2, 1.5 * top + 2, 6 * int(1.5 * top + 2) * 10 + 1)
    k_max = int(1.5 * top) + 2
    a_grid = cfg.delta * np.arange(-k_max, k_max + 1)
    cost = lambda X, A: np.asarray(cfg.beta(X), dtype=float) * (X ** 2 + A ** 2)
    return check_su_generator(cost, example2_exhaustion(cfg.delta), x_grid, a_grid, list(levels), threshold)


def tightness_bound_check(model: FiniteMdp, occupancy_weights: np.ndarray, sup_avg_cost: float,
                          exhaustion: CompactExhaustion, slack: float = 1e-12):
    """Mass outside Gamma_j vs (sup_n J_n/n) / inf_{Gamma_j^c} c, for each j.

    Returns a list of ``(mass_outside, bound, ok)``.
    """
    out = []
    for mask in exhaustion.sets:
        mask = np.asarray(mask, dtype=bool)
        mass = float(occupancy_weights[~mask].sum())
        cmin = float(model.cost[~mask].min()) if (~mask).any() else math.inf
        bound = sup_avg_cost / cmin if cmin > 0 else math.inf
        out.append((mass, bound, mass <= bound + slack))
    return out


# ---------------------------------------------------------------- (M)

@dataclass
class MajorizationCertificate:
    passed: bool
    max_violation: float
    worst: tuple  # coordinates of the largest violation
    O: object
    D: object
    nu: dict
    total_mass: float
    pair_grid: int
    family: str
    guarantee: str
    tolerance: float = DENSITY_TOL
    details: dict = field(default_factory=dict)
    assumed: str = "continuity of q and lower semicontinuity of c on D x A (not checked)"


def _as_mask(states, n):
    m = np.zeros(n, dtype=bool)
    m[list(states)] = True
    return m


def envelope_measure(model: FiniteMdp, O, D) -> np.ndarray:
    """nu(y) = max_{(x,a)} q(y|x,a) on O \\ D and 0 elsewhere: the smallest valid nu."""
    keep = _as_mask(O, model.n_states) & ~_as_mask(D, model.n_states)
    env = np.asarray(model.transition.max(axis=0).todense()).ravel()
    return np.where(keep, env, 0.0)


def check_m_finite(model: FiniteMdp, O, D, nu) -> MajorizationCertificate:
    """q({y} & (O \\ D) | x, a) <= nu({y}) for every pair and every state y."""
    require_valid(model)
    n = model.n_states
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (n,) or np.any(nu < 0):
        raise ValueError("assumption-certify: nu must be a nonnegative vector over states")
    keep = _as_mask(O, n) & ~_as_mask(D, n)
    Q = model.transition.tocoo()
    sel = keep[Q.col]
    viol = Q.data[sel] - nu[Q.col[sel]]
    if viol.size:
        k = int(np.argmax(viol))
        worst_v = float(viol[k])
        x, a = model.pairs[Q.row[sel][k]]
        worst = (int(x), int(a), int(Q.col[sel][k]))
    else:
        worst_v, worst = 0.0, ()
    worst_v = max(worst_v, 0.0) if viol.size else 0.0
    return MajorizationCertificate(
        passed=worst_v <= 0.0, max_violation=worst_v, worst=worst if worst_v > 0 else (),
        O=sorted(int(s) for s in O), D=sorted(int(s) for s in D),
        nu={"kind": "vector", "values": nu.tolist()}, total_mass=float(nu.sum()),
        pair_grid=model.n_pairs, family="all singletons {y} (exhaustive by additivity)",
        guarantee="exact over all pairs and all sets B", tolerance=0.0)


def _in_intervals(y, intervals, closed):
    m = np.zeros(np.shape(y), dtype=bool)
    for lo, hi in intervals:
        m |= ((y >= lo) & (y <= hi)) if closed else ((y > lo) & (y < hi))
    return m


def check_m_density(ell: float, O, D, kernel_density: Callable, pair_grid, cells,
                    families: Sequence[Sequence[int]] | None = None,
                    quad_order: int = 16) -> MajorizationCertificate:
    """int_{(O \\ D) & B} f_{x,a}(y) dy <= ell * vol(B) for grid pairs and cell unions B.

    ``O`` is a list of open intervals, ``D`` a list of closed intervals,
    ``kernel_density(y, x, a)`` the density of the next state, ``pair_grid`` a
    sequence of (x, a) and ``cells`` the edges of a partition of O. Each cell
    is integrated by Gauss-Legendre with ``quad_order`` nodes; cell edges
    should be aligned with any kinks of the density and with D. The tested
    family is every single cell (hence, by additivity, every union of cells)
    plus any explicit ``families`` of cell-index sets.
    """
    if not ell > 0:
        raise ValueError("assumption-certify: density bound ell must be positive")
    edges = np.asarray(cells, dtype=float)
    lo_o = min(lo for lo, _ in O)
    hi_o = max(hi for _, hi in O)
    if edges[0] > lo_o + 1e-12 or edges[-1] < hi_o - 1e-12:
        raise ValueError("assumption-certify: cell partition does not cover O")
    nodes, wts = np.polynomial.legendre.leggauss(quad_order)
    left, right = edges[:-1], edges[1:]
    half = 0.5 * (right - left)
    Y = (0.5 * (left + right))[:, None] + half[:, None] * nodes[None, :]
    W = half[:, None] * wts[None, :]
    region = _in_intervals(Y, O, closed=False) & ~_in_intervals(Y, D, closed=True)
    pairs = np.asarray(pair_grid, dtype=float).reshape(-1, 2)
    xs, as_ = pairs[:, 0], pairs[:, 1]
    try:
        F = np.asarray(kernel_density(Y[None, :, :], xs[:, None, None], as_[:, None, None]), dtype=float)
    except Exception as exc:
        raise ValueError(f"assumption-certify: density evaluation failed: {exc}") from exc
    if not np.all(np.isfinite(F)):
        bad = np.argwhere(~np.isfinite(F))[0]
        raise ValueError(f"assumption-certify: density not finite at pair {tuple(pairs[bad[0]])}")
    mass = (F * region[None] * W[None]).sum(axis=2)  # (n_pairs, n_cells)
    vol = right - left
    viol = mass - ell * vol[None, :]
    k, j = np.unravel_index(int(np.argmax(viol)), viol.shape)
    worst_v = float(viol[k, j])
    worst = (float(xs[k]), float(as_[k]), (float(left[j]), float(right[j])))
    fam_desc = f"{len(vol)} cells and their unions"
    if families:
        for fam in families:
            idx = list(fam)
            v = mass[:, idx].sum(axis=1) - ell * vol[idx].sum()
            kk = int(np.argmax(v))
            if v[kk] > worst_v:
                worst_v = float(v[kk])
                worst = (float(xs[kk]), float(as_[kk]), tuple(idx))
        fam_desc += f" + {len(families)} explicit unions"
    total = ell * sum(hi - lo for lo, hi in O)
    return MajorizationCertificate(
        passed=worst_v <= DENSITY_TOL, max_violation=worst_v, worst=worst,
        O=[tuple(i) for i in O], D=[tuple(i) for i in D],
        nu={"kind": "density_bound_times_lebesgue", "ell": ell}, total_mass=total,
        pair_grid=len(pairs), family=fam_desc,
        guarantee="certificate over tested family only", tolerance=DENSITY_TOL,
        details={"quad_order": quad_order, "cell_edges": [float(edges[0]), float(edges[-1]), len(vol)]})


def check_m_example2(ex2: Example2Model, j: int, cell_width: float = 0.05) -> MajorizationCertificate:
    """O = (-j-1, j+1), D = empty, nu = ell * Lebesgue on O, over the model's (center, action) grid."""
    cfg = ex2.config
    O = [(-j - 1.0, j + 1.0)]
    n = int(round((2 * j + 2) / cell_width))
    cells = np.linspace(-j - 1.0, j + 1.0, n + 1)
    grid = [(x, a) for x in ex2.centers for a in ex2.action_values]
    dens = lambda y, x, a: cfg.noise.pdf(y - x - a, x, a)
    return check_m_density(cfg.noise.ell, O, [], dens, grid, cells)


@dataclass
class AtomicCheck:
    passed: bool
    required_mass: list  # per refinement level: mass nu would need
    levels: list
    nu_mass: float
    guarantee: str = "refinement sequence; required mass grows without bound"


def check_m_atomic(atom: Callable, x_range, O, D, nu_mass: float, levels=range(4, 16)) -> AtomicCheck:
    """Condition (M) against a kernel whose laws are point masses q(.|x) = delta_{atom(x)}.

    Each distinct atom landing in O \\ D forces nu({atom}) >= 1. On dyadic
    grids of ``x_range`` the number of such atoms is a lower bound on the
    total mass any valid nu must have; the check fails as soon as that bound
    exceeds ``nu_mass``.
    """
    lo, hi = x_range
    req = []
    for r in levels:
        xs = np.linspace(lo, hi, 2 ** r + 1)
        ys = np.unique(np.round(np.asarray(atom(xs), dtype=float), 15))
        inside = _in_intervals(ys, O, closed=False) & ~_in_intervals(ys, D, closed=True)
        req.append(int(inside.sum()))
    return AtomicCheck(all(m <= nu_mass for m in req), req, list(levels), nu_mass)


# ---------------------------------------------------------------- (G)

@dataclass
class GResult:
    passed: bool
    j_n_over_n: float
    tail_sup: float
    threshold: float
    details: dict = field(default_factory=dict)


def check_g(model: FiniteMdp, policy: StationaryPolicy, initial, horizon: int,
            threshold: float, window: int | None = None) -> GResult:
    """Exact J_k/k over the tail window stays below ``threshold``."""
    est = expected_average_cost(model, policy, initial, horizon, window)
    return GResult(est.tail_sup <= threshold, est.j_n_over_n, est.tail_sup, threshold)


def check_g_example2(ex2: Example2Model, horizon: int = 2000, mc_horizon: int = 2000,
                     n_paths: int = 2000, seed: int = 0, n_sigma: float = 3.0) -> GResult:
    """(G) for the argmin policy from x = 0 against 2 (delta^2 + sigma^2) sup beta.

    Checks the exact tail of J_k/k on the discretized model and the
    Monte Carlo average cost of the continuous-state model (within
    ``n_sigma`` standard errors).
    """
    bound = ex2.g_bound()
    x0 = int(np.argmin(np.abs(ex2.centers)))
    pol = ex2.argmin_policy()
    exact = expected_average_cost(ex2.mdp, pol, x0, horizon, default_window(horizon))
    avg = example2_average_cost_mc(ex2.config, 0.0, mc_horizon, n_paths, seed)
    mean = float(avg.mean())
    se = float(avg.std(ddof=1) / math.sqrt(n_paths))
    ok_exact = exact.tail_sup <= bound
    ok_mc = mean <= bound + n_sigma * se
    return GResult(ok_exact and ok_mc, exact.j_n_over_n, exact.tail_sup, bound,
                   {"mc_mean": mean, "mc_se": se, "exact_ok": ok_exact, "mc_ok": ok_mc,
                    "start_center": float(ex2.centers[x0])})
