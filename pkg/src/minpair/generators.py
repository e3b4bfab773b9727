"""Model generators: the birth-reset chain, a discretized 1-D LQ-type problem, random MDPs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.special import ndtr

from .chains import BirthResetChain
from .model import FiniteMdp, StationaryPolicy, validate_model

BETA_FAMILIES = {
    # sum of survival products diverges: Harris recurrent, E_i[tau_0] = inf
    "harmonic": lambda i: 1.0 / (i + 1.0),
    # 1 - (1 + 2/(i+1)) / (1 + 2/i), written without the cancellation;
    # prod (1 - beta_i) = 1/3: escape with positive probability
    "telescoping": lambda i: 2.0 / ((i + 1.0) * (i + 2.0)),
    "immediate": lambda i: np.ones_like(np.asarray(i, dtype=float)),
    "half": lambda i: np.full_like(np.asarray(i, dtype=float), 0.5),
    "quadratic": lambda i: 1.0 - 1.0 / (i + 1.0) ** 2,
}

COST_FAMILIES = {
    "indicator": lambda i: (np.asarray(i) > 0).astype(float),
    "linear": lambda i: np.where(np.asarray(i) > 0, np.asarray(i, dtype=float), 0.0),
    "linear_plus_one": lambda i: np.where(np.asarray(i) > 0, np.asarray(i, dtype=float) + 1.0, 0.0),
}


def _family(table, choice, kind):
    if callable(choice):
        return choice, getattr(choice, "__name__", "custom")
    if choice not in table:
        raise ValueError(f"model-gen: unknown {kind} family {choice!r}; choose from {sorted(table)} or pass a callable")
    return table[choice], choice


def gen_example1(beta_family="harmonic", cost_family="indicator", truncation: int = 50):
    """Birth-reset chain truncated to states 0..N, plus its exact-series handle.

    All cost families put c(0) = 0. At the boundary, state N keeps its reset
    probability beta_N and the forward mass 1 - beta_N becomes a self-loop, so
    paths that escape towards infinity never come back in the truncation
    either. One dummy action (label 0) everywhere.
    """
    if truncation < 2:
        raise ValueError("model-gen: truncation N must be >= 2")
    beta, bname = _family(BETA_FAMILIES, beta_family, "beta")
    cost, cname = _family(COST_FAMILIES, cost_family, "cost")
    chain = BirthResetChain(beta, cost, truncation, f"{bname}/{cname}")
    N = truncation
    b = chain.betas(1, N + 1)  # raises on beta outside (0, 1]
    rows, cols, vals = [0], [0], [1.0]
    for i in range(1, N + 1):
        bi = float(b[i - 1])
        nxt = i + 1 if i < N else N
        rows.append(i), cols.append(0), vals.append(bi)
        if bi < 1.0:
            rows.append(i), cols.append(nxt), vals.append(1.0 - bi)
    P = sp.csr_matrix((vals, (rows, cols)), shape=(N + 1, N + 1))
    c = np.asarray(cost(np.arange(N + 1, dtype=float)), dtype=float)
    note = (f"birth-reset chain beta={bname}, cost={cname}, truncated at N={N}; "
            f"forward mass at N folded into a self-loop")
    model = FiniteMdp(N + 1, [(0,)] * (N + 1), P, c, note)
    return model, chain


@dataclass(frozen=True)
class NoiseFamily:
    """Additive disturbance law F_{x,a}: vectorized ``pdf(w, x, a)`` and ``cdf(w, x, a)``.

    ``ell`` bounds the density from above, ``sigma2`` bounds the variance;
    the mean is zero.
    """

    pdf: Callable
    cdf: Callable
    ell: float
    sigma2: float
    name: str = "custom"
    support: tuple = (-math.inf, math.inf)


def gaussian_noise(sigma: float) -> NoiseFamily:
    s = float(sigma)
    return NoiseFamily(
        pdf=lambda w, x=0.0, a=0.0: np.exp(-0.5 * (np.asarray(w) / s) ** 2) / (s * math.sqrt(2 * math.pi)),
        cdf=lambda w, x=0.0, a=0.0: ndtr(np.asarray(w) / s),
        ell=1.0 / (s * math.sqrt(2 * math.pi)),
        sigma2=s * s,
        name=f"gauss(sigma={s:g})",
    )


@dataclass(frozen=True)
class Example2Config:
    """x' = x + a + w on a cell grid over [-x_max, x_max], actions k*delta, |k| <= action_radius.

    ``beta_sup`` must bound ``beta`` and ``beta_liminf`` witnesses
    liminf_{|x| -> inf} beta(x) > 0. Choose ``x_max`` several noise standard
    deviations beyond the region the controlled chain visits; the mass that
    would leave the grid is folded into the end cells.
    """

    delta: float = 0.5
    action_radius: int = 16
    x_max: float = 8.0
    h: float = 0.25
    beta: Callable = field(default=lambda x: np.ones_like(np.asarray(x, dtype=float)))
    beta_sup: float = 1.0
    beta_liminf: float = 1.0
    noise: NoiseFamily = field(default_factory=lambda: gaussian_noise(0.5))
    name: str = "ex2-gauss"

    def violations(self):
        out = []
        if not (self.delta > 0 and self.h > 0 and self.x_max > 0):
            out.append("delta, h and x_max must be positive")
        if self.action_radius < 0:
            out.append("action_radius must be >= 0")
        if not (math.isfinite(self.noise.ell) and math.isfinite(self.noise.sigma2)):
            out.append("noise density bound and variance must be finite")
        if not math.isfinite(self.beta_sup):
            out.append("sup beta must be finite")
        return out


@dataclass(frozen=True, eq=False)
class Example2Model:
    mdp: FiniteMdp
    config: Example2Config
    edges: np.ndarray
    centers: np.ndarray
    action_values: np.ndarray  # action label j <-> a = action_values[j]

    def argmin_policy(self) -> StationaryPolicy:
        return StationaryPolicy.deterministic(self.mdp, [argmin_action(x, self.action_values) for x in self.centers])

    def g_bound(self) -> float:
        """2 (delta^2 + sigma^2) sup beta."""
        c = self.config
        return 2 * (c.delta ** 2 + c.noise.sigma2) * c.beta_sup


def argmin_action(x: float, action_values: np.ndarray) -> int:
    """Label of argmin_{|a| <= |x|} |x + a|; ties go to smaller |a|, then negative a."""
    allowed = np.flatnonzero(np.abs(action_values) <= abs(x) + 1e-12)
    if allowed.size == 0:
        return int(np.argmin(np.abs(action_values)))
    vals = action_values[allowed]
    key = np.lexsort((vals, np.abs(vals), np.round(np.abs(x + vals), 12)))
    return int(allowed[key[0]])


def _density_mass(noise: NoiseFamily, x: float, a: float) -> float:
    f = lambda w: float(noise.pdf(np.asarray(w), x, a))
    lo, hi = noise.support
    return integrate.quad(f, lo, hi, limit=200)[0]


def gen_example2(config: Example2Config = Example2Config()) -> Example2Model:
    """Discretize the additive-noise model by integrating the noise law over cells.

    Cell centers are k*h for |k| <= x_max/h. Row for (cell center x, action a): mass of x + a + w in each cell; mass
    beyond the grid goes to the end cells. Cost beta(x) (x^2 + a^2) at the cell
    center.
    """
    bad = config.violations()
    if bad:
        raise ValueError("model-gen: invalid Example2Config: " + "; ".join(bad))
    half = int(round(config.x_max / config.h))
    n_cells = 2 * half + 1  # odd, so that x = 0 is a cell center
    edges = config.h * (np.arange(n_cells + 1) - half - 0.5)
    centers = 0.5 * (edges[:-1] + edges[1:])
    K = config.action_radius
    avals = config.delta * np.arange(-K, K + 1)
    for x, a in ((0.0, 0.0), (float(centers[0]), float(avals[-1]))):
        mass = _density_mass(config.noise, x, a)
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"model-gen: noise density integrates to {mass:.9f} at (x={x:g}, a={a:g}); "
                             f"mass deficit {1 - mass:.3e}")
    X = np.repeat(centers, len(avals))
    A = np.tile(avals, n_cells)
    shift = X + A
    Fv = config.noise.cdf(edges[None, 1:-1] - shift[:, None], X[:, None], A[:, None])
    Fv = np.asarray(Fv, dtype=float) * np.ones((len(X), n_cells - 1))
    probs = np.diff(np.hstack([np.zeros((len(X), 1)), Fv, np.ones((len(X), 1))]), axis=1)
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum(axis=1, keepdims=True)
    beta = np.asarray(config.beta(X), dtype=float) * np.ones_like(X)
    cost = beta * (X ** 2 + A ** 2)
    labels = tuple(range(len(avals)))
    note = (f"{config.name}: {n_cells} cells of width {config.h:g} centered at k*{config.h:g}, |k| <= {half}, "
            f"actions k*{config.delta:g} for |k| <= {K}, noise {config.noise.name}, tails folded into end cells")
    mdp = FiniteMdp(n_cells, [labels] * n_cells, sp.csr_matrix(probs), cost, note)
    return Example2Model(mdp, config, edges, centers, avals)


def step_beta(x):
    """Discontinuous cost modulation: 1 on x < 0, 2 on x >= 0."""
    return np.where(np.asarray(x, dtype=float) < 0, 1.0, 2.0)


EX2_PRESETS = {
    "ex2-gauss": Example2Config(),
    "ex2-step": Example2Config(beta=step_beta, beta_sup=2.0, beta_liminf=1.0, name="ex2-step"),
}


def example2_average_cost_mc(config: Example2Config, x0: float, horizon: int, n_paths: int,
                             seed: int) -> np.ndarray:
    """Running average cost at ``horizon`` of the argmin policy on the continuous-state model.

    Requires a Gaussian-type noise with a ``sigma2`` variance (sampled as
    N(0, sigma2)); one value per path.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    avals = config.delta * np.arange(-config.action_radius, config.action_radius + 1)
    x = np.full(n_paths, float(x0))
    total = np.zeros(n_paths)
    sigma = math.sqrt(config.noise.sigma2)
    for _ in range(horizon):
        a = _argmin_vec(x, config.delta, avals[-1])
        total += np.asarray(config.beta(x), dtype=float) * (x ** 2 + a ** 2)
        x = x + a + sigma * rng.standard_normal(n_paths)
    return total / horizon


def _argmin_vec(x, delta, a_max):
    # largest grid magnitude not exceeding |x|, pointing back towards 0
    mag = np.minimum(np.floor(np.abs(x) / delta) * delta, a_max)
    return -np.sign(x) * mag


def gen_random_mdp(n_states: int, max_actions: int = 3, sparsity: float = 0.0,
                   cost_range=(0.0, 10.0), seed: int = 0) -> FiniteMdp:
    """Random valid MDP: 1..max_actions actions per state, rows zeroed at rate ``sparsity``."""
    if n_states < 1 or max_actions < 1:
        raise ValueError("model-gen: need n_states >= 1 and max_actions >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    actions = [tuple(range(int(rng.integers(1, max_actions + 1)))) for _ in range(n_states)]
    n_pairs = sum(len(a) for a in actions)
    P = rng.random((n_pairs, n_states))
    if sparsity > 0:
        P[rng.random(P.shape) < sparsity] = 0.0
        empty = P.sum(axis=1) == 0
        P[empty, rng.integers(0, n_states, empty.sum())] = 1.0
    P /= P.sum(axis=1, keepdims=True)
    lo, hi = cost_range
    cost = lo + (hi - lo) * rng.random(n_pairs)
    model = FiniteMdp(n_states, actions, P, cost, f"random(seed={seed}, sparsity={sparsity:g})")
    assert not validate_model(model)
    return model
