"""Average-cost and discounted-cost criteria.

``limsup``/``liminf`` of an infinite sequence cannot be read off a finite
prefix. Estimates therefore report the max/min of the running averages over a
tail window (the last ``max(100, n // 10)`` checkpoints by default) as proxies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (FiniteMdp, StationaryPolicy, as_distribution, check_policy,
                    require_valid, stage_weights, run_batches, step_paths)


class NonConvergenceError(RuntimeError):
    def __init__(self, alpha, iterations, residual):
        self.alpha = alpha
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"evaluator: value iteration at alpha={alpha} did not converge "
                         f"in {iterations} iterations (residual {residual:.3e})")


def default_window(horizon: int) -> int:
    return min(horizon, max(100, horizon // 10))


@dataclass
class AverageCostEstimate:
    horizon: int
    j_n_over_n: float
    tail_sup: float
    tail_inf: float
    window: int
    running: np.ndarray = field(repr=False)  # J_k / k for k = 1..horizon


@dataclass
class PathwiseEstimate:
    horizon: int
    checkpoints: np.ndarray  # stage counts n at which running averages are recorded
    running: np.ndarray = field(repr=False)  # (n_paths, len(checkpoints))
    tail_inf: np.ndarray = field(repr=False)  # per-path min over the tail window
    tail_sup: np.ndarray = field(repr=False)
    window: int = 0
    quantiles: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.running[:, -1]

    @property
    def n_paths(self) -> int:
        return self.running.shape[0]


@dataclass
class DiscountedSolution:
    alpha: float
    values: np.ndarray
    m_alpha: float
    iterations: int
    residual: float
    policy: StationaryPolicy | None = None  # greedy policy w.r.t. the returned values


@dataclass
class SweepEntry:
    alpha: float
    m_alpha: float
    scaled_m_alpha: float
    iterations: int = 0
    error: str | None = None


def expected_cost_sequence(model: FiniteMdp, policy, initial, horizon: int) -> np.ndarray:
    """Exact expected stage costs E[c(x_k, a_k)], k = 0..horizon-1.

    Pushes the state distribution through the policy and the transition rows;
    no sampling.
    """
    d = as_distribution(initial, model.n_states)
    PT = model.transition_T
    weights = stage_weights(model, policy)
    ps = model.pair_state
    out = np.empty(horizon)
    for k in range(horizon):
        w = d[ps] * weights(k)
        out[k] = w @ model.cost
        if k + 1 < horizon:
            d = PT @ w
    return out


def expected_average_cost(model: FiniteMdp, policy, initial, horizon: int,
                          window: int | None = None) -> AverageCostEstimate:
    """J_n(pi, zeta)/n by exact forward recursion, with tail-window bracketing."""
    window = default_window(horizon) if window is None else window
    if window < 1 or horizon < window:
        raise ValueError(f"evaluator: need horizon >= window >= 1 (horizon={horizon}, window={window})")
    require_valid(model)
    check_policy(model, policy)
    stage = expected_cost_sequence(model, policy, initial, horizon)
    return _estimate_from_stage_costs(stage, window)


def _estimate_from_stage_costs(stage: np.ndarray, window: int) -> AverageCostEstimate:
    horizon = len(stage)
    running = np.cumsum(stage) / np.arange(1, horizon + 1)
    tail = running[horizon - window:]
    return AverageCostEstimate(horizon, float(running[-1]), float(tail.max()),
                               float(tail.min()), window, running)


def log_checkpoints(horizon: int, per_decade: int = 10) -> np.ndarray:
    """Distinct, logarithmically spaced stage counts in [1, horizon], always ending at horizon."""
    n = max(2, int(math.ceil(math.log10(max(horizon, 10)) * per_decade)) + 1)
    pts = np.unique(np.round(np.logspace(0, math.log10(horizon), n)).astype(np.int64)) if horizon > 1 else np.array([1])
    return np.unique(np.append(pts, horizon))


def pathwise_average_cost(model: FiniteMdp, policy, initial, horizon: int, n_paths: int,
                          seed: int, window: int | None = None,
                          batch_size: int = 1024) -> PathwiseEstimate:
    """Running averages n^-1 sum_{k<n} c(x_k, a_k) along simulated paths.

    Tail statistics cover every stage in the last ``window`` stages, not just
    the logarithmic checkpoints.
    """
    if n_paths < 1:
        raise ValueError("evaluator: n_paths must be >= 1")
    if horizon < 1:
        raise ValueError("evaluator: horizon must be >= 1")
    require_valid(model)
    check_policy(model, policy)
    window = default_window(horizon) if window is None else window
    checkpoints = log_checkpoints(horizon)
    cp_index = {int(n): i for i, n in enumerate(checkpoints)}
    zeta = as_distribution(initial, model.n_states)

    def batch(n, s):
        total = np.zeros(n)
        rec = np.empty((n, len(checkpoints)))
        lo = np.full(n, np.inf)
        hi = np.full(n, -np.inf)
        for k, (_, pairs) in enumerate(step_paths(model, policy, zeta, horizon, n, s)):
            total += model.cost[pairs]
            stage = k + 1
            if stage > horizon - window:
                avg = total / stage
                np.minimum(lo, avg, out=lo)
                np.maximum(hi, avg, out=hi)
            if stage in cp_index:
                rec[:, cp_index[stage]] = total / stage
        return rec, lo, hi

    parts = run_batches(batch, n_paths, seed, batch_size)
    running = np.vstack([p[0] for p in parts])
    lo = np.concatenate([p[1] for p in parts])
    hi = np.concatenate([p[2] for p in parts])
    qs = (0.05, 0.25, 0.5, 0.75, 0.95)
    quant = {q: float(v) for q, v in zip(qs, np.quantile(running[:, -1], qs))}
    return PathwiseEstimate(horizon, checkpoints, running, lo, hi, window, quant)


def default_max_iter(alpha: float, tol: float, cost_max: float = 1.0, margin: int = 100) -> int:
    # residual after k sweeps from v0 = 0 is at most alpha^k * max c
    scale = max(cost_max, 1.0)
    return int(math.ceil(math.log(tol * (1 - alpha) / scale) / math.log(alpha))) + margin


def bellman_q(model: FiniteMdp, alpha: float, v: np.ndarray, dense: bool | None = None) -> np.ndarray:
    P = model.dense_transition if _use_dense(model, dense) else model.transition
    return model.cost + alpha * (P @ v)


def _use_dense(model: FiniteMdp, dense: bool | None) -> bool:
    return dense if dense is not None else model.n_pairs * model.n_states <= 250_000


def greedy_policy(model: FiniteMdp, q: np.ndarray) -> StationaryPolicy:
    """Deterministic policy picking the first minimizing action in each state."""
    rows = []
    for x in range(model.n_states):
        seg = q[model.state_ptr[x]:model.state_ptr[x + 1]]
        r = np.zeros(len(seg))
        r[int(np.argmin(seg))] = 1.0
        rows.append(r)
    return StationaryPolicy(rows)


def discounted_value_iteration(model: FiniteMdp, alpha: float, tol: float = 1e-10,
                               max_iter: int | None = None) -> DiscountedSolution:
    """Optimal alpha-discounted values by value iteration from v0 = 0.

    Stops at the first iterate whose sup-norm Bellman residual
    ``||T v_k - v_k||`` is at most ``tol``; returns ``T v_k``.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"evaluator: alpha must lie in (0, 1), got {alpha}")
    if tol <= 0:
        raise ValueError("evaluator: tol must be positive")
    require_valid(model)
    if max_iter is None:
        max_iter = default_max_iter(alpha, tol, float(model.cost.max(initial=0.0)))
    P = model.dense_transition if _use_dense(model, None) else model.transition
    c = model.cost
    starts = model.state_ptr[:-1]
    v = np.zeros(model.n_states)
    residual = np.inf
    for it in range(1, max_iter + 1):
        q = c + alpha * (P @ v)
        v_new = np.minimum.reduceat(q, starts)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= tol:
            policy = greedy_policy(model, q)
            return DiscountedSolution(alpha, v, float(v.min()), it, residual, policy)
    raise NonConvergenceError(alpha, max_iter, residual)


def discount_sweep(model: FiniteMdp, alphas, tol: float = 1e-10,
                   max_iter: int | None = None) -> list[SweepEntry]:
    """(alpha, m_alpha, (1-alpha) m_alpha) for each alpha, in input order.

    A non-converged alpha yields an entry with NaN values and ``error`` set;
    the sweep continues.
    """
    alphas = list(alphas)
    bad = [a for a in alphas if not 0 < a < 1]
    if bad:
        raise ValueError(f"evaluator: alphas outside (0, 1): {bad}")
    out = []
    for a in alphas:
        try:
            sol = discounted_value_iteration(model, a, tol, max_iter)
        except NonConvergenceError as exc:
            out.append(SweepEntry(a, math.nan, math.nan, exc.iterations, str(exc)))
            continue
        out.append(SweepEntry(a, sol.m_alpha, (1 - a) * sol.m_alpha, sol.iterations))
    return out
