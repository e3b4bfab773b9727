"""Occupation measures on admissible pairs and their stationary-pair decomposition."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import FiniteMdp, StationaryPolicy, Trajectory, as_distribution, stage_weights

MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class OccupationMeasure:
    """Probability weights over the admissible pairs of ``model`` (pair order)."""

    model: FiniteMdp
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.model.n_pairs,):
            raise ValueError(f"occupancy: weights shape {w.shape}, expected ({self.model.n_pairs},)")
        if np.any(w < -MASS_TOL) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"occupancy: weights are not a probability vector (sum {w.sum():.12g})")
        object.__setattr__(self, "weights", w)

    def state_marginal(self) -> np.ndarray:
        return np.add.reduceat(self.weights, self.model.state_ptr[:-1])

    def average_cost(self) -> float:
        return float(self.weights @ self.model.cost)

    def weight(self, x: int, a: int) -> float:
        return float(self.weights[self.model.pair_index(x, a)])

    def items(self):
        """(x, a, weight) triples for pairs with nonzero weight."""
        return [(x, a, float(w)) for (x, a), w in zip(self.model.pairs, self.weights) if w != 0]


@dataclass
class StationaryPairReport:
    policy: StationaryPolicy
    state_marginal: np.ndarray
    average_cost: float
    invariance_residual: float


def exact_cesaro_occupancy(model: FiniteMdp, policy, initial, n: int,
                           first_stage: int = 0) -> OccupationMeasure:
    """Average of the exact pair marginals of stages ``first_stage .. first_stage+n-1``.

    With the default ``first_stage=0`` the integral of the cost equals
    ``J_n / n`` exactly.
    """
    if n < 1:
        raise ValueError("occupancy: n must be >= 1")
    d = as_distribution(initial, model.n_states)
    PT = model.transition_T
    acc = np.zeros(model.n_pairs)
    weights = stage_weights(model, policy)
    for k in range(first_stage + n):
        w = d[model.pair_state] * weights(k)
        if k >= first_stage:
            acc += w
        d = PT @ w
    acc /= n
    return OccupationMeasure(model, acc / acc.sum())


def empirical_occupancy(model: FiniteMdp, trajectory: Trajectory) -> OccupationMeasure:
    """Normalized visit counts of the pairs along a trajectory."""
    if len(trajectory) == 0:
        raise ValueError("occupancy: empty trajectory")
    counts = np.bincount(trajectory.pair_indices, minlength=model.n_pairs).astype(float)
    return OccupationMeasure(model, counts / counts.sum())


def invariant_mass_residual(model: FiniteMdp, weights: np.ndarray) -> float:
    """max_y |p(y) - sum_{(x,a)} q(y|x,a) gamma(x,a)| for pair weights gamma."""
    p = np.add.reduceat(weights, model.state_ptr[:-1])
    return float(np.max(np.abs(p - model.transition_T @ weights)))


def decompose(gamma: OccupationMeasure) -> StationaryPairReport:
    """Split gamma into (mu, p) with gamma(x, a) = mu(a|x) p(x).

    States with p(x) = 0 get the uniform distribution on A(x).
    """
    model = gamma.model
    p = gamma.state_marginal()
    rows = []
    for x in range(model.n_states):
        seg = gamma.weights[model.state_ptr[x]:model.state_ptr[x + 1]]
        if p[x] > 0:
            rows.append(np.clip(seg, 0, None) / seg.clip(0, None).sum())
        else:
            rows.append(np.full(len(seg), 1.0 / len(seg)))
    policy = StationaryPolicy(rows)
    return StationaryPairReport(policy, p, gamma.average_cost(),
                                invariant_mass_residual(model, gamma.weights))


def pair_weights_of(model: FiniteMdp, policy: StationaryPolicy, p) -> np.ndarray:
    return np.asarray(p)[model.pair_state] * policy.pair_weights(model)


def invariance_residual(model: FiniteMdp, pair: StationaryPairReport) -> float:
    """Max-norm balance violation of (mu, p); zero iff p is invariant under mu."""
    p = np.asarray(pair.state_marginal, dtype=float)
    if p.shape != (model.n_states,):
        raise ValueError("occupancy: state marginal does not match the model")
    return invariant_mass_residual(model, pair_weights_of(model, pair.policy, p))


def make_pair_report(model: FiniteMdp, policy: StationaryPolicy, p) -> StationaryPairReport:
    w = pair_weights_of(model, policy, p)
    return StationaryPairReport(policy, np.asarray(p, dtype=float), float(w @ model.cost),
                                invariant_mass_residual(model, w))
