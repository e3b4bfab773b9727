"""Finite MDP realizations, stationary/Markov policies and seeded simulation.

States and actions are integer labels. Admissible pairs (x, a) are stored in a
fixed order (state-major, then the order of ``actions[x]``), and every
per-pair array in the package (transition rows, costs, policy weights,
occupation measures) is indexed by that pair order.

Randomness comes from numpy's Philox4x32-10 counter-based generator. Paths are
simulated in vectorized batches; batch ``b`` of a run seeded with ``seed``
uses ``Philox(seed + b)``, so every batch can be replayed on its own.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

ROW_SUM_TOL = 1e-12
DEFAULT_BATCH = 1024


class InvalidModelError(ValueError):
    """Raised when a model or policy violates its invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("mdp-core: invalid input: " + "; ".join(self.violations))


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Finite MDP with admissible-action lists, sparse transition rows and costs.

    Parameters
    ----------
    n_states : int
        Number of states, labelled ``0 .. n_states-1``.
    actions : sequence of sequences of int
        ``actions[x]`` lists the admissible action labels at ``x``.
    transition : array_like or sparse matrix, shape (n_pairs, n_states)
        Row ``k`` is the distribution of the next state for the ``k``-th pair.
    cost : array_like, shape (n_pairs,)
        One-stage cost of each admissible pair. Pairs outside the graph are
        simply absent (their cost is +inf).
    truncation_note : str
        Free text recording how an infinite model was truncated.
    """

    n_states: int
    actions: tuple
    transition: sp.csr_matrix
    cost: np.ndarray
    truncation_note: str = ""

    def __post_init__(self):
        actions = tuple(tuple(int(a) for a in acts) for acts in self.actions)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "n_states", int(self.n_states))
        if len(actions) != self.n_states:
            raise ValueError(f"mdp-core: {len(actions)} action lists for {self.n_states} states")
        P = sp.csr_matrix(self.transition, dtype=float)
        P.sum_duplicates()
        P.eliminate_zeros()
        P.sort_indices()
        c = np.asarray(self.cost, dtype=float).ravel()
        n_pairs = sum(len(a) for a in actions)
        if P.shape != (n_pairs, self.n_states):
            raise ValueError(f"mdp-core: transition shape {P.shape}, expected {(n_pairs, self.n_states)}")
        if c.shape != (n_pairs,):
            raise ValueError(f"mdp-core: cost shape {c.shape}, expected {(n_pairs,)}")
        P.data.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "cost", c)

    @classmethod
    def from_rows(cls, n_states, actions, rows, costs, truncation_note=""):
        """Build a model from ``{(x, a): row}`` and ``{(x, a): cost}`` mappings.

        Rows may be dense sequences of length ``n_states`` or ``{y: prob}`` dicts.
        """
        pairs = [(x, a) for x, acts in enumerate(actions) for a in acts]
        data, indices, indptr = [], [], [0]
        for pair in pairs:
            row = rows[pair]
            if isinstance(row, dict):
                items = sorted(row.items())
            else:
                items = [(y, p) for y, p in enumerate(row) if p != 0]
            indices.extend(int(y) for y, _ in items)
            data.extend(float(p) for _, p in items)
            indptr.append(len(indices))
        P = sp.csr_matrix((data, indices, indptr), shape=(len(pairs), n_states))
        return cls(n_states, actions, P, [costs[p] for p in pairs], truncation_note)

    @property
    def n_pairs(self) -> int:
        return self.transition.shape[0]

    @cached_property
    def pairs(self) -> tuple:
        return tuple((x, a) for x, acts in enumerate(self.actions) for a in acts)

    @cached_property
    def state_ptr(self) -> np.ndarray:
        """Pairs of state ``x`` occupy ``state_ptr[x]:state_ptr[x+1]``."""
        return np.concatenate([[0], np.cumsum([len(a) for a in self.actions])]).astype(np.int64)

    @cached_property
    def pair_state(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_states), np.diff(self.state_ptr))

    @cached_property
    def pair_action(self) -> np.ndarray:
        return np.array([a for acts in self.actions for a in acts], dtype=np.int64)

    @cached_property
    def transition_T(self) -> sp.csr_matrix:
        return self.transition.T.tocsr()

    @cached_property
    def dense_transition(self) -> np.ndarray:
        return self.transition.toarray()

    def pair_index(self, x: int, a: int) -> int:
        try:
            return int(self.state_ptr[x]) + self.actions[x].index(a)
        except (ValueError, IndexError):
            raise KeyError(f"({x}, {a}) is not an admissible pair") from None

    def row(self, x: int, a: int) -> np.ndarray:
        return self.transition.getrow(self.pair_index(x, a)).toarray().ravel()

    def pair_cost(self, x: int, a: int) -> float:
        return float(self.cost[self.pair_index(x, a)])

    def markov_matrix(self, policy: "StationaryPolicy") -> np.ndarray:
        """Dense state transition matrix of the chain induced by ``policy``."""
        w = policy.pair_weights(self)
        return np.asarray(_aggregate(self, w[:, None] * self.dense_transition))

    def sparse_markov_matrix(self, policy: "StationaryPolicy") -> sp.csr_matrix:
        """Same as :meth:`markov_matrix`, kept sparse."""
        w = policy.pair_weights(self)
        agg = sp.csr_matrix((w, (self.pair_state, np.arange(self.n_pairs))),
                            shape=(self.n_states, self.n_pairs))
        return (agg @ self.transition).tocsr()

    def policy_cost(self, policy: "StationaryPolicy") -> np.ndarray:
        """Expected one-stage cost per state, c_mu(x)."""
        return _aggregate(self, policy.pair_weights(self) * self.cost)

    @cached_property
    def _sampler(self):
        # Row k's cumulative probabilities shifted by k, so one searchsorted call
        # samples every row at once (target = k + u).
        P = self.transition
        counts = np.diff(P.indptr)
        cum = np.empty_like(P.data)
        for k in range(P.shape[0]):
            s, e = P.indptr[k], P.indptr[k + 1]
            if e > s:
                seg = np.cumsum(P.data[s:e])
                seg /= seg[-1]
                seg[-1] = 1.0
                cum[s:e] = seg
        cum = cum + np.repeat(np.arange(P.shape[0]), counts)
        return cum, P.indices.copy()


def _aggregate(model: FiniteMdp, values: np.ndarray) -> np.ndarray:
    """Sum per-pair values (first axis) into per-state values."""
    return np.add.reduceat(values, model.state_ptr[:-1], axis=0) if model.n_pairs else values


def validate_model(model: FiniteMdp) -> list[str]:
    """Return every invariant violation of ``model`` (empty iff well formed)."""
    out = []
    for x, acts in enumerate(model.actions):
        if not acts:
            out.append(f"empty action set at state {x}")
        if len(set(acts)) != len(acts):
            out.append(f"duplicate actions at state {x}")
    P = model.transition
    sums = np.asarray(P.sum(axis=1)).ravel()
    for k, (x, a) in enumerate(model.pairs):
        row = P.data[P.indptr[k]:P.indptr[k + 1]]
        if abs(sums[k] - 1.0) > ROW_SUM_TOL:
            out.append(f"row sum {sums[k]:.12g} at ({x},{a})")
        if np.any(row < 0):
            out.append(f"negative transition probability at ({x},{a})")
        if not np.all(np.isfinite(row)):
            out.append(f"non-finite transition probability at ({x},{a})")
        c = model.cost[k]
        if not np.isfinite(c):
            out.append(f"non-finite cost at ({x},{a})")
        elif c < 0:
            out.append(f"negative cost {c:g} at ({x},{a})")
    return out


def require_valid(model: FiniteMdp) -> None:
    violations = validate_model(model)
    if violations:
        raise InvalidModelError(violations)


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """Stationary randomized policy; ``mu[x]`` is a distribution over ``actions[x]``."""

    mu: tuple

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(np.asarray(r, dtype=float) for r in self.mu))

    @classmethod
    def uniform(cls, model: FiniteMdp) -> "StationaryPolicy":
        return cls([np.full(len(a), 1.0 / len(a)) for a in model.actions])

    @classmethod
    def deterministic(cls, model: FiniteMdp, choice: Sequence[int]) -> "StationaryPolicy":
        """Policy taking action *label* ``choice[x]`` in state ``x``."""
        rows = []
        for acts, a in zip(model.actions, choice):
            r = np.zeros(len(acts))
            r[acts.index(int(a))] = 1.0
            rows.append(r)
        return cls(rows)

    @classmethod
    def from_pair_weights(cls, model: FiniteMdp, w) -> "StationaryPolicy":
        w = np.asarray(w, dtype=float)
        return cls([w[model.state_ptr[x]:model.state_ptr[x + 1]] for x in range(model.n_states)])

    def pair_weights(self, model: FiniteMdp) -> np.ndarray:
        return np.concatenate(self.mu) if self.mu else np.zeros(0)

    def violations(self, model: FiniteMdp) -> list[str]:
        out = []
        if len(self.mu) != model.n_states:
            return [f"policy has {len(self.mu)} rows for {model.n_states} states"]
        for x, (row, acts) in enumerate(zip(self.mu, model.actions)):
            if row.shape != (len(acts),):
                out.append(f"policy row {x} has {row.size} entries for {len(acts)} actions")
            elif np.any(row < 0) or abs(row.sum() - 1.0) > ROW_SUM_TOL:
                out.append(f"policy row {x} is not a distribution (sum {row.sum():.12g})")
        return out


@dataclass(frozen=True, eq=False)
class MarkovPolicySequence:
    """Per-stage stationary kernels; beyond the prefix the last is held or the list cycles."""

    policies: tuple
    mode: str = "hold"

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        if not self.policies:
            raise ValueError("mdp-core: MarkovPolicySequence must be nonempty")
        if self.mode not in ("hold", "cycle"):
            raise ValueError(f"mdp-core: unknown policy sequence mode {self.mode!r}")

    def at(self, stage: int) -> StationaryPolicy:
        n = len(self.policies)
        if self.mode == "cycle":
            return self.policies[stage % n]
        return self.policies[min(stage, n - 1)]


def policy_at(policy, stage: int) -> StationaryPolicy:
    return policy.at(stage) if isinstance(policy, MarkovPolicySequence) else policy


def stage_weights(model: FiniteMdp, policy):
    """Return ``weights(k)`` giving the pair weights used at stage k (cached per kernel)."""
    cache = {}

    def weights(k):
        pol = policy_at(policy, k)
        w = cache.get(id(pol))
        if w is None:
            w = cache[id(pol)] = pol.pair_weights(model)
        return w
    return weights


def check_policy(model: FiniteMdp, policy) -> None:
    pols = policy.policies if isinstance(policy, MarkovPolicySequence) else (policy,)
    violations = [v for p in pols for v in p.violations(model)]
    if violations:
        raise InvalidModelError(violations)


def as_distribution(initial, n_states: int) -> np.ndarray:
    """Accept a state index or a probability vector and return a vector."""
    if np.isscalar(initial):
        zeta = np.zeros(n_states)
        zeta[int(initial)] = 1.0
        return zeta
    zeta = np.asarray(initial, dtype=float)
    if zeta.shape != (n_states,) or np.any(zeta < 0) or abs(zeta.sum() - 1.0) > 1e-9:
        raise InvalidModelError(["initial distribution is not a probability vector over states"])
    return zeta


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One simulated path: ``states[k]``, ``actions[k]``, ``costs[k]`` for k < horizon."""

    seed: int
    initial_distribution: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    costs: np.ndarray
    pair_indices: np.ndarray = field(repr=False)

    @property
    def steps(self) -> list:
        return list(zip(self.states.tolist(), self.actions.tolist(), self.costs.tolist()))

    def __len__(self):
        return len(self.states)


def threads() -> int:
    try:
        return max(1, int(os.environ.get("MINPAIR_THREADS", "1")))
    except ValueError:
        return 1


def _policy_cum(model: FiniteMdp, pol: StationaryPolicy) -> np.ndarray:
    w = pol.pair_weights(model)
    cum = np.empty_like(w)
    for x in range(model.n_states):
        s, e = model.state_ptr[x], model.state_ptr[x + 1]
        seg = np.cumsum(w[s:e])
        seg /= seg[-1]
        seg[-1] = 1.0
        cum[s:e] = seg + x
    return cum


def step_paths(model: FiniteMdp, policy, initial, horizon: int, n_paths: int,
               seed: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(states, pair_indices)`` for stages 0..horizon-1 of one batch.

    All ``n_paths`` paths advance together from a single ``Philox(seed)``
    stream. Draw order per stage: initial state (stage 0 only), actions, then
    next states.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    zeta = as_distribution(initial, model.n_states)
    zcum = np.cumsum(zeta)
    zcum /= zcum[-1]
    states = np.minimum(np.searchsorted(zcum, rng.random(n_paths), side="right"),
                        model.n_states - 1)
    single_action = bool(np.all(np.diff(model.state_ptr) == 1))
    tcum, tind = model._sampler
    pcum_cache = {}
    for k in range(horizon):
        if single_action:
            pairs = model.state_ptr[states]
        else:
            pol = policy_at(policy, k)
            key = id(pol)
            if key not in pcum_cache:
                pcum_cache[key] = _policy_cum(model, pol)
            pcum = pcum_cache[key]
            target = states + rng.random(n_paths)
            pairs = np.searchsorted(pcum, target, side="right")
            # guard against round-off at the segment ends
            pairs = np.clip(pairs, model.state_ptr[states], model.state_ptr[states + 1] - 1)
        yield states, pairs
        if k + 1 < horizon:
            target = pairs + rng.random(n_paths)
            pos = np.searchsorted(tcum, target, side="right")
            pos = np.clip(pos, model.transition.indptr[pairs], model.transition.indptr[pairs + 1] - 1)
            states = tind[pos]


def simulate(model: FiniteMdp, policy, initial, horizon: int, seed: int) -> Trajectory:
    """Simulate one path of exactly ``horizon`` stages.

    Identical arguments give bit-identical trajectories. The path equals the
    single-path batch of :func:`step_paths` seeded with ``seed``.
    """
    if horizon < 1:
        raise ValueError("mdp-core: horizon must be >= 1")
    require_valid(model)
    check_policy(model, policy)
    zeta = as_distribution(initial, model.n_states)
    states = np.empty(horizon, dtype=np.int64)
    pairs = np.empty(horizon, dtype=np.int64)
    for k, (s, p) in enumerate(step_paths(model, policy, zeta, horizon, 1, seed)):
        states[k] = s[0]
        pairs[k] = p[0]
    return Trajectory(seed, zeta, states, model.pair_action[pairs], model.cost[pairs], pairs)


def run_batches(fn: Callable[[int, int], object], n_paths: int, seed: int,
                batch_size: int = DEFAULT_BATCH) -> list:
    """Call ``fn(batch_paths, seed + b)`` for each batch ``b``; results in batch order.

    Batches run on up to ``MINPAIR_THREADS`` worker threads.
    """
    sizes = [min(batch_size, n_paths - s) for s in range(0, n_paths, batch_size)]
    jobs = [(n, seed + b) for b, n in enumerate(sizes)]
    workers = min(threads(), len(jobs))
    if workers <= 1:
        return [fn(n, s) for n, s in jobs]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
