"""Recurrence, hitting times and f-regularity of induced Markov chains.

Two routes:

* exact series for birth-reset chains on {0, 1, 2, ...}: from i >= 1 the chain
  resets to 0 with probability beta_i and otherwise moves to i+1, so
  P_i(tau_0 > k) = prod_{j=i}^{i+k-1} (1 - beta_j);
* Monte Carlo hitting frequencies for any finite model and stationary policy.

Infinite series are only ever summed to a finite depth. A verdict of
divergence or convergence is attached only when a comparison test holds over
the whole probed tail (see :func:`probe_series`); otherwise the series is left
undecided and the report says ``not_classified``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .model import FiniteMdp, StationaryPolicy, check_policy, require_valid, run_batches, step_paths

DIVERGENCE_THRESHOLD = 1e8
MC_CENSOR_LIMIT = 0.01


@dataclass
class SeriesVerdict:
    status: str  # diverges | converges | undecided
    partial: float
    depth: int
    tail_bound: float = math.nan  # upper bound on the omitted tail when converging
    certificate: str = ""
    rate: float = math.nan  # c in T(k) >= c / index when the Raabe-type test certifies divergence

    def terms_to_exceed(self, threshold: float) -> float:
        """Extrapolated number of terms after which the partial sum passes ``threshold``."""
        if self.status != "diverges" or not self.rate > 0:
            return math.nan
        if self.partial >= threshold:
            return float(self.depth)
        return self.depth * math.exp(min(700.0, (threshold - self.partial) / self.rate))


def probe_series(terms: np.ndarray, first_index: int = 1, threshold: float = DIVERGENCE_THRESHOLD,
                 rel_slack: float = 1e-9) -> SeriesVerdict:
    """Classify sum_k terms[k] with terms indexed by n = first_index + k (n >= 1).

    Divergence: the partial sum exceeds ``threshold``, or n * T(n) is
    nondecreasing and positive over the tail window (second half of the terms),
    so T(n) >= c / n there.
    Convergence: the tail window is identically zero, or the ratio test holds
    with ratio r < 1 (tail <= T_last r / (1 - r)), or n^p T(n) is
    nonincreasing for some p in {1.9, 1.5, 1.25, 1.1} (integral comparison bound).
    """
    t = np.asarray(terms, dtype=float)
    depth = len(t)
    partial = float(t.sum())
    if partial > threshold:
        return SeriesVerdict("diverges", partial, depth, certificate=f"partial sum exceeds {threshold:g}")
    if depth < 8:
        return SeriesVerdict("undecided", partial, depth)
    k0 = depth // 2
    tail = t[k0:]
    idx = first_index + np.arange(k0, depth, dtype=float)
    last = float(tail[-1])
    n_last = float(idx[-1])
    if np.all(tail == 0):
        return SeriesVerdict("converges", partial, depth, 0.0, "terms vanish on the tail window")
    if np.all(tail > 0):
        g = idx * tail
        if np.all(g[1:] >= g[:-1] * (1 - rel_slack)):
            c = float(g.min())
            return SeriesVerdict("diverges", partial, depth,
                                 certificate=f"n*T(n) nondecreasing on [{idx[0]:.0f},{n_last:.0f}], T(n) >= {c:.6g}/n",
                                 rate=c)
        ratio = tail[1:] / tail[:-1]
        r = float(ratio.max())
        if r < 1 - 1e-3:
            return SeriesVerdict("converges", partial, depth, last * r / (1 - r),
                                 f"ratio test r = {r:.6g} on the tail window")
        for p in (1.9, 1.5, 1.25, 1.1):
            h = idx ** p * tail
            if np.all(h[1:] <= h[:-1] * (1 + rel_slack)):
                # T(n) <= T_last (n_last/n)^p for n > n_last
                bound = last * n_last ** p * n_last ** (1 - p) / (p - 1)
                return SeriesVerdict("converges", partial, depth, bound,
                                     f"n^{p:g} T(n) nonincreasing on the tail window")
    return SeriesVerdict("undecided", partial, depth)


@dataclass(frozen=True)
class ExpectedTime:
    """Expected hitting time, possibly +inf; keeps the partial sum at the cutoff."""

    value: float
    infinite: bool
    partial: float
    depth: int
    certificate: str = ""

    def __str__(self):
        if self.infinite:
            return f"inf(partial={self.partial:.6g}, depth={self.depth})"
        if math.isnan(self.value):
            return f"undetermined(partial={self.partial:.6g}, depth={self.depth})"
        return f"{self.value:.6g}"


@dataclass
class RecurrenceReport:
    states: np.ndarray
    target: tuple
    hitting_probability: np.ndarray
    expected_hitting_time: list
    escape_probability: np.ndarray
    classification: str  # positive_harris | positive_not_harris | not_classified
    f_regular: str = "not_classified"  # yes | no | not_classified
    escape_bounds: np.ndarray | None = None  # (n, 2) lower/upper
    censoring: np.ndarray | None = None
    standard_error: np.ndarray | None = None
    notes: list = field(default_factory=list)


@dataclass
class BirthResetChain:
    """Chain on {0, 1, ...}: P(0,0) = 1, P(i,0) = beta_i, P(i,i+1) = 1 - beta_i.

    ``beta`` and ``cost`` are vectorized maps of state arrays; ``beta`` is
    only evaluated at i >= 1.
    """

    beta: Callable[[np.ndarray], np.ndarray]
    cost: Callable[[np.ndarray], np.ndarray]
    truncation: int
    name: str = "custom"

    def betas(self, lo: int, hi: int) -> np.ndarray:
        """beta_i for i = lo..hi-1 (lo >= 1), validated to lie in (0, 1]."""
        i = np.arange(lo, hi, dtype=float)
        b = np.asarray(self.beta(i), dtype=float) * np.ones_like(i)
        if np.any(~(b > 0)) or np.any(b > 1):
            raise ValueError(f"chain-diagnostics: beta_i must lie in (0, 1] ({self.name})")
        return b

    def log_survival(self, top: int) -> np.ndarray:
        """L[j] = sum_{m=1}^{j} log(1 - beta_m) for j = 0..top (L[0] = 0)."""
        with np.errstate(divide="ignore"):
            logs = np.log1p(-self.betas(1, top + 1))
        return np.concatenate([[0.0], np.cumsum(logs)])

    def survival(self, start: int, n: int, L: np.ndarray | None = None) -> np.ndarray:
        """P_start(tau_0 > k) for k = 0..n-1."""
        if start == 0:
            return np.concatenate([[1.0], np.zeros(n - 1)])[:n]
        if L is None:
            L = self.log_survival(start + n)
        if not np.isfinite(L[start - 1]):
            # some beta_m = 1 below start; the chain from start is unaffected
            return np.exp(self._local_log_survival(start, n - 1))
        return np.exp(L[start - 1:start - 1 + n] - L[start - 1])

    def _local_log_survival(self, start: int, k: int) -> np.ndarray:
        """sum_{j=start}^{start+m-1} log(1 - beta_j) for m = 0..k."""
        with np.errstate(divide="ignore"):
            logs = np.log1p(-self.betas(start, start + k))
        return np.concatenate([[0.0], np.cumsum(logs)])

    def expected_cost_sequence(self, start: int, n: int) -> np.ndarray:
        """Exact E[c(x_k)], k < n, from ``start`` on the untruncated chain.

        The distribution at step k sits on {0, start + k} only.
        """
        c0 = float(np.asarray(self.cost(np.array([0.0])))[0])
        if start == 0:
            return np.full(n, c0)
        S = self.survival(start, n)
        ci = np.asarray(self.cost(np.arange(start, start + n, dtype=float)), dtype=float)
        return S * ci + (1 - S) * c0


def _escape(chain, L, i, depth):
    """Partial escape product over j = i..i+depth and the verdict on its limit."""
    top = i + depth
    if np.isfinite(L[i - 1]):
        upper = float(np.exp(L[top] - L[i - 1]))
    else:
        upper = float(np.exp(chain._local_log_survival(i, depth + 1)[-1]))
    if upper == 0.0:
        return 0.0, 0.0, "zero"
    with np.errstate(divide="ignore"):
        u = -np.log1p(-chain.betas(top + 1, top + 1 + depth))
    if np.any(np.isinf(u)):
        return upper, 0.0, "zero"
    v = probe_series(u, first_index=top + 1)
    if v.status == "diverges":
        return upper, 0.0, "zero"
    if v.status == "converges":
        return upper, upper * math.exp(-(v.partial + v.tail_bound)), "positive"
    return upper, 0.0, "undecided"


def _f_sum(chain, L, i, depth, f):
    S = chain.survival(i, depth + 1, L)
    fv = np.asarray(f(np.arange(i, i + depth + 1, dtype=float)), dtype=float) * np.ones(depth + 1)
    return probe_series(fv * S, first_index=1)


def _as_state_fn(f):
    if callable(f):
        return f
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return lambda idx: np.full(np.shape(idx), float(arr))

    def fn(idx):
        idx = np.asarray(idx, dtype=np.int64)
        if np.any(idx >= arr.size):
            raise ValueError("chain-diagnostics: f is not defined at every probed state")
        return arr[idx]
    return fn


def hitting_analysis_exact(chain: BirthResetChain, depth: int, starts=None) -> RecurrenceReport:
    """Escape probabilities and E_i[tau_0] of a birth-reset chain by series evaluation.

    For each start i the escape probability is the partial product over
    j = i..i+depth, bracketed below by a certified tail bound. E_i[tau_0] is
    sum_{k>=0} P_i(tau_0 > k), probed to ``depth`` terms.
    """
    if depth < 1:
        raise ValueError("chain-diagnostics: depth must be >= 1")
    starts = np.arange(0, chain.truncation + 1) if starts is None else np.asarray(starts, dtype=int)
    L = chain.log_survival(int(starts.max()) + depth + 1)
    n = len(starts)
    hit = np.empty(n)
    esc = np.empty(n)
    bounds = np.empty((n, 2))
    times = []
    verdicts = []
    for m, i in enumerate(starts):
        if i == 0:
            esc[m], bounds[m] = 0.0, (0.0, 0.0)
            times.append(ExpectedTime(1.0, False, 1.0, 1, "tau_0 = 1 from the absorbing state"))
            continue
        upper, lower, verdict = _escape(chain, L, int(i), depth)
        verdicts.append(verdict)
        esc[m] = 0.0 if verdict == "zero" else upper
        bounds[m] = (lower, upper)
        v = _f_sum(chain, L, int(i), depth, lambda s: np.ones_like(s))
        if v.status == "diverges":
            times.append(ExpectedTime(math.inf, True, v.partial, depth + 1, v.certificate))
        elif v.status == "converges":
            times.append(ExpectedTime(v.partial, False, v.partial, depth + 1,
                                      f"{v.certificate}; omitted tail <= {v.tail_bound:.3g}"))
        else:
            times.append(ExpectedTime(math.nan, False, v.partial, depth + 1, "undecided"))
    hit = 1.0 - esc
    if verdicts and all(v == "zero" for v in verdicts):
        cls = "positive_harris"
    elif any(v == "positive" for v in verdicts):
        cls = "positive_not_harris"
    else:
        cls = "not_classified"
    finite = [t for t, i in zip(times, starts) if i != 0]
    if any(t.infinite for t in finite):
        reg = "no"
    elif finite and all(not math.isnan(t.value) for t in finite):
        reg = "yes"
    else:
        reg = "not_classified"
    notes = ["psi-irreducibility holds structurally: every state reaches the reset state 0",
             "f_regular refers to f = 1 (regularity)"]
    return RecurrenceReport(starts, (0,), hit, times, esc, cls, reg, bounds, notes=notes)


@dataclass
class RegularityVerdict:
    verdict: str  # yes | no | not_classified
    per_state: dict  # start -> SeriesVerdict


def f_regularity_probe(chain: BirthResetChain, f, depth: int, starts=None) -> RegularityVerdict:
    """Probe E_i[sum_{k < tau_0} f(x_k)] = sum_k f(i+k) P_i(tau_0 > k) per start state.

    ``f`` is a vectorized function of the state or an array indexed by state,
    and must be >= 1. Returns ``no`` if any start certifiably diverges,
    ``yes`` if all certifiably converge.
    """
    fn = _as_state_fn(f)
    starts = np.arange(1, chain.truncation + 1) if starts is None else np.asarray(starts, dtype=int)
    probe_states = np.arange(0, int(starts.max()) + depth + 1, dtype=float)
    fvals = np.asarray(fn(probe_states), dtype=float) * np.ones_like(probe_states)
    if np.any(fvals < 1):
        bad = int(np.flatnonzero(fvals < 1)[0])
        raise ValueError(f"chain-diagnostics: f must be >= 1 everywhere (f({bad}) = {fvals[bad]:g})")
    L = chain.log_survival(int(starts.max()) + depth + 1)
    per = {}
    for i in starts:
        if i == 0:
            f0 = float(fvals[0])
            per[0] = SeriesVerdict("converges", f0, 1, 0.0, "tau_0 = 1 from state 0")
            continue
        per[int(i)] = _f_sum(chain, L, int(i), depth, fn)
    statuses = [v.status for v in per.values()]
    if "diverges" in statuses:
        verdict = "no"
    elif all(s == "converges" for s in statuses):
        verdict = "yes"
    else:
        verdict = "not_classified"
    return RegularityVerdict(verdict, per)


def closed_classes(P, tol: float = 0.0) -> list[np.ndarray]:
    """Closed communicating classes of a finite stochastic matrix (dense or sparse)."""
    adj = sp.csr_matrix(P)
    adj.data = (adj.data > tol).astype(np.int8)
    adj.eliminate_zeros()
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    coo = adj.tocoo()
    leaving = np.zeros(n_comp, dtype=bool)
    leaving[labels[coo.row][labels[coo.row] != labels[coo.col]]] = True
    return [np.flatnonzero(labels == comp) for comp in range(n_comp) if not leaving[comp]]


def hitting_analysis_mc(model: FiniteMdp, policy: StationaryPolicy, target_set, n_paths: int,
                        horizon: int, seed: int, starts=None,
                        batch_size: int = 1024) -> RecurrenceReport:
    """Empirical P_x(tau_B <= horizon) and censored mean of tau_B per start state.

    tau_B = min{n >= 1 : x_n in B}. Means are reported only when fewer than
    1% of the paths are censored. The run for the m-th start uses base seed
    ``seed + m * n_batches``.
    """
    target = tuple(sorted(int(b) for b in target_set))
    if not target:
        raise ValueError("chain-diagnostics: target set must be nonempty")
    require_valid(model)
    check_policy(model, policy)
    starts = np.arange(model.n_states) if starts is None else np.asarray(starts, dtype=int)
    in_b = np.zeros(model.n_states, dtype=bool)
    in_b[list(target)] = True
    n_batches = -(-n_paths // batch_size)

    def batch(n, s, x0):
        tau = np.full(n, -1, dtype=np.int64)
        for k, (states, _) in enumerate(step_paths(model, policy, x0, horizon + 1, n, s)):
            if k == 0:
                continue
            new = (tau < 0) & in_b[states]
            tau[new] = k
            if np.all(tau >= 0):
                break
        return tau

    hit, cens, se, times = [], [], [], []
    for m, x0 in enumerate(starts):
        parts = run_batches(lambda n, s: batch(n, s, int(x0)), n_paths, seed + m * n_batches, batch_size)
        tau = np.concatenate(parts)
        ok = tau >= 0
        frac = ok.mean()
        hit.append(frac)
        cens.append(1 - frac)
        se.append(math.sqrt(max(frac * (1 - frac), 0.0) / n_paths))
        censored_mean = float(np.where(ok, tau, horizon).mean())
        if 1 - frac < MC_CENSOR_LIMIT:
            times.append(ExpectedTime(censored_mean, False, censored_mean, horizon))
        else:
            times.append(ExpectedTime(math.nan, False, censored_mean, horizon,
                                      f"censoring {1 - frac:.3f} >= {MC_CENSOR_LIMIT}"))
    hit = np.array(hit)
    cens = np.array(cens)
    classes = closed_classes(model.sparse_markov_matrix(policy))
    notes = [f"{len(classes)} closed class(es) in the induced chain"]
    if (len(classes) == 1 and in_b[classes[0]].any() and np.all(cens < MC_CENSOR_LIMIT)):
        cls = "positive_harris"
        notes.append("single closed class reachable from every state; hitting frequencies decisive")
    else:
        cls = "not_classified"
    return RecurrenceReport(starts, target, hit, times, 1 - hit, cls, "not_classified",
                            censoring=cens, standard_error=np.array(se), notes=notes)
