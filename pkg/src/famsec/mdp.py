"""Tabular discounted MDPs: value iteration, greedy policies and Monte Carlo rollouts.

Transitions are kept in a compressed sparse row layout with one row per
``(state, action)`` pair (row index ``s * n_actions + a``); each stored entry
carries a next state, its probability and the reward for that triple.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator

from ._validation import check_finite_real, check_positive_int
from .exceptions import InvalidInputError, NotFittedError

PROB_ATOL = 1e-9
DEFAULT_TRUNCATION_EPS = 1e-6
_CHUNK = 256


def _readonly(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mdp:
    """Immutable tabular MDP.

    Use :meth:`from_triplets` rather than the raw constructor unless the CSR
    arrays are already at hand. Terminal states must self-loop with
    probability one and reward zero.
    """

    n_states: int
    n_actions: int
    indptr: np.ndarray
    next_states: np.ndarray
    probs: np.ndarray
    rewards: np.ndarray
    discount: float
    terminals: frozenset = field(default_factory=frozenset)
    initial_state: int = 0

    def __post_init__(self):
        check_positive_int(self.n_states, "n_states")
        check_positive_int(self.n_actions, "n_actions")
        if not 0.0 < float(self.discount) < 1.0:
            raise InvalidInputError(f"discount must lie in (0, 1), got {self.discount}")
        n_rows = self.n_states * self.n_actions
        indptr = np.asarray(self.indptr, dtype=np.int64)
        nxt = np.asarray(self.next_states, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=float)
        rew = np.asarray(self.rewards, dtype=float)
        if indptr.shape != (n_rows + 1,) or indptr[0] != 0 or np.any(np.diff(indptr) < 0):
            raise InvalidInputError("indptr must be a non-decreasing array of length n_states*n_actions+1")
        if not (nxt.shape == probs.shape == rew.shape == (indptr[-1],)):
            raise InvalidInputError("next_states, probs and rewards must all have length indptr[-1]")
        if np.any(np.diff(indptr) == 0):
            raise InvalidInputError("every (state, action) pair needs at least one successor")
        if nxt.size and (nxt.min() < 0 or nxt.max() >= self.n_states):
            raise InvalidInputError("transition references a state index >= n_states")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise InvalidInputError("transition probabilities must be finite and nonnegative")
        if not np.all(np.isfinite(rew)):
            raise InvalidInputError("rewards must be finite")
        row_sums = np.add.reduceat(probs, indptr[:-1])
        if np.any(np.abs(row_sums - 1.0) > PROB_ATOL):
            bad = int(np.argmax(np.abs(row_sums - 1.0)))
            s, a = divmod(bad, self.n_actions)
            raise InvalidInputError(
                f"transition distribution for (s={s}, a={a}) sums to {row_sums[bad]!r}"
            )
        terminals = frozenset(int(t) for t in self.terminals)
        for t in terminals:
            if not 0 <= t < self.n_states:
                raise InvalidInputError(f"terminal state {t} out of range")
            for a in range(self.n_actions):
                lo, hi = indptr[t * self.n_actions + a], indptr[t * self.n_actions + a + 1]
                if not (hi - lo == 1 and nxt[lo] == t and rew[lo] == 0.0):
                    raise InvalidInputError(
                        f"terminal state {t} must self-loop with reward 0 under action {a}"
                    )
        if not 0 <= int(self.initial_state) < self.n_states:
            raise InvalidInputError("initial_state out of range")
        object.__setattr__(self, "indptr", _readonly(indptr))
        object.__setattr__(self, "next_states", _readonly(nxt))
        object.__setattr__(self, "probs", _readonly(probs))
        object.__setattr__(self, "rewards", _readonly(rew))
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "terminals", terminals)
        object.__setattr__(self, "initial_state", int(self.initial_state))

    @classmethod
    def from_triplets(cls, n_states, n_actions, triplets, discount, terminals=(), initial_state=0):
        """Build an MDP from ``(s, a, s_next, p, r)`` tuples.

        Entries with the same ``(s, a, s_next)`` must agree on the reward and
        have their probabilities summed. Terminal states get their
        self-loops added automatically; any triplets given for them are
        ignored. Zero-probability entries are dropped.
        """
        terminals = frozenset(int(t) for t in terminals)
        rows = {}
        for s, a, s2, p, r in triplets:
            s, a, s2 = int(s), int(a), int(s2)
            if not (0 <= s < n_states and 0 <= a < n_actions):
                raise InvalidInputError(f"triplet ({s}, {a}, ...) out of range")
            if s in terminals or p == 0:
                continue
            row = rows.setdefault(s * n_actions + a, {})
            if s2 in row:
                p0, r0 = row[s2]
                if r0 != r:
                    raise InvalidInputError(f"conflicting rewards for ({s}, {a}, {s2})")
                row[s2] = (p0 + p, r0)
            else:
                row[s2] = (float(p), float(r))
        for t in terminals:
            for a in range(n_actions):
                rows[t * n_actions + a] = {t: (1.0, 0.0)}
        indptr = [0]
        nxt, probs, rew = [], [], []
        for i in range(n_states * n_actions):
            row = rows.get(i, {})
            for s2 in sorted(row):
                p, r = row[s2]
                nxt.append(s2)
                probs.append(p)
                rew.append(r)
            indptr.append(len(nxt))
        return cls(
            n_states=n_states,
            n_actions=n_actions,
            indptr=np.array(indptr),
            next_states=np.array(nxt, dtype=np.int64),
            probs=np.array(probs, dtype=float),
            rewards=np.array(rew, dtype=float),
            discount=discount,
            terminals=terminals,
            initial_state=initial_state,
        )

    def triplets(self):
        """Yield ``(s, a, s_next, p, r)`` for every stored transition entry."""
        for row in range(self.n_states * self.n_actions):
            s, a = divmod(row, self.n_actions)
            for j in range(self.indptr[row], self.indptr[row + 1]):
                yield s, a, int(self.next_states[j]), float(self.probs[j]), float(self.rewards[j])

    @cached_property
    def transition_matrix(self):
        """Sparse ``(n_states * n_actions, n_states)`` matrix of probabilities."""
        return sp.csr_matrix(
            (self.probs, self.next_states, self.indptr),
            shape=(self.n_states * self.n_actions, self.n_states),
        )

    @cached_property
    def expected_rewards(self):
        """Expected one-step reward per row, shaped ``(n_states, n_actions)``."""
        r = np.add.reduceat(self.probs * self.rewards, self.indptr[:-1])
        return _readonly(r.reshape(self.n_states, self.n_actions))

    @cached_property
    def terminal_mask(self):
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.terminals)] = True
        return _readonly(mask)

    @cached_property
    def r_max(self):
        """Largest absolute reward over all stored transitions."""
        return float(np.max(np.abs(self.rewards))) if self.rewards.size else 0.0

    @cached_property
    def _row_cumulative(self):
        # Row-offset CDF: row i occupies (i, i + 1]; last entry pinned to i + 1.
        counts = np.diff(self.indptr)
        row_of = np.repeat(np.arange(self.n_states * self.n_actions), counts)
        total = np.concatenate([[0.0], np.cumsum(self.probs)])
        cum = total[1:] - np.repeat(total[self.indptr[:-1]], counts)
        cum[self.indptr[1:] - 1] = 1.0
        return _readonly(row_of + cum)


def _check_values(mdp, v):
    v = np.asarray(v, dtype=float)
    if v.shape != (mdp.n_states,):
        raise InvalidInputError(f"value function has shape {v.shape}, expected ({mdp.n_states},)")
    return v


def _check_policy(mdp, policy):
    policy = np.asarray(policy)
    if policy.shape != (mdp.n_states,) or not np.issubdtype(policy.dtype, np.integer):
        raise InvalidInputError(f"policy must be an integer array of length {mdp.n_states}")
    if policy.size and (policy.min() < 0 or policy.max() >= mdp.n_actions):
        raise InvalidInputError("policy entry out of action range")
    return policy.astype(np.int64)


def q_values(mdp, v):
    """One-step lookahead action values, shape ``(n_states, n_actions)``."""
    v = _check_values(mdp, v)
    q = mdp.expected_rewards + mdp.discount * (mdp.transition_matrix @ v).reshape(
        mdp.n_states, mdp.n_actions
    )
    q[mdp.terminal_mask] = 0.0
    return q


def bellman_backup(mdp, v):
    """Apply the optimality operator once; return ``(new_values, sup_norm_change)``."""
    v = _check_values(mdp, v)
    new = q_values(mdp, v).max(axis=1)
    return new, float(np.max(np.abs(new - v)))


def greedy_policy(mdp, v):
    """Argmax of the one-step backup, ties going to the lowest action index."""
    return np.argmax(q_values(mdp, v), axis=1).astype(np.int64)


def policy_evaluation(mdp, policy):
    """Exact value of a stationary policy via a sparse linear solve."""
    policy = _check_policy(mdp, policy)
    rows = np.arange(mdp.n_states) * mdp.n_actions + policy
    P = mdp.transition_matrix[rows]
    r = mdp.expected_rewards[np.arange(mdp.n_states), policy].copy()
    keep = sp.diags((~mdp.terminal_mask).astype(float))
    r[mdp.terminal_mask] = 0.0
    A = sp.identity(mdp.n_states, format="csr") - mdp.discount * (keep @ P)
    return np.asarray(spla.spsolve(A.tocsc(), r), dtype=float)


@dataclass(frozen=True)
class SolveResult:
    value: np.ndarray
    policy: np.ndarray
    residual: float
    iterations: int
    converged: bool
    solver_label: str

    def summary(self, state):
        return {
            "solver": self.solver_label,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "start_value": float(self.value[state]),
        }


def value_iteration(mdp, tolerance=1e-8, max_iterations=10_000, label=None):
    """Iterate Bellman backups from zero until the sup-norm change is at most ``tolerance``.

    Exhausting ``max_iterations`` is not an error; the result just has
    ``converged=False``. With a zero budget no backup runs, the value stays at
    zero and the policy is action 0 everywhere.
    """
    tolerance = check_finite_real(tolerance, "tolerance")
    if tolerance <= 0:
        raise InvalidInputError("tolerance must be > 0")
    max_iterations = check_positive_int(max_iterations, "max_iterations", allow_zero=True)
    if label is None:
        label = f"value_iteration(tol={tolerance:g}, max_iter={max_iterations})"
    v = np.zeros(mdp.n_states)
    if max_iterations == 0:
        return SolveResult(
            _readonly(v), _readonly(np.zeros(mdp.n_states, dtype=np.int64)),
            math.inf, 0, False, label,
        )
    residual = math.inf
    converged = False
    it = 0
    while it < max_iterations:
        v, residual = bellman_backup(mdp, v)
        it += 1
        if residual <= tolerance:
            converged = True
            break
    return SolveResult(
        _readonly(v), _readonly(greedy_policy(mdp, v)), residual, it, converged, label
    )


def trusted_solve(mdp, tolerance=1e-8, max_iterations=100_000):
    """Gold-standard solve: value iteration run to convergence."""
    return value_iteration(mdp, tolerance, max_iterations, label=f"trusted(tol={tolerance:g})")


def candidate_solve(mdp, budget, tolerance=1e-8):
    """Resource-constrained solve: value iteration truncated at ``budget`` sweeps."""
    return value_iteration(mdp, tolerance, budget, label=f"candidate(budget={budget})")


def truncation_horizon(discount, r_max, eps=DEFAULT_TRUNCATION_EPS):
    """Smallest ``H`` with ``discount**H * r_max / (1 - discount) <= eps``."""
    if r_max <= 0:
        return 1
    h = math.ceil(math.log(eps * (1.0 - discount) / r_max) / math.log(discount))
    return max(1, h)


def truncation_bound(discount, r_max, horizon):
    """Worst-case discounted reward left out by stopping after ``horizon`` steps."""
    return discount**horizon * r_max / (1.0 - discount)


def rollout_stream(master_seed, index):
    """Independent generator for rollout ``index`` under ``master_seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(index),)))


def _simulate(mdp, policy, s0, uniforms, record=False):
    """Run rollouts in lockstep, one row of ``uniforms`` per rollout."""
    n, horizon = uniforms.shape
    state = np.full(n, s0, dtype=np.int64)
    returns = np.zeros(n)
    disc = np.ones(n)
    active = ~mdp.terminal_mask[state]
    cum = mdp._row_cumulative
    indptr = mdp.indptr
    path = [state.copy()] if record else None
    for k in range(horizon):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        rows = state[idx] * mdp.n_actions + policy[state[idx]]
        j = np.searchsorted(cum, rows + uniforms[idx, k], side="right")
        j = np.clip(j, indptr[rows], indptr[rows + 1] - 1)
        returns[idx] += disc[idx] * mdp.rewards[j]
        disc[idx] *= mdp.discount
        state[idx] = mdp.next_states[j]
        active[idx] = ~mdp.terminal_mask[state[idx]]
        if record:
            path.append(state.copy())
    return returns, path


def rollout(mdp, policy, s0, horizon, rng):
    """Simulate one episode from ``s0`` for at most ``horizon`` steps.

    Returns ``(trajectory, discounted_return)`` where the trajectory lists the
    visited states, starting with ``s0``.
    """
    policy = _check_policy(mdp, policy)
    horizon = check_positive_int(horizon, "horizon")
    u = rng.random(horizon)[None, :]
    ret, path = _simulate(mdp, policy, int(s0), u, record=True)
    return [int(p[0]) for p in path], float(ret[0])


@dataclass(frozen=True)
class OutcomeSamples:
    """Empirical distribution of discounted returns from repeated rollouts."""

    returns: np.ndarray
    horizon: int
    seed: int

    @property
    def n(self):
        return int(self.returns.size)


def _thread_count():
    raw = os.environ.get("FAMSEC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidInputError(f"FAMSEC_THREADS must be an integer, got {raw!r}") from None


def sample_return_distribution(mdp, policy, s0, n, horizon=None, master_seed=0, n_jobs=None):
    """Draw ``n`` independent rollout returns.

    Rollout ``i`` uses :func:`rollout_stream` ``(master_seed, i)``, so the
    result does not depend on ``n_jobs`` (default: ``$FAMSEC_THREADS``).
    """
    policy = _check_policy(mdp, policy)
    n = check_positive_int(n, "n")
    if not 0 <= int(s0) < mdp.n_states:
        raise InvalidInputError(f"start state {s0} out of range")
    if horizon is None:
        horizon = truncation_horizon(mdp.discount, mdp.r_max)
    horizon = check_positive_int(horizon, "horizon")
    n_jobs = _thread_count() if n_jobs is None else max(1, int(n_jobs))

    def run_chunk(start):
        stop = min(start + _CHUNK, n)
        u = np.stack([rollout_stream(master_seed, i).random(horizon) for i in range(start, stop)])
        return _simulate(mdp, policy, int(s0), u)[0]

    starts = range(0, n, _CHUNK)
    if n_jobs == 1:
        parts = [run_chunk(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(run_chunk, starts))
    return OutcomeSamples(_readonly(np.concatenate(parts)), horizon, int(master_seed))


def dump_mdp(mdp, path):
    """Write a plain-text debug listing: header lines then ``s a s' p r`` per entry."""
    with open(path, "w") as fh:
        fh.write(f"n_states {mdp.n_states}\n")
        fh.write(f"n_actions {mdp.n_actions}\n")
        fh.write(f"discount {mdp.discount!r}\n")
        fh.write(f"initial_state {mdp.initial_state}\n")
        fh.write("terminals " + " ".join(str(t) for t in sorted(mdp.terminals)) + "\n")
        for s, a, s2, p, r in mdp.triplets():
            fh.write(f"{s} {a} {s2} {p!r} {r!r}\n")


class ValueIterationSolver(BaseEstimator):
    """Estimator wrapper around :func:`value_iteration`.

    ``fit`` takes an :class:`Mdp`; ``predict`` maps state indices to actions.
    """

    def __init__(self, tolerance=1e-8, max_iterations=10_000):
        self.tolerance = tolerance
        self.max_iterations = max_iterations

    def fit(self, mdp, y=None):
        res = value_iteration(mdp, self.tolerance, self.max_iterations)
        self.result_ = res
        self.value_ = res.value
        self.policy_ = res.policy
        self.residual_ = res.residual
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        return self

    def predict(self, states):
        if not hasattr(self, "policy_"):
            raise NotFittedError("ValueIterationSolver is not fitted yet")
        return self.policy_[np.asarray(states, dtype=np.int64)]
