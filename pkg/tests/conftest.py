import numpy as np
import pytest

from famsec.mdp import Mdp

ACCEPTANCE_RESULTS = []


def random_mdp(rng, n_states=5, n_actions=3, discount=0.9, n_successors=3, n_terminals=1, reward_scale=1.0):
    """Random sparse MDP; the last ``n_terminals`` states are absorbing."""
    terminals = set(range(n_states - n_terminals, n_states))
    triplets = []
    for s in range(n_states):
        if s in terminals:
            continue
        for a in range(n_actions):
            k = min(n_successors, n_states)
            succ = rng.choice(n_states, size=k, replace=False)
            p = rng.dirichlet(np.ones(k))
            for s2, pr in zip(succ, p):
                triplets.append((s, a, int(s2), float(pr), float(rng.uniform(-reward_scale, reward_scale))))
    return Mdp.from_triplets(n_states, n_actions, triplets, discount, terminals, initial_state=0)


def corridor_mdp(length, r_goal=1.0, discount=0.9, n_actions=2):
    """States 0..length with ``length`` the terminal goal; action 0 steps right, others stay put."""
    triplets = []
    for s in range(length):
        triplets.append((s, 0, s + 1, 1.0, r_goal if s + 1 == length else 0.0))
        for a in range(1, n_actions):
            triplets.append((s, a, s, 1.0, 0.0))
    return Mdp.from_triplets(length + 1, n_actions, triplets, discount, {length}, initial_state=0)


def capture_mdp(p_capture, r_capture=-10.0, r_step=1.0, discount=0.9):
    """State 0 survives each step w.p. 1 - p (reward r_step) or is captured (reward r_capture)."""
    triplets = [(0, 0, 0, 1.0 - p_capture, r_step), (0, 0, 1, p_capture, r_capture)]
    return Mdp.from_triplets(2, 1, triplets, discount, {1}, initial_state=0)


def dense_model(mdp):
    """Dense ``P[s, a, s']`` and ``R[s, a, s']`` assembled entry by entry."""
    S, A = mdp.n_states, mdp.n_actions
    P = np.zeros((S, A, S))
    R = np.zeros((S, A, S))
    for s, a, s2, p, r in mdp.triplets():
        P[s, a, s2] += p
        R[s, a, s2] = r
    return P, R


def brute_backup(mdp, v):
    P, R = dense_model(mdp)
    out = np.zeros(mdp.n_states)
    for s in range(mdp.n_states):
        if s in mdp.terminals:
            continue
        best = -np.inf
        for a in range(mdp.n_actions):
            q = sum(P[s, a, s2] * (R[s, a, s2] + mdp.discount * v[s2]) for s2 in range(mdp.n_states))
            best = max(best, q)
        out[s] = best
    return out


def brute_argmax(mdp, v):
    P, R = dense_model(mdp)
    pol = np.zeros(mdp.n_states, dtype=int)
    for s in range(mdp.n_states):
        qs = [
            0.0 if s in mdp.terminals else
            sum(P[s, a, s2] * (R[s, a, s2] + mdp.discount * v[s2]) for s2 in range(mdp.n_states))
            for a in range(mdp.n_actions)
        ]
        best = qs[0]
        for a, q in enumerate(qs):
            if q > best:
                best, pol[s] = q, a
    return pol


def dense_policy_value(mdp, policy):
    """Exact V^pi by a dense linear solve, independent of the library's sparse path."""
    P, R = dense_model(mdp)
    S = mdp.n_states
    Ppi = np.array([P[s, policy[s]] for s in range(S)])
    rpi = np.array([np.dot(P[s, policy[s]], R[s, policy[s]]) for s in range(S)])
    for t in mdp.terminals:
        Ppi[t] = 0.0
        rpi[t] = 0.0
    return np.linalg.solve(np.eye(S) - mdp.discount * Ppi, rpi)


def enumerate_returns(mdp, policy, s0, horizon):
    """All positive-probability trajectories up to ``horizon``: list of (prob, return, absorbed)."""
    P, R = dense_model(mdp)
    frontier = [(1.0, 0.0, 1.0, s0)]
    done = []
    for _ in range(horizon):
        nxt = []
        for prob, ret, disc, s in frontier:
            if s in mdp.terminals:
                done.append((prob, ret, True))
                continue
            a = policy[s]
            for s2 in np.flatnonzero(P[s, a]):
                nxt.append((prob * P[s, a, s2], ret + disc * R[s, a, s2], disc * mdp.discount, int(s2)))
        frontier = nxt
    for prob, ret, disc, s in frontier:
        done.append((prob, ret, s in mdp.terminals))
    return done


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
