"""Exact finite discounted MDPs and their visitation distributions.

Everything here is dense float64 linear algebra; systems are tiny
(tens of states) so direct solves are both exact enough and fast.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

_SIMPLEX_ATOL = 1e-12


def _check_simplex(v, name, atol=_SIMPLEX_ATOL):
    if np.any(np.asarray(v) < 0):
        raise ValueError(f"{name} has negative entries")
    s = np.sum(v, axis=-1)
    if not np.allclose(s, 1.0, atol=atol, rtol=0):
        raise ValueError(f"{name} rows must sum to 1 (max deviation {np.max(np.abs(s - 1)):.3g})")


@dataclass(frozen=True)
class TabularMDP:
    """Finite MDP: transition[s, a, s'], reward[s, a], initial_dist[s], gamma < 1."""

    transition: np.ndarray
    reward: np.ndarray
    initial_dist: np.ndarray
    gamma: float

    def __post_init__(self):
        P = np.ascontiguousarray(self.transition, dtype=np.float64)
        r = np.ascontiguousarray(self.reward, dtype=np.float64)
        d0 = np.ascontiguousarray(self.initial_dist, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if r.shape != (S, A):
            raise ValueError(f"reward must have shape {(S, A)}, got {r.shape}")
        if d0.shape != (S,):
            raise ValueError(f"initial_dist must have shape {(S,)}, got {d0.shape}")
        _check_simplex(P, "transition")
        _check_simplex(d0, "initial_dist")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        for arr in (P, r, d0):
            arr.flags.writeable = False
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "initial_dist", d0)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    @property
    def r_max(self):
        return float(np.max(np.abs(self.reward)))

    def to_json(self):
        return json.dumps({
            "P": self.transition.tolist(),
            "r": self.reward.tolist(),
            "d0": self.initial_dist.tolist(),
            "gamma": self.gamma,
        })

    @classmethod
    def from_json(cls, doc):
        d = json.loads(doc)
        return cls(np.array(d["P"]), np.array(d["r"]), np.array(d["d0"]), d["gamma"])


@dataclass(frozen=True)
class TabularPolicy:
    """Stationary stochastic policy: probs[s, a]."""

    probs: np.ndarray

    def __post_init__(self):
        pi = np.ascontiguousarray(self.probs, dtype=np.float64)
        if pi.ndim != 2:
            raise ValueError(f"policy table must be 2-D, got shape {pi.shape}")
        _check_simplex(pi, "policy")
        pi.flags.writeable = False
        object.__setattr__(self, "probs", pi)

    @property
    def n_states(self):
        return self.probs.shape[0]

    @property
    def n_actions(self):
        return self.probs.shape[1]

    def to_json(self):
        return json.dumps({"pi": self.probs.tolist()})

    @classmethod
    def from_json(cls, doc):
        return cls(np.array(json.loads(doc)["pi"]))


@dataclass(frozen=True)
class VisitationSet:
    """All discounted visitation distributions induced by (mdp, policy).

    d[s], mu[s, a], rho_ss[s, s'], rho_sas[s, a, s'] each sum to 1.
    rho_a_given_ss[s, a, s'] is the inverse-dynamics density; it is only
    defined where ``mask[s, s']`` is True (rho_ss > 0) and is zero-filled
    off-support purely for storage.
    """

    d: np.ndarray
    mu: np.ndarray
    rho_ss: np.ndarray
    rho_sas: np.ndarray
    rho_a_given_ss: np.ndarray
    mask: np.ndarray = field(repr=False)


def _check_dims(mdp, pi):
    if pi.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(
            f"policy shape {pi.probs.shape} does not match MDP {(mdp.n_states, mdp.n_actions)}")


def policy_transition(mdp, pi):
    """State-to-state transition matrix under the policy."""
    _check_dims(mdp, pi)
    return np.einsum("sa,sat->st", pi.probs, mdp.transition)


def state_visitation(mdp, pi):
    """Normalized discounted state visitation d, by direct linear solve.

    d solves d = (1 - gamma) d0 + gamma P_pi^T d; the system matrix is
    strictly diagonally dominant for gamma < 1 so the solve cannot fail.
    """
    P_pi = policy_transition(mdp, pi)
    S = mdp.n_states
    A_mat = np.eye(S) - mdp.gamma * P_pi.T
    d = np.linalg.solve(A_mat, (1.0 - mdp.gamma) * mdp.initial_dist)
    assert abs(d.sum() - 1.0) < 1e-9
    return d


def state_visitation_power(mdp, pi, horizon=200):
    """Truncated power-iteration oracle for d; test reference only."""
    P_pi = policy_transition(mdp, pi)
    p_t = mdp.initial_dist.copy()
    d = np.zeros_like(p_t)
    discount = 1.0 - mdp.gamma
    for _ in range(horizon + 1):
        d += discount * p_t
        p_t = P_pi.T @ p_t
        discount *= mdp.gamma
    return d


def visitation_set(mdp, pi):
    """Compute d, mu, rho(s,s'), rho(s,a,s') and the inverse-dynamics density."""
    _check_dims(mdp, pi)
    d = state_visitation(mdp, pi)
    mu = d[:, None] * pi.probs
    rho_sas = mu[:, :, None] * mdp.transition
    rho_ss = rho_sas.sum(axis=1)
    # rho(a|s,s') = P(s'|s,a) pi(a|s) / sum_a P(s'|s,a) pi(a|s)
    numer = mdp.transition * pi.probs[:, :, None]
    denom = numer.sum(axis=1)  # (s, s')
    safe = np.where(denom > 0.0, denom, 1.0)
    rho_a_given_ss = numer / safe[:, None, :]
    rho_a_given_ss[np.broadcast_to((denom == 0.0)[:, None, :], numer.shape)] = 0.0
    mask = rho_ss > 0.0
    return VisitationSet(d=d, mu=mu, rho_ss=rho_ss, rho_sas=rho_sas,
                         rho_a_given_ss=rho_a_given_ss, mask=mask)


def expected_return(mdp, pi):
    """Expected discounted return J(pi).

    Computed two independent ways (occupancy-weighted rewards and
    d0^T V with V from the Bellman linear system); they must agree.
    """
    _check_dims(mdp, pi)
    vs = visitation_set(mdp, pi)
    j_mu = float(np.sum(vs.mu * mdp.reward)) / (1.0 - mdp.gamma)
    P_pi = policy_transition(mdp, pi)
    r_pi = np.sum(pi.probs * mdp.reward, axis=1)
    V = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)
    j_v = float(mdp.initial_dist @ V)
    assert abs(j_mu - j_v) < 1e-9, f"return formulas disagree: {j_mu} vs {j_v}"
    return j_mu


def monte_carlo_return(mdp, pi, n_episodes=100_000, horizon=500, seed=0):
    """Vectorized Monte-Carlo rollout estimate of J(pi); test oracle.

    Returns (mean, standard_error).
    """
    rng = np.random.default_rng(seed)
    S, A = mdp.n_states, mdp.n_actions
    pi_cdf = np.cumsum(pi.probs, axis=1)
    P_cdf = np.cumsum(mdp.transition, axis=2)
    s = rng.choice(S, size=n_episodes, p=mdp.initial_dist)
    total = np.zeros(n_episodes)
    discount = 1.0
    for _ in range(horizon):
        u = rng.random(n_episodes)
        a = (u[:, None] > pi_cdf[s]).sum(axis=1)
        total += discount * mdp.reward[s, a]
        u = rng.random(n_episodes)
        s = (u[:, None] > P_cdf[s, a]).sum(axis=1)
        discount *= mdp.gamma
    return float(total.mean()), float(total.std(ddof=1) / np.sqrt(n_episodes))


def random_mdp(n_states, n_actions, gamma, seed, min_prob=0.0):
    """Random MDP with Dirichlet transition rows and rewards uniform in [-1, 1].

    ``min_prob`` > 0 bounds every transition probability away from zero,
    which keeps all divergences downstream finite.
    """
    if n_states < 1 or n_actions < 1:
        raise ValueError("n_states and n_actions must be >= 1")
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    d0 = rng.dirichlet(np.ones(n_states))
    if min_prob > 0.0:
        P = (P + min_prob) / (1.0 + n_states * min_prob)
        d0 = (d0 + min_prob) / (1.0 + n_states * min_prob)
    r = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    return TabularMDP(P, r, d0, gamma)


def random_policy(n_states, n_actions, seed, min_prob=0.0):
    """Random stochastic policy with Dirichlet rows."""
    rng = np.random.default_rng(seed)
    pi = rng.dirichlet(np.ones(n_actions), size=n_states)
    if min_prob > 0.0:
        pi = (pi + min_prob) / (1.0 + n_actions * min_prob)
    return TabularPolicy(pi)
