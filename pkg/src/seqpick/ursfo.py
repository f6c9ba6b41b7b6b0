"""Unsupervised reward shaping from expert observations.

A squared-loss discriminator over consecutive observation pairs (s, s')
is trained against the agent's own rollouts; its output shapes the base
picking reward additively, bounded to [0, lambda2].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import agents
from .nn import Adam, adam_step, discriminator_network


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear bonus-weight schedule, clamped at the endpoints."""

    kind: str                  # "constant" | "v1" | "v2"
    value: float = 0.0         # constant level
    start: float = 0.0
    end: float = 2.0
    ramp_steps: int | None = None  # default: 90% of total training steps

    @classmethod
    def constant(cls, value):
        return cls(kind="constant", value=value)

    @classmethod
    def v1(cls, ramp_steps=None):
        """Linear 0 -> 2 over the ramp, then constant 2."""
        return cls(kind="v1", start=0.0, end=2.0, ramp_steps=ramp_steps)

    @classmethod
    def v2(cls, ramp_steps=None):
        """Linear 2 -> 0 over the ramp, then constant 0."""
        return cls(kind="v2", start=2.0, end=0.0, ramp_steps=ramp_steps)


def schedule_value(schedule, step, total_steps):
    if step < 0:
        raise ValueError("step must be >= 0")
    if schedule.kind == "constant":
        return schedule.value
    ramp = schedule.ramp_steps if schedule.ramp_steps is not None \
        else max(1, int(0.9 * total_steps))
    frac = min(1.0, step / ramp)
    val = schedule.start + frac * (schedule.end - schedule.start)
    return max(0.0, val)


@dataclass(frozen=True)
class ShapingConfig:
    lambda1: float = 1.0
    schedule: Schedule = field(default_factory=Schedule.v1)
    gp_weight: float = 10.0
    lsgan_labels: tuple = (-1.0, 1.0, 1.0)  # (a, b, c); generator target c
    disc_lr: float = 1e-4
    disc_batch: int = 16
    disc_update_every: int = 2
    disc_hidden: int = 64
    penalty_mode: str = "input"  # "input" (R1-style) or "params"
    pair_capacity: int = 50_000

    def __post_init__(self):
        a, b, _ = self.lsgan_labels
        if not b > a:
            raise ValueError("lsgan labels require b > a")
        if self.lambda1 < 0 or self.gp_weight < 0:
            raise ValueError("lambda1 and gp_weight must be >= 0")
        if self.penalty_mode not in ("input", "params"):
            raise ValueError(f"unknown penalty_mode {self.penalty_mode!r}")


class PairBuffer:
    """Ring storage of the agent's consecutive observation pairs."""

    def __init__(self, capacity):
        self.capacity = int(capacity)
        self._storage = []
        self._next = 0

    def __len__(self):
        return len(self._storage)

    def add(self, s, s_next):
        item = (s, s_next)
        if len(self._storage) < self.capacity:
            self._storage.append(item)
        else:
            self._storage[self._next] = item
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size, rng):
        idx = rng.integers(len(self._storage), size=batch_size)
        return [self._storage[i] for i in idx]


def expert_pairs(dataset):
    """Consecutive (s, s') pairs from an expert dataset; actions never needed."""
    return dataset.state_pairs()


def _pair_to_net(s, s_next):
    # channel-stacked (7, H, W) discriminator input: s, s', the change
    # s' - s, and a constant did-anything-change plane, so transitions
    # are distinguished by what happened rather than scene appearance
    a = agents.obs_to_net(s)
    b = agents.obs_to_net(s_next)
    d = b - a
    changed = np.full_like(a[:1], float(np.abs(d).max() > 1e-12))
    return np.concatenate([a, b, d, changed], axis=0)


def _pairs_to_batch(pairs):
    return np.stack([_pair_to_net(s, sn) for s, sn in pairs])


def shaped_reward(base, d_value, lambda1, lambda2):
    """lambda1 * base + lambda2 * clamp(1 - 0.25 (D - 1)^2, min 0)."""
    bonus = max(0.0, 1.0 - 0.25 * (d_value - 1.0) ** 2)
    return lambda1 * base + lambda2 * bonus


def discriminator_update(disc_net, opt, expert_batch, agent_batch, cfg):
    """One squared-loss discriminator step with gradient penalty.

    Minimizes 0.5 E_exp[(D-b)^2] + 0.5 E_agt[(D-a)^2]
    + (gp/2) E_exp[||grad D||^2]; returns (expert_term, agent_term,
    penalty_term) evaluated before the step.
    """
    if len(expert_batch) == 0 or len(agent_batch) == 0:
        raise ValueError("empty discriminator batch")
    a_lab, b_lab, _ = cfg.lsgan_labels
    xe = expert_batch if isinstance(expert_batch, np.ndarray) else _pairs_to_batch(expert_batch)
    xa = agent_batch if isinstance(agent_batch, np.ndarray) else _pairs_to_batch(agent_batch)
    ne, na = len(xe), len(xa)

    de, cache_e = disc_net.forward(xe)
    de = de.ravel()
    expert_term = 0.5 * float(np.mean((de - b_lab) ** 2))
    ge, gin_e = disc_net.backward(cache_e, ((de - b_lab) / ne).reshape(-1, 1))

    da, cache_a = disc_net.forward(xa)
    da = da.ravel()
    agent_term = 0.5 * float(np.mean((da - a_lab) ** 2))
    ga, _ = disc_net.backward(cache_a, ((da - a_lab) / na).reshape(-1, 1))

    total = ge + ga
    penalty_term = 0.0
    if cfg.gp_weight > 0.0:
        if cfg.penalty_mode == "input":
            penalty_term, gp = _input_penalty_grad(disc_net, xe, cfg.gp_weight)
        else:
            penalty_term, gp = _param_penalty_grad(disc_net, xe, cfg.gp_weight)
        total = total + gp

    disc_net.grads[:] = total
    adam_step(disc_net, opt)
    return expert_term, agent_term, penalty_term


def _per_sample_input_grads(disc_net, x):
    _, cache = disc_net.forward(x)
    # samples are independent, so a ones output-gradient yields each
    # sample's own input gradient
    _, gin = disc_net.backward(cache, np.ones((len(x), 1)))
    return gin


def _input_penalty_grad(disc_net, x, weight, eps=1e-4):
    """(gp/2) E[||grad_x D||^2] and its exact parameter gradient.

    The parameter gradient is obtained from a symmetric directional
    difference along the (frozen) input gradient; for piecewise-linear
    ReLU networks this is exact once eps stays inside the active region.
    """
    n = len(x)
    gin = _per_sample_input_grads(disc_net, x)
    value = 0.5 * weight * float(np.mean(np.sum(gin.reshape(n, -1) ** 2, axis=1)))
    gout = np.full((n, 1), 1.0 / n)
    _, cache_p = disc_net.forward(x + eps * gin)
    gp_plus, _ = disc_net.backward(cache_p, gout)
    _, cache_m = disc_net.forward(x - eps * gin)
    gp_minus, _ = disc_net.backward(cache_m, gout)
    grad = weight * (gp_plus - gp_minus) / (2.0 * eps)
    return value, grad


def _param_penalty_grad(disc_net, x, weight, eps=1e-6):
    """(gp/2) E[||grad_theta D||^2] and an approximate parameter gradient.

    Literal parameter-gradient penalty variant; uses a per-sample
    directional finite difference in parameter space.
    """
    n = len(x)
    value = 0.0
    grad = np.zeros(disc_net.n_params)
    saved = disc_net.params.copy()
    for i in range(n):
        _, cache = disc_net.forward(x[i:i + 1])
        g_i, _ = disc_net.backward(cache, np.ones((1, 1)))
        value += float(np.sum(g_i ** 2))
        scale = np.linalg.norm(g_i)
        if scale == 0.0:
            continue
        step = eps / scale
        disc_net.params[:] = saved + step * g_i
        _, cache = disc_net.forward(x[i:i + 1])
        g_p, _ = disc_net.backward(cache, np.ones((1, 1)))
        disc_net.params[:] = saved
        grad += (g_p - g_i) / step
    value *= 0.5 * weight / n
    grad *= weight / n
    return value, grad


def fit_lookup_discriminator(rho_E, rho_theta, a=-1.0, b=1.0, lr=0.9,
                             steps=10_000):
    """Per-cell lookup discriminator trained by plain gradient descent.

    Converges to the closed-form optimum (b rho_E + a rho_theta)/(rho_E +
    rho_theta) on the support; off-support cells stay at their init (0).
    """
    rho_E = np.asarray(rho_E, dtype=np.float64)
    rho_theta = np.asarray(rho_theta, dtype=np.float64)
    D = np.zeros_like(rho_E)
    for _ in range(steps):
        grad = rho_E * (D - b) + rho_theta * (D - a)
        D -= lr * grad
    return D


class ShapingState:
    """Discriminator + buffers + schedule; plugs into agents.run_dql.

    All randomness lives on private streams (seed, 4) and (seed, 5) so a
    zero schedule cannot perturb the underlying DQL trajectory.
    """

    def __init__(self, scene_config, shaping_config, expert_dataset, total_steps,
                 seed=0):
        self.cfg = shaping_config
        self.total_steps = total_steps
        h, w = scene_config.obs_hw
        self.disc = discriminator_network((h, w), hidden=shaping_config.disc_hidden,
                                          seed=(seed, 4))
        self.opt = Adam(self.disc.n_params, learning_rate=shaping_config.disc_lr)
        self.rng = np.random.default_rng((seed, 5))
        self.pairs = PairBuffer(shaping_config.pair_capacity)
        self.expert = expert_pairs(expert_dataset)
        if not self.expert:
            raise ValueError("expert dataset yields no (s, s') pairs")
        self.disc_log = []  # (step, expert_term, agent_term, penalty_term)

    def lambda2(self, step):
        return schedule_value(self.cfg.schedule, step, self.total_steps)

    def observe(self, s, s_next):
        self.pairs.add(s, s_next)

    def maybe_update(self, step):
        if step % self.cfg.disc_update_every != 0:
            return
        if len(self.pairs) < self.cfg.disc_batch:
            return
        idx = self.rng.integers(len(self.expert), size=self.cfg.disc_batch)
        expert_batch = [self.expert[i] for i in idx]
        agent_batch = self.pairs.sample(self.cfg.disc_batch, self.rng)
        terms = discriminator_update(self.disc, self.opt, expert_batch,
                                     agent_batch, self.cfg)
        self.disc_log.append((step,) + terms)

    def shaped_rewards(self, batch, step):
        lam2 = self.lambda2(step)
        base = np.array([t.r for t in batch])
        if lam2 == 0.0:
            # exact DQL reduction; skipping the forward pass changes nothing
            return self.cfg.lambda1 * base + 0.0
        x = np.stack([_pair_to_net(t.s, t.s_next) for t in batch])
        d, _ = self.disc.forward(x)
        d = d.ravel()
        bonus = np.maximum(0.0, 1.0 - 0.25 * (d - 1.0) ** 2)
        return self.cfg.lambda1 * base + lam2 * bonus

    def write_disc_log(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "expert_term", "agent_term", "penalty_term"])
            for row in self.disc_log:
                writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def ursfo_train(scene_config, expert_dataset, dql_config, shaping_config, seed,
                metrics_path=None, disc_log_path=None):
    """Shaped-reward Double DQL per the adversarial outer loop.

    Returns (net, metrics_rows, shaping_state)."""
    state = ShapingState(scene_config, shaping_config, expert_dataset,
                         dql_config.total_steps, seed=seed)
    net, rows = agents.run_dql(scene_config, dql_config, seed, shaping=state,
                               metrics_path=metrics_path)
    if disc_log_path is not None:
        state.write_disc_log(disc_log_path)
    return net, rows, state
