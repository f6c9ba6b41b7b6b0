"""Behavioral cloning and Double DQL trainers.

The DQL loop doubles as the shaped-reward loop: an optional shaping object
supplies a per-transition bonus at replay-sampling time and runs its own
discriminator updates on a private RNG stream, so a disabled shaper is
bit-identical to plain DQL.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import env as envmod
from .nn import Adam, adam_step, q_network, softmax_cross_entropy


@dataclass
class Transition:
    s: np.ndarray
    a: int          # flat pixel index
    r: float        # base reward; shaping is applied at sampling time
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Uniform-sampling ring buffer."""

    def __init__(self, capacity, seed=0):
        self.capacity = int(capacity)
        self._storage = []
        self._next = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self._storage)

    def add(self, transition):
        if len(self._storage) < self.capacity:
            self._storage.append(transition)
        else:
            self._storage[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size):
        idx = self.rng.integers(len(self._storage), size=batch_size)
        return [self._storage[i] for i in idx]


@dataclass
class DqlConfig:
    gamma: float = 0.99
    batch_size: int = 16
    update_every: int = 2
    target_tau: float = 2e-2
    seed_steps: int = 100
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.4   # linear decay over this fraction of training
    total_steps: int = 50_000
    buffer_capacity: int = 50_000
    learning_rate: float = 1e-4
    eval_every: int | None = None   # default: every 3 full scenes
    n_eval_scenes: int = 1
    n_final_eval_scenes: int = 10

    def __post_init__(self):
        for name in ("gamma", "batch_size", "update_every", "target_tau",
                     "total_steps", "buffer_capacity", "learning_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError("epsilon schedule must stay inside [0, 1]")

    def epsilon(self, step):
        ramp = max(1, int(self.epsilon_fraction * self.total_steps))
        frac = min(1.0, step / ramp)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


def obs_to_net(obs):
    """(H, W, 2) observation -> (2, H, W) network input."""
    return np.transpose(obs, (2, 0, 1))


def q_scores(net, obs):
    out, _ = net.forward(obs_to_net(obs))
    return out[0]  # (H, W)


def act(net, obs, epsilon, rng):
    """Epsilon-greedy pixel choice; greedy ties break at the lowest flat index."""
    h, w = obs.shape[:2]
    if rng.random() < epsilon:
        flat = int(rng.integers(h * w))
    else:
        flat = int(np.argmax(q_scores(net, obs)))
    return (flat // w, flat % w)


def _batch_arrays(batch):
    s = np.stack([obs_to_net(t.s) for t in batch])
    a = np.array([t.a for t in batch], dtype=np.int64)
    r = np.array([t.r for t in batch])
    s_next = np.stack([obs_to_net(t.s_next) for t in batch])
    done = np.array([t.done for t in batch], dtype=np.float64)
    return s, a, r, s_next, done


def dql_update(net, target_net, opt, batch, gamma, rewards=None):
    """One double-estimator TD step; returns the minibatch MSE loss.

    The online net picks the bootstrap action, the target net values it.
    ``rewards`` overrides the stored rewards (shaped-reward hook).
    """
    if not batch:
        raise ValueError("empty batch")
    s, a, r, s_next, done = _batch_arrays(batch)
    if rewards is not None:
        r = np.asarray(rewards, dtype=np.float64)
    n = len(batch)

    q_next_online, _ = net.forward(s_next)
    q_next_online = q_next_online.reshape(n, -1)
    a_star = np.argmax(q_next_online, axis=1)
    q_next_target, _ = target_net.forward(s_next)
    q_next_target = q_next_target.reshape(n, -1)
    target = r + gamma * (1.0 - done) * q_next_target[np.arange(n), a_star]

    q, cache = net.forward(s)
    q_flat = q.reshape(n, -1)
    chosen = q_flat[np.arange(n), a]
    err = chosen - target
    loss = float(np.mean(err ** 2))

    gout = np.zeros_like(q_flat)
    gout[np.arange(n), a] = 2.0 * err / n
    net.backward(cache, gout.reshape(q.shape))
    adam_step(net, opt)
    return loss


def soft_update(target_net, net, tau):
    target_net.params *= (1.0 - tau)
    target_net.params += tau * net.params


def evaluate(net, config, n_scenes=10, seed_offset=0):
    """Greedy-policy evaluation on fresh held-out scenes.

    Returns (success_percent over n_scenes * rows * cols parcels,
    mean undiscounted base-reward return).
    """
    successes = 0
    returns = []
    for i in range(n_scenes):
        cfg = envmod.make_eval_config(config, seed_offset + i)
        scene, obs = envmod.reset(cfg)
        total = 0.0
        while not scene.done:
            a = greedy_action(net, obs)
            scene, obs, outcome = envmod.step(scene, a)
            successes += outcome.success
            total += outcome.base_reward
        returns.append(total)
    denom = n_scenes * config.rows * config.cols
    return 100.0 * successes / denom, float(np.mean(returns))


def greedy_action(net, obs):
    h, w = obs.shape[:2]
    flat = int(np.argmax(q_scores(net, obs)))
    return (flat // w, flat % w)


class ExpertPolicy:
    """Scripted expert wrapped behind the greedy-policy interface for eval."""

    def evaluate(self, config, n_scenes=10, seed_offset=0):
        successes = 0
        returns = []
        for i in range(n_scenes):
            cfg = envmod.make_eval_config(config, seed_offset + i)
            scene, obs = envmod.reset(cfg)
            total = 0.0
            while not scene.done:
                a = envmod.expert_action(scene)
                scene, obs, outcome = envmod.step(scene, a)
                successes += outcome.success
                total += outcome.base_reward
            returns.append(total)
        denom = n_scenes * config.rows * config.cols
        return 100.0 * successes / denom, float(np.mean(returns))


# ---------------------------------------------------------------------------
# behavioral cloning
# ---------------------------------------------------------------------------

def bc_train(dataset, net, steps, learning_rate=1e-4, seed=0):
    """Minibatch-1 cross-entropy training on expert (s, a) pairs.

    Returns (net, per-step loss list).
    """
    pairs = dataset.state_action_pairs()  # raises on observation-only data
    opt = Adam(net.n_params, learning_rate=learning_rate)
    rng = np.random.default_rng((seed, 11))
    losses = []
    for _ in range(steps):
        obs, target = pairs[int(rng.integers(len(pairs)))]
        out, cache = net.forward(obs_to_net(obs))
        logits = out.ravel()
        loss, grad = softmax_cross_entropy(logits, target)
        net.backward(cache, grad.reshape(out.shape))
        adam_step(net, opt)
        losses.append(loss)
    return net, losses


# ---------------------------------------------------------------------------
# DQL / shaped-reward training loop
# ---------------------------------------------------------------------------

METRICS_COLUMNS = ["step", "eval_return", "eval_success_percent", "loss",
                   "epsilon", "lambda2"]


def run_dql(scene_config, dql_config, seed, shaping=None, metrics_path=None):
    """Environment interaction + Double DQL updates, optionally reward-shaped.

    RNG streams are split so that a shaper with a zero schedule leaves the
    parameter trajectory bit-identical to plain DQL: net init (seed, 0),
    episodes (seed, 1, ep), exploration (seed, 2), replay sampling (seed, 3);
    the shaper owns (seed, 4...) internally.

    Returns (net, metrics_rows).
    """
    cfg = dql_config
    h, w = scene_config.obs_hw
    net = q_network((h, w), seed=_stream_seed(seed, 0))
    target_net = net.copy()
    opt = Adam(net.n_params, learning_rate=cfg.learning_rate)
    explore_rng = np.random.default_rng((seed, 2))
    buffer = ReplayBuffer(cfg.buffer_capacity, seed=(seed, 3))

    eval_every = cfg.eval_every or 3 * scene_config.episode_limit
    episode = 0
    scene, obs = envmod.reset(scene_config, episode=episode)
    last_loss = ""
    rows = []

    for step_i in range(1, cfg.total_steps + 1):
        epsilon = cfg.epsilon(step_i)
        if step_i <= cfg.seed_steps:
            flat = int(explore_rng.integers(h * w))
            action = (flat // w, flat % w)
        else:
            action = act(net, obs, epsilon, explore_rng)
        scene, obs_next, outcome = envmod.step(scene, action)
        buffer.add(Transition(s=obs, a=action[0] * w + action[1],
                              r=outcome.base_reward, s_next=obs_next,
                              done=outcome.done))
        if shaping is not None:
            shaping.observe(obs, obs_next)
        obs = obs_next
        if outcome.done:
            episode += 1
            scene, obs = envmod.reset(scene_config, episode=episode)

        if shaping is not None:
            shaping.maybe_update(step_i)

        if (step_i > cfg.seed_steps and step_i % cfg.update_every == 0
                and len(buffer) >= cfg.batch_size):
            batch = buffer.sample(cfg.batch_size)
            if shaping is not None:
                rewards = shaping.shaped_rewards(batch, step_i)
            else:
                rewards = None
            last_loss = dql_update(net, target_net, opt, batch, cfg.gamma,
                                   rewards=rewards)
            soft_update(target_net, net, cfg.target_tau)

        if step_i % eval_every == 0 or step_i == cfg.total_steps:
            n_scenes = (cfg.n_final_eval_scenes if step_i == cfg.total_steps
                        else cfg.n_eval_scenes)
            success, mean_return = evaluate(net, scene_config, n_scenes=n_scenes)
            lam2 = shaping.lambda2(step_i) if shaping is not None else ""
            rows.append({"step": step_i, "eval_return": mean_return,
                         "eval_success_percent": success, "loss": last_loss,
                         "epsilon": epsilon, "lambda2": lam2})

    if metrics_path is not None:
        write_metrics(metrics_path, rows)
    return net, rows


def _stream_seed(seed, k):
    return (seed, k)


def write_metrics(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in METRICS_COLUMNS})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_metrics(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
