"""Grid-wall depalletizing simulator with pixel pick actions.

The scene is a rows x cols facade of parcels. Each parcel face covers a
k x k pixel patch in the observation. Picks target a pixel; picking a
parcel out of order removes it without reward and can topple the parcels
above it, which is irreversible.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

SIDE_ONLY = "side_only"
SIDE_AND_TOP = "side_and_top"


class Status(IntEnum):
    PRESENT = 0
    REMOVED = 1
    FALLEN = 2


@dataclass(frozen=True)
class SceneConfig:
    cols: int = 6
    rows: int = 7
    pixels_per_face: int = 4
    mode: str = SIDE_ONLY
    topple_prob: float = 0.5
    color_jitter: float = 0.2
    w: float = 2.0
    max_steps: int | None = None
    seed: int = 0
    side_window: int | None = None  # rows reachable per column; default ceil(rows/3)

    def __post_init__(self):
        if self.cols < 1 or self.rows < 1:
            raise ValueError("cols and rows must be positive")
        if self.pixels_per_face < 2:
            raise ValueError("pixels_per_face must be >= 2")
        if self.mode not in (SIDE_ONLY, SIDE_AND_TOP):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0.0 <= self.topple_prob <= 1.0:
            raise ValueError("topple_prob must be in [0, 1]")
        if not 0.0 <= self.color_jitter <= 1.0:
            raise ValueError("color_jitter must be in [0, 1]")
        if self.w < 0:
            raise ValueError("w must be >= 0")

    @property
    def n_parcels(self):
        return self.cols * self.rows

    @property
    def episode_limit(self):
        return self.max_steps if self.max_steps is not None else self.n_parcels

    @property
    def obs_hw(self):
        return (self.rows * self.pixels_per_face, self.cols * self.pixels_per_face)

    @property
    def window(self):
        return self.side_window if self.side_window is not None else math.ceil(self.rows / 3)


@dataclass
class PickOutcome:
    success: bool
    accuracy: float
    base_reward: float
    toppled: list
    done: bool


@dataclass
class Scene:
    """Mutable wall state; single-owner during an episode."""

    config: SceneConfig
    status: np.ndarray
    brightness: np.ndarray
    fallen: list = field(default_factory=list)  # original cells, in fall order
    step_count: int = 0
    rng: np.random.Generator = None

    def clone(self):
        return copy.deepcopy(self)

    @property
    def done(self):
        return (not np.any(self.status == Status.PRESENT)
                or self.step_count >= self.config.episode_limit)

    def present_count(self):
        return int(np.sum(self.status == Status.PRESENT))


def reset(config, episode=0):
    """Fresh full wall; deterministic for (config.seed, episode)."""
    rng = np.random.default_rng((config.seed, episode))
    j = config.color_jitter
    brightness = rng.uniform(0.5 - j, 0.5 + j, size=(config.rows, config.cols))
    scene = Scene(config=config,
                  status=np.full((config.rows, config.cols), Status.PRESENT, dtype=np.int8),
                  brightness=brightness, rng=rng)
    return scene, render(scene)


def render(scene):
    """Observation tensor (H, W, 2): occupancy*brightness and height channel."""
    cfg = scene.config
    k = cfg.pixels_per_face
    h, w = cfg.obs_hw
    obs = np.zeros((h, w, 2))
    height = (h - 1 - np.arange(h)) / (h - 1)
    occ = (scene.status == Status.PRESENT)
    occ_px = np.kron(occ, np.ones((k, k), dtype=bool))
    obs[:, :, 0] = occ_px * np.kron(occ * scene.brightness, np.ones((k, k)))
    obs[:, :, 1] = occ_px * height[:, None]
    # fallen parcels: half-brightness scatter in the bottom row band,
    # painted only where no present parcel already occupies the pixel
    band = slice((cfg.rows - 1) * k, cfg.rows * k)
    for idx, (r, c) in enumerate(scene.fallen):
        u = (cfg.rows - 1) * k + (r + idx) % k
        for j in range(0, k, 2):
            v = c * k + j
            if obs[u, v, 0] == 0.0:
                obs[u, v, 0] = 0.5 * scene.brightness[r, c]
    return obs


def _column_rank(scene, row, col):
    """Rank of a present parcel among present parcels of its column, top first."""
    above = scene.status[:row, col]
    return int(np.sum(above == Status.PRESENT))


def pick_valid(scene, row, col):
    """Whether picking the parcel at (row, col) respects the mode's ordering."""
    cfg = scene.config
    if scene.status[row, col] != Status.PRESENT:
        return False
    rank = _column_rank(scene, row, col)
    if cfg.mode == SIDE_ONLY:
        return rank < cfg.window
    # side-and-top: lower parcels are reachable only as the column's topmost
    if row >= cfg.rows / 2:
        return rank == 0
    return rank < cfg.window


def face_center_pixel(config, row, col):
    k = config.pixels_per_face
    return (row * k + k // 2, col * k + k // 2)


def step(scene, action):
    """Apply a pixel pick; mutates and returns (scene, observation, outcome)."""
    cfg = scene.config
    h, w = cfg.obs_hw
    u, v = int(action[0]), int(action[1])
    if not (0 <= u < h and 0 <= v < w):
        raise ValueError(f"pixel {(u, v)} outside {h}x{w} grid")
    if scene.done:
        raise RuntimeError("step() on a finished episode")

    k = cfg.pixels_per_face
    row, col = u // k, v // k
    toppled = []
    success = False
    accuracy = 0.0
    base_reward = 0.0

    if scene.status[row, col] == Status.PRESENT:
        if pick_valid(scene, row, col):
            cu, cv = face_center_pixel(cfg, row, col)
            accuracy = math.hypot(u - cu, v - cv) / k
            base_reward = max(0.0, 1.0 - cfg.w * accuracy)
            success = True
            scene.status[row, col] = Status.REMOVED
        else:
            # out-of-order pick compromises the scene
            scene.status[row, col] = Status.REMOVED
            for r in range(row - 1, -1, -1):
                if scene.status[r, col] != Status.PRESENT:
                    continue
                if scene.rng.random() < cfg.topple_prob:
                    scene.status[r, col] = Status.FALLEN
                    scene.fallen.append((r, col))
                    toppled.append((r, col))
                elif scene.status[r + 1, col] == Status.REMOVED:
                    scene.status[r + 1, col] = Status.PRESENT
                    scene.brightness[r + 1, col] = scene.brightness[r, col]
                    scene.status[r, col] = Status.REMOVED
    # empty or fallen pixel: zero-reward no-op

    scene.step_count += 1
    outcome = PickOutcome(success=success, accuracy=accuracy, base_reward=base_reward,
                          toppled=toppled, done=scene.done)
    return scene, render(scene), outcome


def expert_action(scene, noise_std=0.0, rng=None):
    """Center pixel of the highest valid parcel (ties left-to-right), plus noise.

    Noise is isotropic Gaussian of std ``noise_std`` pixels, rounded to
    integers and clamped inside the parcel's face.
    """
    cfg = scene.config
    target = None
    for r in range(cfg.rows):
        for c in range(cfg.cols):
            if pick_valid(scene, r, c):
                target = (r, c)
                break
        if target is not None:
            break
    if target is None:
        raise RuntimeError("no valid pick remains in the scene")
    row, col = target
    u, v = face_center_pixel(cfg, row, col)
    if noise_std > 0.0:
        if rng is None:
            raise ValueError("noise_std > 0 requires an rng")
        k = cfg.pixels_per_face
        du, dv = rng.normal(0.0, noise_std, size=2)
        u = int(np.clip(round(u + du), row * k, (row + 1) * k - 1))
        v = int(np.clip(round(v + dv), col * k, (col + 1) * k - 1))
    return (u, v)


def run_expert_episode(config, episode=0, noise_std=0.0):
    """One scripted-expert episode; returns (observations, actions, outcomes)."""
    scene, obs = reset(config, episode=episode)
    noise_rng = np.random.default_rng((config.seed, episode, 1))
    observations = [obs]
    actions = []
    outcomes = []
    while not scene.done:
        try:
            a = expert_action(scene, noise_std=noise_std, rng=noise_rng)
        except RuntimeError:
            break  # episode unrecoverable: nothing valid left to pick
        scene, obs, outcome = step(scene, a)
        observations.append(obs)
        actions.append(a)
        outcomes.append(outcome)
    return observations, actions, outcomes


def collect_expert(config, n_episodes, noise_std=0.0, include_actions=False):
    """Expert dataset: per-episode observation sequences, optionally with actions.

    With actions, each record is an (s, a) pair and the terminal state is
    dropped; without actions, records are the full state sequence.
    """
    from .datasets import Dataset

    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    episodes = []
    n_success = 0
    n_steps = 0
    for ep in range(n_episodes):
        observations, actions, outcomes = run_expert_episode(
            config, episode=ep, noise_std=noise_std)
        n_success += sum(o.success for o in outcomes)
        n_steps += len(outcomes)
        if include_actions:
            records = [(observations[t], actions[t], t == len(actions) - 1)
                       for t in range(len(actions))]
        else:
            records = [(observations[t], None, t == len(observations) - 1)
                       for t in range(len(observations))]
        episodes.append(records)
    header = {
        "config": _config_dict(config),
        "n_episodes": n_episodes,
        "include_actions": include_actions,
        "noise_std": noise_std,
        "seed": config.seed,
        "expert_successes": n_success,
        "expert_steps": n_steps,
    }
    return Dataset(header=header, episodes=episodes)


def _config_dict(config):
    d = dict(config.__dict__)
    return d


def config_from_dict(d):
    return SceneConfig(**d)


def make_eval_config(config, index):
    """Evaluation scene config on a seed stream disjoint from training episodes."""
    return replace(config, seed=config.seed + 1_000_003 * (index + 1))
