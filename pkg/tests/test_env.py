import numpy as np
import pytest

from seqpick import env
from seqpick.env import SIDE_AND_TOP, SIDE_ONLY, SceneConfig, Status


def _cfg(**kw):
    base = dict(cols=4, rows=4, pixels_per_face=4, mode=SIDE_ONLY, seed=0)
    base.update(kw)
    return SceneConfig(**base)


def _center_action(cfg, row, col):
    return env.face_center_pixel(cfg, row, col)


class TestConfig:
    def test_defaults(self):
        cfg = SceneConfig()
        assert cfg.n_parcels == 42
        assert cfg.obs_hw == (28, 24)
        assert cfg.window == 3  # ceil(7 / 3)
        assert cfg.episode_limit == 42

    def test_validation(self):
        with pytest.raises(ValueError):
            SceneConfig(cols=0)
        with pytest.raises(ValueError):
            SceneConfig(pixels_per_face=1)
        with pytest.raises(ValueError):
            SceneConfig(mode="top_only")
        with pytest.raises(ValueError):
            SceneConfig(topple_prob=1.5)

    def test_round_trip_dict(self):
        cfg = _cfg(mode=SIDE_AND_TOP, topple_prob=0.3)
        assert env.config_from_dict(env._config_dict(cfg)) == cfg


class TestResetAndRender:
    def test_full_wall(self):
        cfg = _cfg()
        scene, obs = env.reset(cfg)
        assert scene.present_count() == cfg.n_parcels
        assert obs.shape == (16, 16, 2)
        assert np.all(obs[:, :, 0] > 0)  # every pixel covered by a parcel

    def test_brightness_within_jitter(self):
        cfg = _cfg(color_jitter=0.2)
        scene, _ = env.reset(cfg)
        assert np.all(scene.brightness >= 0.3)
        assert np.all(scene.brightness <= 0.7)

    def test_height_channel(self):
        cfg = _cfg()
        _, obs = env.reset(cfg)
        assert obs[0, 0, 1] == pytest.approx(1.0)   # top row
        assert obs[-1, 0, 1] == pytest.approx(0.0)  # bottom row
        assert np.all(np.diff(obs[:, 0, 1]) <= 0)   # monotone downward

    def test_removed_parcel_leaves_dark_pixels(self):
        cfg = _cfg()
        scene, _ = env.reset(cfg)
        scene, obs, _ = env.step(scene, _center_action(cfg, 0, 0))
        k = cfg.pixels_per_face
        assert not obs[:k, :k, :].any()

    def test_reset_deterministic(self):
        cfg = _cfg(seed=5)
        a, obs_a = env.reset(cfg, episode=3)
        b, obs_b = env.reset(cfg, episode=3)
        assert np.array_equal(a.brightness, b.brightness)
        assert np.array_equal(obs_a, obs_b)
        c, _ = env.reset(cfg, episode=4)
        assert not np.array_equal(a.brightness, c.brightness)


class TestPickValidity:
    def test_side_only_window(self):
        cfg = _cfg(rows=6, side_window=2)
        scene, _ = env.reset(cfg)
        assert env.pick_valid(scene, 0, 0)
        assert env.pick_valid(scene, 1, 0)
        assert not env.pick_valid(scene, 2, 0)
        # removing the top parcel slides the window down
        env.step(scene, _center_action(cfg, 0, 0))
        assert env.pick_valid(scene, 2, 0)
        assert not env.pick_valid(scene, 3, 0)

    def test_side_and_top_lower_half_needs_topmost(self):
        cfg = _cfg(rows=4, mode=SIDE_AND_TOP, side_window=2)
        scene, _ = env.reset(cfg)
        # rows 2 and 3 are the lower half; blocked while anything sits above
        assert not env.pick_valid(scene, 2, 1)
        assert not env.pick_valid(scene, 3, 1)
        env.step(scene, _center_action(cfg, 0, 1))
        env.step(scene, _center_action(cfg, 1, 1))
        assert env.pick_valid(scene, 2, 1)
        assert not env.pick_valid(scene, 3, 1)

    def test_absent_parcel_invalid(self):
        cfg = _cfg()
        scene, _ = env.reset(cfg)
        env.step(scene, _center_action(cfg, 0, 0))
        assert not env.pick_valid(scene, 0, 0)


class TestStepRewards:
    def test_center_pick_full_reward(self):
        cfg = _cfg()
        scene, _ = env.reset(cfg)
        _, _, out = env.step(scene, _center_action(cfg, 0, 2))
        assert out.success
        assert out.accuracy == 0.0
        assert out.base_reward == 1.0

    def test_one_pixel_offset_hand_value(self):
        # k = 4, w = 2: one pixel off center gives 1 - 2 * (1/4) = 0.5
        cfg = _cfg(w=2.0)
        scene, _ = env.reset(cfg)
        u, v = _center_action(cfg, 0, 0)
        _, _, out = env.step(scene, (u + 1, v))
        assert out.success
        assert out.accuracy == pytest.approx(0.25)
        assert out.base_reward == pytest.approx(0.5)

    def test_corner_pick_clipped_to_zero(self):
        # corner of the face: distance sqrt(8)/4 ≈ 0.707, w=2 → reward 0
        cfg = _cfg(w=2.0)
        scene, _ = env.reset(cfg)
        _, _, out = env.step(scene, (0, 0))
        assert out.success
        assert out.base_reward == 0.0

    def test_reward_bounds_random_actions(self):
        cfg = _cfg(seed=3)
        rng = np.random.default_rng(3)
        for episode in range(5):
            scene, _ = env.reset(cfg, episode=episode)
            h, w = cfg.obs_hw
            while not scene.done:
                a = (rng.integers(h), rng.integers(w))
                _, _, out = env.step(scene, a)
                assert 0.0 <= out.base_reward <= 1.0
                assert out.base_reward == (0.0 if not out.success
                                           else max(0.0, 1.0 - cfg.w * out.accuracy))

    def test_empty_pixel_is_noop(self):
        cfg = _cfg()
        scene, _ = env.reset(cfg)
        env.step(scene, _center_action(cfg, 0, 0))
        before = scene.status.copy()
        _, _, out = env.step(scene, _center_action(cfg, 0, 0))
        assert not out.success and out.base_reward == 0.0
        assert np.array_equal(scene.status, before)

    def test_out_of_bounds_action_raises(self):
        cfg = _cfg()
        scene, _ = env.reset(cfg)
        with pytest.raises(ValueError):
            env.step(scene, (99, 0))

    def test_step_after_done_raises(self):
        cfg = _cfg(max_steps=1)
        scene, _ = env.reset(cfg)
        env.step(scene, (0, 0))
        with pytest.raises(RuntimeError):
            env.step(scene, (0, 0))


class TestCompromise:
    def test_topple_prob_one_fells_everything_above(self):
        cfg = _cfg(rows=4, topple_prob=1.0, side_window=1)
        scene, _ = env.reset(cfg)
        _, _, out = env.step(scene, _center_action(cfg, 2, 0))
        assert not out.success
        assert out.toppled == [(1, 0), (0, 0)]
        assert scene.status[0, 0] == Status.FALLEN
        assert scene.status[1, 0] == Status.FALLEN
        assert scene.status[2, 0] == Status.REMOVED

    def test_topple_prob_zero_shifts_column_down(self):
        cfg = _cfg(rows=4, topple_prob=0.0, side_window=1)
        scene, _ = env.reset(cfg)
        top_brightness = scene.brightness[:3, 0].copy()
        _, _, out = env.step(scene, _center_action(cfg, 3, 0))
        assert not out.success and out.toppled == []
        # the three parcels above all slid down one cell
        assert scene.status[0, 0] == Status.REMOVED
        assert list(scene.status[1:, 0]) == [Status.PRESENT] * 3
        assert np.array_equal(scene.brightness[1:, 0], top_brightness)

    def test_monotone_depletion(self):
        cfg = _cfg(seed=8, topple_prob=0.5)
        rng = np.random.default_rng(8)
        scene, _ = env.reset(cfg)
        h, w = cfg.obs_hw
        prev = scene.present_count()
        while not scene.done:
            _, _, out = env.step(scene, (rng.integers(h), rng.integers(w)))
            cur = scene.present_count()
            assert cur <= prev
            prev = cur

    def test_fallen_are_irreversible(self):
        cfg = _cfg(seed=9, topple_prob=1.0, side_window=1)
        scene, _ = env.reset(cfg)
        env.step(scene, _center_action(cfg, 2, 0))
        fallen = [c for c in scene.fallen]
        rng = np.random.default_rng(9)
        h, w = cfg.obs_hw
        while not scene.done:
            env.step(scene, (rng.integers(h), rng.integers(w)))
            for r, c in fallen:
                assert scene.status[r, c] == Status.FALLEN
        assert scene.fallen[:len(fallen)] == fallen

    def test_compromise_lowers_achievable_return(self):
        # counterfactual: a clone finished by the expert beats the same scene
        # finished by the expert after one out-of-order pick
        cfg = _cfg(seed=10, topple_prob=1.0, side_window=1)
        scene, _ = env.reset(cfg)
        pristine = scene.clone()

        def finish(s):
            total = 0.0
            while not s.done:
                try:
                    a = env.expert_action(s)
                except RuntimeError:
                    break
                _, _, out = env.step(s, a)
                total += out.base_reward
            return total

        env.step(scene, _center_action(cfg, 3, 0))  # compromising pick
        assert finish(pristine) > finish(scene)

    def test_fallen_rendered_in_bottom_band(self):
        # a fallen parcel shows as half-brightness scatter where the bottom
        # band is not hidden behind a present parcel
        cfg = _cfg(rows=4, side_window=1)
        scene, _ = env.reset(cfg)
        scene.status[:, 0] = Status.REMOVED
        scene.status[1, 0] = Status.FALLEN
        scene.fallen.append((1, 0))
        obs = env.render(scene)
        k = cfg.pixels_per_face
        band = obs[(cfg.rows - 1) * k:, :k, 0]
        assert (band == 0.5 * scene.brightness[1, 0]).any()


class TestExpert:
    def test_full_clear_default_scene(self):
        cfg = SceneConfig()  # 6 x 7 = 42 parcels
        _, _, outcomes = env.run_expert_episode(cfg)
        assert len(outcomes) == 42
        assert all(o.success for o in outcomes)
        assert sum(o.base_reward for o in outcomes) == pytest.approx(42.0)

    @pytest.mark.parametrize("mode", [SIDE_ONLY, SIDE_AND_TOP])
    def test_full_clear_both_modes(self, mode):
        cfg = _cfg(mode=mode, seed=2)
        _, _, outcomes = env.run_expert_episode(cfg)
        assert len(outcomes) == cfg.n_parcels
        assert all(o.success for o in outcomes)

    def test_targets_highest_valid_tie_left(self):
        cfg = _cfg()
        scene, _ = env.reset(cfg)
        assert env.expert_action(scene) == env.face_center_pixel(cfg, 0, 0)
        env.step(scene, env.face_center_pixel(cfg, 0, 0))
        assert env.expert_action(scene) == env.face_center_pixel(cfg, 0, 1)

    def test_noise_requires_rng_and_stays_in_face(self):
        cfg = _cfg()
        scene, _ = env.reset(cfg)
        with pytest.raises(ValueError):
            env.expert_action(scene, noise_std=1.0)
        rng = np.random.default_rng(0)
        k = cfg.pixels_per_face
        for _ in range(200):
            u, v = env.expert_action(scene, noise_std=3.0, rng=rng)
            assert 0 <= u < k and 0 <= v < k

    def test_episode_deterministic(self):
        cfg = _cfg(seed=6)
        obs_a, act_a, _ = env.run_expert_episode(cfg, episode=2, noise_std=1.0)
        obs_b, act_b, _ = env.run_expert_episode(cfg, episode=2, noise_std=1.0)
        assert act_a == act_b
        assert all(np.array_equal(x, y) for x, y in zip(obs_a, obs_b))


def test_make_eval_config_disjoint_seeds():
    cfg = _cfg(seed=7)
    seeds = {env.make_eval_config(cfg, i).seed for i in range(20)}
    assert len(seeds) == 20
    assert cfg.seed not in seeds
