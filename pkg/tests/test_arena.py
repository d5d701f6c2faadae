import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpiil.arena import (
    Action2,
    ConfigError,
    EnvConfig,
    Outcome,
    State2,
    Wall,
    build_world,
    clearance,
    clip_action,
    default_env_config,
    reset,
    step,
    swept_hit,
)


@pytest.fixture(scope="module")
def world():
    return build_world(default_env_config())


def dense_substep_hit(world, p0, p1, radius, n=100):
    """Independent collision oracle: sample the path densely and check the
    disc at each sample against every wall segment."""
    from dpiil.arena import _segments_point_dist

    for i in range(n + 1):
        t = i / n
        p = p0 + t * (p1 - p0)
        if _segments_point_dist(p, world.segments) < radius:
            return True
    return False


class TestBuildWorld:
    def test_default_has_two_apertures(self, world):
        # 3 walls, two of them split by a gap -> 5 segments
        assert world.segments.shape == (5, 4)
        widths = sorted(
            w.gap_width for w in world.cfg.walls if w.gap_width > 0
        )
        assert widths == [1.5, 3.0]

    def test_no_walls_open_arena(self):
        cfg = EnvConfig(walls=())
        w = build_world(cfg)
        assert w.segments.shape == (0, 4)
        assert clearance(w, (0.0, 0.0)) == pytest.approx(10.0 - 0.25)

    def test_aperture_too_narrow_rejected(self):
        cfg = EnvConfig(
            walls=(Wall("v", 0.0, -10.0, 10.0, gap_center=0.0, gap_width=0.4),)
        )
        with pytest.raises(ConfigError):
            build_world(cfg)

    def test_aperture_wider_than_wall_rejected(self):
        cfg = EnvConfig(
            walls=(Wall("v", 0.0, -1.0, 1.0, gap_center=0.0, gap_width=3.0),)
        )
        with pytest.raises(ConfigError):
            build_world(cfg)

    def test_nonpositive_horizon_rejected(self):
        with pytest.raises(ConfigError):
            build_world(EnvConfig(horizon=0))

    def test_segments_immutable(self, world):
        with pytest.raises(ValueError):
            world.segments[0, 0] = 99.0


class TestReset:
    def test_deterministic(self, world):
        assert reset(world, 123) == reset(world, 123)

    def test_noise_within_bounds(self, world):
        sx, sy = world.cfg.start
        for seed in range(10_000):
            s = reset(world, seed)
            assert abs(s.x - sx) <= 2.0
            assert abs(s.y - sy) <= 2.0

    def test_zero_noise_exact_start(self):
        w = build_world(EnvConfig(init_noise=0.0))
        s = reset(w, 7)
        assert (s.x, s.y) == w.cfg.start


class TestClearance:
    def test_center_of_wide_aperture(self, world):
        # 3.0 cm gap: 1.5 cm to either lip, minus 0.25 radius
        assert clearance(world, (0.0, -5.0)) == pytest.approx(1.25)

    def test_center_of_narrow_aperture(self, world):
        assert clearance(world, (5.0, 5.0)) == pytest.approx(0.75 - 0.25)

    def test_open_region_limited_by_boundary(self, world):
        # (-7, -7): walls are >= 5 cm away, boundary is 3 cm away
        assert clearance(world, (-7.0, -7.0)) == pytest.approx(3.0 - 0.25)

    def test_touching_wall_is_zero(self, world):
        assert clearance(world, (0.25, -8.0)) == pytest.approx(0.0)

    def test_penetration_negative(self, world):
        assert clearance(world, (0.1, -8.0)) < 0.0


class TestStep:
    def test_zero_action_open_area(self, world):
        s = State2(-7.0, -7.0)
        r = step(world, s, Action2(0.0, 0.0), 0)
        assert r.outcome is Outcome.RUNNING
        assert r.state == s

    def test_drive_into_wall_collides(self, world):
        # One radius + 0.1 cm left of the wall at x=0, moving 0.5 cm right
        s = State2(-0.35, -8.0)
        r = step(world, s, Action2(0.5, 0.0), 0)
        assert r.outcome is Outcome.COLLISION

    def test_success_checked_before_motion(self, world):
        gx, gy = world.cfg.goal
        s = State2(gx + 0.5, gy)
        r = step(world, s, Action2(1.0, 0.0), 0)
        assert r.outcome is Outcome.SUCCESS
        assert r.state == s

    def test_out_of_bounds(self, world):
        s = State2(-9.9, -7.0)
        r = step(world, s, Action2(-0.5, 0.0), 0)
        assert r.outcome is Outcome.OUT_OF_BOUNDS

    def test_timeout_on_last_step(self, world):
        s = State2(7.0, -7.0)
        r = step(world, s, Action2(0.1, 0.0), world.cfg.horizon - 1)
        assert r.outcome is Outcome.TIMEOUT

    def test_action_clipped_not_rejected(self, world):
        s = State2(-7.0, -7.0)
        r = step(world, s, Action2(9.0, 0.0), 0)
        assert r.clipped
        assert r.state.x == pytest.approx(-7.0 + world.cfg.a_max)

    def test_clip_action_preserves_direction(self):
        a, clipped = clip_action(Action2(3.0, 4.0), 1.5)
        assert clipped
        assert a.norm() == pytest.approx(1.5)
        assert a.vx / a.vy == pytest.approx(3.0 / 4.0)

    def test_determinism_sequence(self, world):
        acts = [Action2(0.9, 0.1), Action2(0.5, -0.5), Action2(1.0, 1.0)]

        def rollout():
            s = reset(world, 5)
            out = []
            for t, a in enumerate(acts):
                r = step(world, s, a, t)
                out.append((r.state, r.outcome))
                s = r.state
            return out

        assert rollout() == rollout()


class TestNoTunneling:
    def test_fast_perpendicular_crossing_detected(self, world):
        # a_max-speed dash straight through the wall plane between samples
        s = State2(-0.7, -8.0)
        r = step(world, s, Action2(1.4, 0.0), 0)
        assert r.outcome is Outcome.COLLISION

    def test_through_aperture_is_clean(self, world):
        s = State2(-0.7, -5.0)
        r = step(world, s, Action2(1.4, 0.0), 0)
        assert r.outcome is Outcome.RUNNING

    @settings(max_examples=300, deadline=None)
    @given(
        x=st.floats(-9.5, 9.5),
        y=st.floats(-9.5, 9.5),
        vx=st.floats(-1.5, 1.5),
        vy=st.floats(-1.5, 1.5),
    )
    def test_dense_oracle_never_sees_missed_hit(self, world, x, y, vx, vy):
        # Whenever the 100-substep oracle reports penetration, the swept test
        # must report it too (the converse can differ only on sub-sample dips).
        a, _ = clip_action(Action2(vx, vy), world.cfg.a_max)
        p0 = np.array([x, y])
        p1 = p0 + a.as_array()
        if dense_substep_hit(world, p0, p1, world.cfg.agent_radius):
            assert swept_hit(world, p0, p1, world.cfg.agent_radius)

    def test_bulk_agreement_with_dense_oracle(self, world):
        rng = np.random.default_rng(20240811)
        disagreements = 0
        for _ in range(2000):
            p0 = rng.uniform(-10, 10, size=2)
            ang = rng.uniform(0, 2 * math.pi)
            mag = rng.uniform(0, 1.5)
            p1 = p0 + mag * np.array([math.cos(ang), math.sin(ang)])
            hit = swept_hit(world, p0, p1, 0.25)
            ref = dense_substep_hit(world, p0, p1, 0.25)
            disagreements += hit != ref
        assert disagreements == 0

    def test_collision_point_has_nonpositive_clearance(self, world):
        s = State2(-0.6, -8.0)
        r = step(world, s, Action2(1.0, 0.0), 0)
        assert r.outcome is Outcome.COLLISION
        assert clearance(world, r.state) <= 1e-9
