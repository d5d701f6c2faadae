"""Deterministic 2D aperture-passing environment.

Square arena with axis-aligned wall segments, each optionally pierced by an
aperture gap. The agent is a disc that moves by velocity commands; collision
uses a swept-circle (capsule) test against every wall segment so fast motion
cannot tunnel through a wall.

Default layout (see `default_env_config`): a 20x20 cm arena split by a solid
horizontal separator plus two aperture walls, so the route from start to goal
loops around the right side and must thread a 3.0 cm gap and then a 1.5 cm
gap. The exact placement is a stand-in; every number lives in `EnvConfig`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "Action2",
    "ConfigError",
    "EnvConfig",
    "Outcome",
    "State2",
    "StepResult",
    "Wall",
    "World",
    "build_world",
    "clearance",
    "default_env_config",
    "reset",
    "step",
]


class ConfigError(ValueError):
    """Raised when an environment configuration is infeasible."""


@dataclass(frozen=True, slots=True)
class State2:
    """Agent position in cm."""

    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True, slots=True)
class Action2:
    """Velocity command in cm per step."""

    vx: float
    vy: float

    def norm(self) -> float:
        return math.hypot(self.vx, self.vy)

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy], dtype=np.float64)


@dataclass(frozen=True, slots=True)
class Wall:
    """Axis-aligned wall with an optional aperture gap.

    `axis` is "v" (vertical line x=at, spanning y in [lo, hi]) or "h"
    (horizontal line y=at, spanning x in [lo, hi]). `gap_width` of 0 means a
    solid wall; otherwise the gap of that width centered at `gap_center` is
    cut out of the span.
    """

    axis: str
    at: float
    lo: float
    hi: float
    gap_center: float = 0.0
    gap_width: float = 0.0


def _default_walls() -> tuple[Wall, ...]:
    # Two slab walls (plate pairs capped at the gap edges, so each aperture
    # is a short channel) plus a solid separator between start and goal.
    t = 1.6  # slab thickness
    return (
        # first slab: vertical at x=0..t over the lower half, 3.0 cm gap
        Wall("v", 0.0, -10.0, 0.0, gap_center=-5.0, gap_width=3.0),
        Wall("v", t, -10.0, 0.0, gap_center=-5.0, gap_width=3.0),
        Wall("h", -6.5, 0.0, t),
        Wall("h", -3.5, 0.0, t),
        # second slab: vertical at x=5..5+t over the upper half, 1.5 cm gap
        Wall("v", 5.0, 0.0, 10.0, gap_center=5.0, gap_width=1.5),
        Wall("v", 5.0 + t, 0.0, 10.0, gap_center=5.0, gap_width=1.5),
        Wall("h", 4.25, 5.0, 5.0 + t),
        Wall("h", 5.75, 5.0, 5.0 + t),
        # separator between the start and goal quadrants
        Wall("h", 0.0, -10.0, 5.0 + t),
    )


@dataclass(frozen=True, slots=True)
class EnvConfig:
    half_extent: float = 10.0
    walls: tuple[Wall, ...] = field(default_factory=_default_walls)
    agent_radius: float = 0.25
    start: tuple[float, float] = (-7.0, -7.0)
    goal: tuple[float, float] = (-7.0, 7.0)
    goal_radius: float = 1.0
    horizon: int = 200
    init_noise: float = 2.0
    a_max: float = 1.5


def default_env_config() -> EnvConfig:
    return EnvConfig()


class Outcome(Enum):
    RUNNING = "running"
    SUCCESS = "success"
    COLLISION = "collision"
    OUT_OF_BOUNDS = "out_of_bounds"
    TIMEOUT = "timeout"

    @property
    def terminal(self) -> bool:
        return self is not Outcome.RUNNING


@dataclass(frozen=True, slots=True)
class StepResult:
    state: State2
    outcome: Outcome
    clipped: bool = False


@dataclass(frozen=True)
class World:
    """Immutable resolved environment: wall segments with apertures cut out."""

    cfg: EnvConfig
    # (n, 4) float64 array of segments [x1, y1, x2, y2]
    segments: np.ndarray

    def __post_init__(self) -> None:
        self.segments.setflags(write=False)


def _wall_segments(w: Wall) -> list[tuple[float, float, float, float]]:
    if w.hi <= w.lo:
        raise ConfigError(f"wall span is empty: {w}")
    spans: list[tuple[float, float]]
    if w.gap_width <= 0.0:
        spans = [(w.lo, w.hi)]
    else:
        g0 = w.gap_center - w.gap_width / 2.0
        g1 = w.gap_center + w.gap_width / 2.0
        if g0 < w.lo or g1 > w.hi:
            raise ConfigError(
                f"aperture [{g0}, {g1}] extends beyond wall span [{w.lo}, {w.hi}]"
            )
        spans = [(w.lo, g0), (g1, w.hi)]
    out = []
    for a, b in spans:
        if b - a <= 0.0:
            continue
        if w.axis == "v":
            out.append((w.at, a, w.at, b))
        elif w.axis == "h":
            out.append((a, w.at, b, w.at))
        else:
            raise ConfigError(f"unknown wall axis {w.axis!r}")
    return out


def build_world(cfg: EnvConfig) -> World:
    """Validate a config and resolve it into an immutable wall-segment list."""
    if cfg.horizon <= 0:
        raise ConfigError(f"horizon must be positive, got {cfg.horizon}")
    if cfg.half_extent <= 0:
        raise ConfigError("half_extent must be positive")
    if cfg.agent_radius <= 0:
        raise ConfigError("agent_radius must be positive")
    if cfg.a_max <= 0:
        raise ConfigError("a_max must be positive")
    for w in cfg.walls:
        if 0.0 < w.gap_width <= 2.0 * cfg.agent_radius:
            raise ConfigError(
                f"aperture width {w.gap_width} cannot pass agent of radius "
                f"{cfg.agent_radius} (needs > {2 * cfg.agent_radius})"
            )
    segs: list[tuple[float, float, float, float]] = []
    for w in cfg.walls:
        segs.extend(_wall_segments(w))
    arr = np.array(segs, dtype=np.float64).reshape(-1, 4)
    for p in (cfg.start, cfg.goal):
        if abs(p[0]) > cfg.half_extent or abs(p[1]) > cfg.half_extent:
            raise ConfigError(f"start/goal {p} outside arena")
    return World(cfg=cfg, segments=arr)


def reset(world: World, seed: int) -> State2:
    """Start position plus independent per-axis uniform noise."""
    rng = np.random.default_rng(seed)
    n = world.cfg.init_noise
    off = rng.uniform(-n, n, size=2)
    return State2(float(world.cfg.start[0] + off[0]), float(world.cfg.start[1] + off[1]))


def _point_segment_dist(px: float, py: float, seg: np.ndarray) -> float:
    x1, y1, x2, y2 = seg
    dx, dy = x2 - x1, y2 - y1
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return math.hypot(px - x1, py - y1)
    t = ((px - x1) * dx + (py - y1) * dy) / L2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (x1 + t * dx), py - (y1 + t * dy))


def _segments_point_dist(p: np.ndarray, segs: np.ndarray) -> float:
    """Min distance from point to any segment (vectorized)."""
    if segs.shape[0] == 0:
        return math.inf
    a = segs[:, 0:2]
    b = segs[:, 2:4]
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    L2 = np.where(L2 == 0.0, 1.0, L2)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / L2, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = np.linalg.norm(p - proj, axis=1)
    return float(d.min())


def clearance(world: World, p: State2 | tuple[float, float]) -> float:
    """Free distance from the agent surface at `p` to the nearest obstacle.

    Takes the minimum over all wall segments and the arena boundary, minus the
    agent radius; negative when penetrating.
    """
    px, py = (p.x, p.y) if isinstance(p, State2) else (float(p[0]), float(p[1]))
    h = world.cfg.half_extent
    d_bound = h - max(abs(px), abs(py))
    d_seg = _segments_point_dist(np.array([px, py]), world.segments)
    return min(d_seg, d_bound) - world.cfg.agent_radius


def _orient(ax, ay, bx, by, cx, cy) -> float:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _segments_intersect(p0, p1, q0, q1) -> bool:
    d1 = _orient(q0[0], q0[1], q1[0], q1[1], p0[0], p0[1])
    d2 = _orient(q0[0], q0[1], q1[0], q1[1], p1[0], p1[1])
    d3 = _orient(p0[0], p0[1], p1[0], p1[1], q0[0], q0[1])
    d4 = _orient(p0[0], p0[1], p1[0], p1[1], q1[0], q1[1])
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    # Collinear/touching configurations collapse to distance 0 via endpoint
    # checks in _segment_segment_dist, so only proper crossings matter here.
    return False


def _segment_segment_dist(p0, p1, q0, q1) -> float:
    if _segments_intersect(p0, p1, q0, q1):
        return 0.0
    qs = np.array([*q0, *q1])
    ps = np.array([*p0, *p1])
    return min(
        _point_segment_dist(p0[0], p0[1], qs),
        _point_segment_dist(p1[0], p1[1], qs),
        _point_segment_dist(q0[0], q0[1], ps),
        _point_segment_dist(q1[0], q1[1], ps),
    )


def swept_hit(world: World, p0: np.ndarray, p1: np.ndarray, radius: float) -> bool:
    """True if the disc sweeping from p0 to p1 penetrates any wall segment."""
    for seg in world.segments:
        d = _segment_segment_dist(
            (p0[0], p0[1]), (p1[0], p1[1]), (seg[0], seg[1]), (seg[2], seg[3])
        )
        if d < radius:
            return True
    return False


def _contact_point(world: World, p0: np.ndarray, p1: np.ndarray, radius: float) -> np.ndarray:
    """Earliest point along p0->p1 where the swept disc reaches a wall.

    Grid scan plus bisection on the point-to-walls distance; only used to
    report where a collision happened, detection itself is exact.
    """
    def dist_at(t: float) -> float:
        p = p0 + t * (p1 - p0)
        return _segments_point_dist(p, world.segments)

    n = 128
    prev_t = 0.0
    for i in range(1, n + 1):
        t = i / n
        if dist_at(t) < radius:
            lo, hi = prev_t, t
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if dist_at(mid) < radius:
                    hi = mid
                else:
                    lo = mid
            return p0 + lo * (p1 - p0)
        prev_t = t
    return p0  # grazing contact between samples; report the start


def clip_action(a: Action2, a_max: float) -> tuple[Action2, bool]:
    n = a.norm()
    if n <= a_max or n == 0.0:
        return a, False
    s = a_max / n
    return Action2(a.vx * s, a.vy * s), True


def step(world: World, s: State2, a: Action2, t: int) -> StepResult:
    """Advance one step; pure function of its inputs.

    Order of checks: success at the current state (so resets inside the goal
    terminate immediately), then swept collision along the motion, then
    out-of-bounds, then success at the new state, then timeout.
    """
    cfg = world.cfg
    gx, gy = cfg.goal
    if math.hypot(s.x - gx, s.y - gy) <= cfg.goal_radius:
        return StepResult(s, Outcome.SUCCESS)
    a, clipped = clip_action(a, cfg.a_max)
    p0 = s.as_array()
    p1 = p0 + a.as_array()
    if swept_hit(world, p0, p1, cfg.agent_radius):
        c = _contact_point(world, p0, p1, cfg.agent_radius)
        return StepResult(State2(float(c[0]), float(c[1])), Outcome.COLLISION, clipped)
    if max(abs(p1[0]), abs(p1[1])) > cfg.half_extent:
        return StepResult(State2(float(p1[0]), float(p1[1])), Outcome.OUT_OF_BOUNDS, clipped)
    nxt = State2(float(p1[0]), float(p1[1]))
    if math.hypot(nxt.x - gx, nxt.y - gy) <= cfg.goal_radius:
        return StepResult(nxt, Outcome.SUCCESS, clipped)
    if t + 1 >= cfg.horizon:
        return StepResult(nxt, Outcome.TIMEOUT, clipped)
    return StepResult(nxt, Outcome.RUNNING, clipped)
