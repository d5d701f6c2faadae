"""Algorithmic expert with a human-like speed-accuracy trade-off.

The expert tracks a reference waypoint polyline, moving fast in open space
and slowing down where clearance shrinks (aperture traversals, the corridor
corner). Commands are corrupted by signal-dependent Gaussian noise whose
per-axis standard deviation scales with the command magnitude, so recorded
speeds carry the same aleatoric structure a human demonstrator would produce.

The same module provides the hand-specified intervention rule used by the
gated-by-oracle baseline: intervene when clearance is small or the agent has
drifted off the reference path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arena import Action2, Outcome, State2, World, clearance, clip_action, reset, step
from .estimators import Dataset, DemoSample, f_v

__all__ = [
    "DemoGenerationError",
    "ExpertConfig",
    "HgGateConfig",
    "default_expert_config",
    "expert_action",
    "expert_command",
    "generate_demos",
    "hg_gate",
    "path_distance",
]


class DemoGenerationError(RuntimeError):
    """Raised when the expert cannot produce enough successful episodes."""


def _default_waypoints() -> tuple[tuple[float, float], ...]:
    # Loop route: east through the 3.0 cm gap (hugging its lower lip), around
    # the separator corner, north along the right corridor, then west through
    # the 1.5 cm gap to the goal.
    return (
        (-7.0, -7.0),
        (-4.8, -6.85),
        (-2.5, -6.05),
        (-1.4, -5.75),
        (-0.3, -5.66),
        (0.8, -5.6),
        (1.9, -5.5),
        (2.8, -5.2),
        (3.6, -4.4),
        (4.15, -2.4),
        (4.25, -0.8),
        (6.3, -0.78),
        (7.17, -0.45),
        (7.4, 0.1),
        (7.4, 1.0),
        (7.4, 1.9),
        (7.9, 2.8),
        (8.35, 3.6),
        (8.5, 4.5),
        (8.2, 5.0),
        (7.6, 5.0),
        (7.0, 5.0),
        (6.2, 5.0),
        (5.4, 5.0),
        (4.6, 5.0),
        (3.4, 5.0),
        (1.0, 6.0),
        (-2.0, 6.9),
        (-4.7, 7.2),
        (-7.0, 7.0),
    )


@dataclass(frozen=True)
class ExpertConfig:
    waypoints: tuple[tuple[float, float], ...] = field(
        default_factory=_default_waypoints
    )
    v_fast: float = 1.0
    v_slow: float = 0.2
    slow_clearance: float = 1.0  # below this, crawl at v_slow
    blend_band: float = 0.5  # linear ramp back up to v_fast over this band
    noise_k: float = 0.1  # per-axis action noise std = k * |command|
    track_gain: float = 0.3  # pull toward the path, per cm of deviation
    # Aim at the path point one lookahead ahead; scales with commanded speed
    # (steps of look time), so crawling tracks tightly and cruising aims far.
    lookahead_steps: float = 4.0
    lookahead_min: float = 1.0


def default_expert_config() -> ExpertConfig:
    return ExpertConfig()


@dataclass(frozen=True)
class HgGateConfig:
    d_safe: float = 0.5  # intervene below this clearance
    d_dev: float = 1.5  # intervene beyond this path deviation


def _project_polyline(
    wps: tuple[tuple[float, float], ...], px: float, py: float
) -> tuple[float, float, float, float]:
    """Closest point on the polyline: (dist, cx, cy, arc_position)."""
    best = (math.inf, px, py, 0.0)
    arc = 0.0
    for (x1, y1), (x2, y2) in zip(wps[:-1], wps[1:]):
        dx, dy = x2 - x1, y2 - y1
        L2 = dx * dx + dy * dy
        if L2 == 0.0:
            continue
        L = math.sqrt(L2)
        t = ((px - x1) * dx + (py - y1) * dy) / L2
        t = min(1.0, max(0.0, t))
        cx, cy = x1 + t * dx, y1 + t * dy
        d = math.hypot(px - cx, py - cy)
        if d < best[0]:
            best = (d, cx, cy, arc + t * L)
        arc += L
    return best


def _point_at_arc(
    wps: tuple[tuple[float, float], ...], arc: float
) -> tuple[float, float]:
    """Polyline point at a given arc length, clamped to the endpoints."""
    if arc <= 0.0:
        return wps[0]
    acc = 0.0
    for (x1, y1), (x2, y2) in zip(wps[:-1], wps[1:]):
        L = math.hypot(x2 - x1, y2 - y1)
        if L == 0.0:
            continue
        if acc + L >= arc:
            t = (arc - acc) / L
            return (x1 + t * (x2 - x1), y1 + t * (y2 - y1))
        acc += L
    return wps[-1]


def path_distance(cfg: ExpertConfig, s: State2) -> float:
    """Distance from a state to the reference polyline."""
    return _project_polyline(cfg.waypoints, s.x, s.y)[0]


def _speed_scale(cfg: ExpertConfig, c: float) -> float:
    if c <= cfg.slow_clearance:
        return cfg.v_slow
    if c >= cfg.slow_clearance + cfg.blend_band:
        return cfg.v_fast
    frac = (c - cfg.slow_clearance) / cfg.blend_band
    return cfg.v_slow + frac * (cfg.v_fast - cfg.v_slow)


def expert_command(world: World, cfg: ExpertConfig, s: State2) -> Action2:
    """Noiseless command: unit heading toward a lookahead point on the path
    plus a proportional pull back to it, scaled by clearance-dependent speed.

    Aiming well ahead (rather than at the nearest point) gives the shallow,
    human-like return angles that only gradually bleed off lateral error.
    """
    wps = cfg.waypoints
    _, cx, cy, arc = _project_polyline(wps, s.x, s.y)
    v = _speed_scale(cfg, clearance(world, s))
    look = max(cfg.lookahead_min, cfg.lookahead_steps * v)
    tx, ty = _point_at_arc(wps, arc + look)
    hx, hy = tx - s.x, ty - s.y
    hn = math.hypot(hx, hy)
    if hn <= 1e-9:
        return Action2(0.0, 0.0)
    dirx = hx / hn + cfg.track_gain * (cx - s.x)
    diry = hy / hn + cfg.track_gain * (cy - s.y)
    n = math.hypot(dirx, diry)
    if n == 0.0:
        dirx, diry, n = hx / hn, hy / hn, 1.0
    return Action2(v * dirx / n, v * diry / n)


def expert_action(
    world: World, cfg: ExpertConfig, s: State2, rng: np.random.Generator
) -> Action2:
    """Noisy expert action: command plus signal-dependent Gaussian noise,
    clipped to the environment's action bound."""
    cmd = expert_command(world, cfg, s)
    std = cfg.noise_k * cmd.norm()
    noise = rng.normal(0.0, 1.0, size=2) * std
    a = Action2(float(cmd.vx + noise[0]), float(cmd.vy + noise[1]))
    a, _ = clip_action(a, world.cfg.a_max)
    return a


def hg_gate(
    world: World, cfg: ExpertConfig, gate: HgGateConfig, s: State2
) -> bool:
    """Hand-specified intervention rule: low clearance or off the path."""
    return (
        clearance(world, s) < gate.d_safe
        or path_distance(cfg, s) > gate.d_dev
    )


def generate_demos(
    world: World,
    cfg: ExpertConfig,
    n_traj: int,
    seed: int,
    retry_cap: int = 20,
) -> Dataset:
    """Roll successful expert episodes and record (state, action, speed).

    Failed episodes are discarded and retried with fresh seeds; exhausting
    the retry budget means the expert configuration is infeasible.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    ss = np.random.SeedSequence(seed)
    data: Dataset = []
    collected = 0
    attempts = 0
    max_attempts = n_traj + retry_cap
    while collected < n_traj:
        if attempts >= max_attempts:
            raise DemoGenerationError(
                f"only {collected}/{n_traj} successful expert episodes in "
                f"{attempts} attempts"
            )
        child = ss.spawn(1)[0]
        attempts += 1
        episode, outcome = _expert_episode(world, cfg, child)
        if outcome is Outcome.SUCCESS:
            data.extend(episode)
            collected += 1
    return data


def _expert_episode(
    world: World, cfg: ExpertConfig, child: np.random.SeedSequence
) -> tuple[Dataset, Outcome]:
    reset_seed = int(child.generate_state(1)[0])
    rng = np.random.default_rng(child)
    s = reset(world, reset_seed)
    episode: Dataset = []
    t = 0
    while True:
        a = expert_action(world, cfg, s, rng)
        r = step(world, s, a, t)
        if r.outcome is Outcome.SUCCESS and r.state == s:
            break  # reset landed inside the goal; no transition to record
        episode.append(DemoSample(s, a, f_v(s, r.state)))
        s = r.state
        t += 1
        if r.outcome.terminal:
            return episode, r.outcome
