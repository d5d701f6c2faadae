"""Experiment configuration: one flat key-value text file for everything.

Format: `key = value` lines, `#` comments, blank lines ignored. Lists use
semicolon-separated tuples. The file carries a schema_version and every
module's parameters, so a run directory's config snapshot fully determines
the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .arena import EnvConfig, Wall
from .learner import Algorithm, TrainConfig
from .oracle import ExpertConfig, HgGateConfig
from .tinynet import FitConfig

__all__ = [
    "ExperimentConfig",
    "SessionConfig",
    "load_config",
    "save_config",
    "train_config",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SessionConfig:
    tick_hz: float = 20.0
    episodes: int = 3
    port: int = 8750


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    expert: ExpertConfig = field(default_factory=ExpertConfig)
    hg: HgGateConfig = field(default_factory=HgGateConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    session: SessionConfig = field(default_factory=SessionConfig)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)
    out_dir: str = "runs"
    export_episodes: bool = False


def train_config(
    exp: ExperimentConfig, algorithm: Algorithm, seed: int
) -> TrainConfig:
    """Materialize a per-run training config from the experiment file."""
    return replace(
        exp.train,
        algorithm=algorithm,
        seed=seed,
        env=exp.env,
        expert=exp.expert,
        hg=exp.hg,
        fit=exp.fit,
    )


def _fmt_floats(*xs: float) -> str:
    return " ".join(repr(float(x)) for x in xs)


def _fmt_wall(w: Wall) -> str:
    return f"{w.axis} {_fmt_floats(w.at, w.lo, w.hi, w.gap_center, w.gap_width)}"


def _parse_wall(text: str) -> Wall:
    parts = text.split()
    if len(parts) != 6:
        raise ValueError(f"wall needs 6 fields, got {text!r}")
    return Wall(
        axis=parts[0],
        at=float(parts[1]),
        lo=float(parts[2]),
        hi=float(parts[3]),
        gap_center=float(parts[4]),
        gap_width=float(parts[5]),
    )


def save_config(exp: ExperimentConfig, path) -> None:
    env, ex, hg, fit, tr, se = exp.env, exp.expert, exp.hg, exp.fit, exp.train, exp.session
    lines = [
        f"schema_version = {SCHEMA_VERSION}",
        "",
        f"env.half_extent = {env.half_extent!r}",
        f"env.agent_radius = {env.agent_radius!r}",
        f"env.start = {_fmt_floats(*env.start)}",
        f"env.goal = {_fmt_floats(*env.goal)}",
        f"env.goal_radius = {env.goal_radius!r}",
        f"env.horizon = {env.horizon}",
        f"env.init_noise = {env.init_noise!r}",
        f"env.a_max = {env.a_max!r}",
        "env.walls = " + " ; ".join(_fmt_wall(w) for w in env.walls),
        "",
        "expert.waypoints = "
        + " ; ".join(_fmt_floats(x, y) for x, y in ex.waypoints),
        f"expert.v_fast = {ex.v_fast!r}",
        f"expert.v_slow = {ex.v_slow!r}",
        f"expert.slow_clearance = {ex.slow_clearance!r}",
        f"expert.blend_band = {ex.blend_band!r}",
        f"expert.noise_k = {ex.noise_k!r}",
        f"expert.track_gain = {ex.track_gain!r}",
        f"expert.lookahead_steps = {ex.lookahead_steps!r}",
        f"expert.lookahead_min = {ex.lookahead_min!r}",
        "",
        f"hg.d_safe = {hg.d_safe!r}",
        f"hg.d_dev = {hg.d_dev!r}",
        "",
        f"fit.epochs = {fit.epochs}",
        f"fit.lr = {fit.lr!r}",
        f"fit.batch_size = {fit.batch_size}",
        f"fit.beta1 = {fit.beta1!r}",
        f"fit.beta2 = {fit.beta2!r}",
        f"fit.eps = {fit.eps!r}",
        f"fit.min_steps = {fit.min_steps}",
        "",
        f"train.algorithm = {tr.algorithm.value}",
        f"train.iterations = {tr.iterations}",
        f"train.iter_budget = {tr.iter_budget}",
        f"train.n_initial_demos = {tr.n_initial_demos}",
        f"train.seed = {tr.seed}",
        f"train.ensemble_size = {tr.ensemble_size}",
        f"train.chi_quantile = {tr.chi_quantile!r}",
        f"train.chi_fixed = {'none' if tr.chi_fixed is None else repr(tr.chi_fixed)}",
        f"train.dagger_beta = {tr.dagger_beta!r}",
        "train.bc_extra_actions = "
        + ("none" if tr.bc_extra_actions is None else str(tr.bc_extra_actions)),
        f"train.eval_episodes = {tr.eval_episodes}",
        f"train.gate_release_factor = {tr.gate_release_factor!r}",
        f"train.max_episodes_per_iteration = {tr.max_episodes_per_iteration}",
        "",
        f"session.tick_hz = {se.tick_hz!r}",
        f"session.episodes = {se.episodes}",
        f"session.port = {se.port}",
        "",
        "seeds = " + " ".join(str(s) for s in exp.seeds),
        f"out_dir = {exp.out_dir}",
        f"export_episodes = {'true' if exp.export_episodes else 'false'}",
        "",
    ]
    Path(path).write_text("\n".join(lines))


def _parse_kv(path) -> dict[str, str]:
    kv: dict[str, str] = {}
    for i, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{i}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        kv[key.strip()] = val.strip()
    return kv


def load_config(path) -> ExperimentConfig:
    kv = _parse_kv(path)
    version = int(kv.pop("schema_version", "-1"))
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported config schema_version {version}")

    def fval(key: str) -> float:
        return float(kv[key])

    def pair(key: str) -> tuple[float, float]:
        a, b = kv[key].split()
        return (float(a), float(b))

    env = EnvConfig(
        half_extent=fval("env.half_extent"),
        agent_radius=fval("env.agent_radius"),
        start=pair("env.start"),
        goal=pair("env.goal"),
        goal_radius=fval("env.goal_radius"),
        horizon=int(kv["env.horizon"]),
        init_noise=fval("env.init_noise"),
        a_max=fval("env.a_max"),
        walls=tuple(
            _parse_wall(w) for w in kv["env.walls"].split(";") if w.strip()
        ),
    )
    expert = ExpertConfig(
        waypoints=tuple(
            (float(p.split()[0]), float(p.split()[1]))
            for p in kv["expert.waypoints"].split(";")
            if p.strip()
        ),
        v_fast=fval("expert.v_fast"),
        v_slow=fval("expert.v_slow"),
        slow_clearance=fval("expert.slow_clearance"),
        blend_band=fval("expert.blend_band"),
        noise_k=fval("expert.noise_k"),
        track_gain=fval("expert.track_gain"),
        lookahead_steps=fval("expert.lookahead_steps"),
        lookahead_min=fval("expert.lookahead_min"),
    )
    hg = HgGateConfig(d_safe=fval("hg.d_safe"), d_dev=fval("hg.d_dev"))
    fit = FitConfig(
        epochs=int(kv["fit.epochs"]),
        lr=fval("fit.lr"),
        batch_size=int(kv["fit.batch_size"]),
        beta1=fval("fit.beta1"),
        beta2=fval("fit.beta2"),
        eps=fval("fit.eps"),
        min_steps=int(kv["fit.min_steps"]),
    )
    train = TrainConfig(
        algorithm=Algorithm(kv["train.algorithm"]),
        iterations=int(kv["train.iterations"]),
        iter_budget=int(kv["train.iter_budget"]),
        n_initial_demos=int(kv["train.n_initial_demos"]),
        seed=int(kv["train.seed"]),
        env=env,
        expert=expert,
        hg=hg,
        fit=fit,
        ensemble_size=int(kv["train.ensemble_size"]),
        chi_quantile=fval("train.chi_quantile"),
        chi_fixed=(
            None if kv["train.chi_fixed"] == "none" else fval("train.chi_fixed")
        ),
        dagger_beta=fval("train.dagger_beta"),
        bc_extra_actions=(
            None
            if kv["train.bc_extra_actions"] == "none"
            else int(kv["train.bc_extra_actions"])
        ),
        eval_episodes=int(kv["train.eval_episodes"]),
        gate_release_factor=fval("train.gate_release_factor"),
        max_episodes_per_iteration=int(kv["train.max_episodes_per_iteration"]),
    )
    session = SessionConfig(
        tick_hz=fval("session.tick_hz"),
        episodes=int(kv["session.episodes"]),
        port=int(kv["session.port"]),
    )
    return ExperimentConfig(
        env=env,
        expert=expert,
        hg=hg,
        fit=fit,
        train=train,
        session=session,
        seeds=tuple(int(s) for s in kv["seeds"].split()),
        out_dir=kv["out_dir"],
        export_episodes=kv["export_episodes"] == "true",
    )
