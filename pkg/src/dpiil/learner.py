"""Interactive training loops, baselines, evaluation, and the chi sweep.

One unified loop drives every interactive algorithm: roll episodes from noisy
starts, switch between the learned policy and the expert according to the
algorithm's intervention rule, collect expert-mode samples (with recorded
speeds) until the per-iteration budget fills, aggregate, refit, repeat.
Behavior cloning skips interaction and instead matches the expert-action
budget with extra demonstrations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from .arena import (
    Action2,
    EnvConfig,
    Outcome,
    State2,
    World,
    build_world,
    clip_action,
    default_env_config,
    reset,
    step,
)
from .estimators import (
    Dataset,
    DemoSample,
    EnsemblePolicy,
    SpeedEstimator,
    f_v,
    fit_policy,
    fit_speed,
    policy_action,
    policy_variance,
)
from .oracle import (
    ExpertConfig,
    HgGateConfig,
    default_expert_config,
    expert_action,
    generate_demos,
    hg_gate,
)
from .riskgate import ControlMode, GateMode, RiskGate, calibrate_chi, risk
from .tinynet import FitConfig

__all__ = [
    "Algorithm",
    "EpisodeLog",
    "IterationStats",
    "RunMetrics",
    "RunResult",
    "StepRecord",
    "SweepResult",
    "TrainConfig",
    "chi_sweep",
    "evaluate_policy",
    "expert_policy_fn",
    "run",
    "run_baseline",
    "run_dpiil",
]


class Algorithm(Enum):
    BC = "bc"
    DAGGER = "dagger"
    ENSEMBLE_DAGGER = "ensemble-dagger"
    HG_DAGGER = "hg-dagger"
    DPIIL_MU = "dpiil-mu"
    DPIIL_UCB = "dpiil-ucb"

    @property
    def gate_mode(self) -> GateMode | None:
        return {
            Algorithm.ENSEMBLE_DAGGER: GateMode.ENSEMBLE_ONLY,
            Algorithm.DPIIL_MU: GateMode.DPIIL_MU,
            Algorithm.DPIIL_UCB: GateMode.DPIIL_UCB,
        }.get(self)


@dataclass(frozen=True)
class TrainConfig:
    algorithm: Algorithm = Algorithm.DPIIL_UCB
    iterations: int = 5
    iter_budget: int = 200
    n_initial_demos: int = 3
    seed: int = 0
    env: EnvConfig = field(default_factory=default_env_config)
    expert: ExpertConfig = field(default_factory=default_expert_config)
    hg: HgGateConfig = field(default_factory=HgGateConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    ensemble_size: int = 5
    chi_quantile: float = 0.80
    chi_fixed: float | None = None  # freeze the threshold (sensitivity sweeps)
    dagger_beta: float = 0.2
    bc_extra_actions: int | None = None  # None: iterations * iter_budget
    eval_episodes: int = 100
    # Expert control releases only below chi * this factor; 1.0 is the
    # stateless gate, smaller values add hysteresis. Experimental knob.
    gate_release_factor: float = 1.0
    max_episodes_per_iteration: int = 1000

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.iter_budget < 1:
            raise ValueError("iter_budget must be >= 1")
        if not 0.0 < self.gate_release_factor <= 1.0:
            raise ValueError("gate_release_factor must be in (0, 1]")


@dataclass(frozen=True, slots=True)
class StepRecord:
    t: int
    s: State2
    a: Action2
    mode: ControlMode
    risk: float  # nan for rules that do not score risk
    outcome: Outcome


@dataclass
class EpisodeLog:
    steps: list[StepRecord]
    outcome: Outcome


@dataclass
class IterationStats:
    iteration: int
    episodes: int
    successes: int
    expert_steps: int
    interventions: int
    dataset_size: int
    chi: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class RunMetrics:
    algorithm: str
    seed: int
    interactive_success: float | None  # None when there was no interaction
    autonomous_success: float
    expert_action_count: int
    intervention_count: int
    interactive_episodes: int
    per_iteration: list[IterationStats]

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["per_iteration"] = [it.to_dict() for it in self.per_iteration]
        d["schema_version"] = 1
        return d


@dataclass
class RunResult:
    policy: EnsemblePolicy
    speed: SpeedEstimator
    metrics: RunMetrics
    dataset: Dataset
    episode_logs: list[EpisodeLog]
    checkpoints: list[tuple[EnsemblePolicy, SpeedEstimator]] = field(
        default_factory=list
    )


PolicyFn = Callable[[State2], Action2]
DecideFn = Callable[[State2, ControlMode], tuple[ControlMode, float]]


def _child_int(child: np.random.SeedSequence) -> int:
    return int(child.generate_state(1)[0])


def _run_episode(
    world: World,
    s0: State2,
    decide_fn: DecideFn,
    auto_fn: PolicyFn,
    expert_fn: PolicyFn,
) -> tuple[EpisodeLog, list[DemoSample]]:
    """One gated episode; returns the step log and the expert-mode samples."""
    records: list[StepRecord] = []
    samples: list[DemoSample] = []
    s = s0
    mode = ControlMode.AUTO
    t = 0
    while True:
        mode, risk_value = decide_fn(s, mode)
        a = expert_fn(s) if mode is ControlMode.EXPERT else auto_fn(s)
        a, _ = clip_action(a, world.cfg.a_max)
        r = step(world, s, a, t)
        if r.outcome is Outcome.SUCCESS and r.state == s:
            # started inside the goal: no transition happened
            return EpisodeLog(steps=records, outcome=r.outcome), samples
        records.append(StepRecord(t, s, a, mode, risk_value, r.outcome))
        if mode is ControlMode.EXPERT:
            samples.append(DemoSample(s, a, f_v(s, r.state)))
        s = r.state
        t += 1
        if r.outcome.terminal:
            return EpisodeLog(steps=records, outcome=r.outcome), samples


def _count_interventions(logs: list[EpisodeLog]) -> int:
    """Auto-to-expert switches; episodes begin in the auto disposition."""
    n = 0
    for log in logs:
        prev = ControlMode.AUTO
        for rec in log.steps:
            if rec.mode is ControlMode.EXPERT and prev is ControlMode.AUTO:
                n += 1
            prev = rec.mode
    return n


def _expert_steps(logs: list[EpisodeLog]) -> int:
    return sum(
        1 for log in logs for rec in log.steps if rec.mode is ControlMode.EXPERT
    )


def _make_decide_fn(
    cfg: TrainConfig,
    world: World,
    ens: EnsemblePolicy,
    est: SpeedEstimator,
    chi: float | None,
    coin_rng: np.random.Generator,
) -> DecideFn:
    algo = cfg.algorithm
    if algo is Algorithm.DAGGER:

        def decide_dagger(s: State2, prev: ControlMode) -> tuple[ControlMode, float]:
            expert = coin_rng.random() < cfg.dagger_beta
            return (ControlMode.EXPERT if expert else ControlMode.AUTO), math.nan

        return decide_dagger
    if algo is Algorithm.HG_DAGGER:

        def decide_hg(s: State2, prev: ControlMode) -> tuple[ControlMode, float]:
            expert = hg_gate(world, cfg.expert, cfg.hg, s)
            return (ControlMode.EXPERT if expert else ControlMode.AUTO), math.nan

        return decide_hg
    gate = RiskGate(mode=algo.gate_mode, chi=chi, ensemble=ens, speed=est)
    release = chi * cfg.gate_release_factor

    def decide_risk(s: State2, prev: ControlMode) -> tuple[ControlMode, float]:
        r = risk(gate, s)
        if r > gate.chi:
            return ControlMode.EXPERT, r
        if prev is ControlMode.EXPERT and r > release:
            return ControlMode.EXPERT, r  # hysteresis band (off by default)
        return ControlMode.AUTO, r

    return decide_risk


def _fit_models(
    data: Dataset, cfg: TrainConfig, fit_child: np.random.SeedSequence
) -> tuple[EnsemblePolicy, SpeedEstimator]:
    pol_child, spd_child = fit_child.spawn(2)
    ens = fit_policy(
        data,
        cfg.ensemble_size,
        seed=_child_int(pol_child),
        fit=cfg.fit,
        a_max=cfg.env.a_max,
    )
    est = fit_speed(data, seed=_child_int(spd_child), fit=cfg.fit)
    return ens, est


def run(cfg: TrainConfig) -> RunResult:
    """Train with the configured algorithm and evaluate the final policy."""
    world = build_world(cfg.env)
    ss = np.random.SeedSequence(cfg.seed)
    demo_child, eval_child, bc_child, *iter_children = ss.spawn(3 + cfg.iterations)

    data = generate_demos(world, cfg.expert, cfg.n_initial_demos, _child_int(demo_child))

    if cfg.algorithm is Algorithm.BC:
        return _run_bc(cfg, world, data, bc_child, eval_child)

    ens, est = _fit_models(data, cfg, bc_child)

    logs: list[EpisodeLog] = []
    per_iter: list[IterationStats] = []
    checkpoints: list[tuple[EnsemblePolicy, SpeedEstimator]] = []
    for k, child in enumerate(iter_children, start=1):
        reset_child, expert_child, coin_child, fit_child = child.spawn(4)
        chi = None
        if cfg.algorithm.gate_mode is not None:
            chi = (
                cfg.chi_fixed
                if cfg.chi_fixed is not None
                else calibrate_chi(
                    cfg.algorithm.gate_mode, ens, est, data, cfg.chi_quantile
                )
            )
        expert_rng = np.random.default_rng(expert_child)
        coin_rng = np.random.default_rng(coin_child)
        decide_fn = _make_decide_fn(cfg, world, ens, est, chi, coin_rng)
        auto_fn = lambda s, _e=ens: policy_action(_e, s)  # noqa: E731
        expert_fn = lambda s, _r=expert_rng: expert_action(  # noqa: E731
            world, cfg.expert, s, _r
        )

        new_samples: list[DemoSample] = []
        iter_logs: list[EpisodeLog] = []
        while len(new_samples) < cfg.iter_budget:
            if len(iter_logs) >= cfg.max_episodes_per_iteration:
                warnings.warn(
                    f"iteration {k}: budget unfilled after "
                    f"{len(iter_logs)} episodes; continuing under-budget",
                    stacklevel=2,
                )
                break
            s0 = reset(world, _child_int(reset_child.spawn(1)[0]))
            log, samples = _run_episode(world, s0, decide_fn, auto_fn, expert_fn)
            iter_logs.append(log)
            room = cfg.iter_budget - len(new_samples)
            new_samples.extend(samples[:room])

        data = data + new_samples
        ens, est = _fit_models(data, cfg, fit_child)
        checkpoints.append((ens, est))
        logs.extend(iter_logs)
        per_iter.append(
            IterationStats(
                iteration=k,
                episodes=len(iter_logs),
                successes=sum(l.outcome is Outcome.SUCCESS for l in iter_logs),
                expert_steps=_expert_steps(iter_logs),
                interventions=_count_interventions(iter_logs),
                dataset_size=len(data),
                chi=chi,
            )
        )

    auton = evaluate_policy(
        lambda s: policy_action(ens, s), world, cfg.eval_episodes, _child_int(eval_child)
    )
    n_ep = len(logs)
    metrics = RunMetrics(
        algorithm=cfg.algorithm.value,
        seed=cfg.seed,
        interactive_success=(
            sum(l.outcome is Outcome.SUCCESS for l in logs) / n_ep if n_ep else None
        ),
        autonomous_success=auton,
        expert_action_count=_expert_steps(logs),
        intervention_count=_count_interventions(logs),
        interactive_episodes=n_ep,
        per_iteration=per_iter,
    )
    return RunResult(
        policy=ens,
        speed=est,
        metrics=metrics,
        dataset=data,
        episode_logs=logs,
        checkpoints=checkpoints,
    )


def _run_bc(
    cfg: TrainConfig,
    world: World,
    data: Dataset,
    fit_child: np.random.SeedSequence,
    eval_child: np.random.SeedSequence,
) -> RunResult:
    """Cloning on initial demos plus extra demos matching the expert budget."""
    target = (
        cfg.bc_extra_actions
        if cfg.bc_extra_actions is not None
        else cfg.iterations * cfg.iter_budget
    )
    extra_parent = fit_child.spawn(1)[0]
    extra: Dataset = []
    while len(extra) < target:
        chunk = generate_demos(
            world, cfg.expert, 1, seed=_child_int(extra_parent.spawn(1)[0])
        )
        extra.extend(chunk[: target - len(extra)])
    data = data + extra
    ens, est = _fit_models(data, cfg, fit_child)
    auton = evaluate_policy(
        lambda s: policy_action(ens, s), world, cfg.eval_episodes, _child_int(eval_child)
    )
    metrics = RunMetrics(
        algorithm=cfg.algorithm.value,
        seed=cfg.seed,
        interactive_success=None,
        autonomous_success=auton,
        expert_action_count=len(extra),
        intervention_count=0,
        interactive_episodes=0,
        per_iteration=[],
    )
    return RunResult(
        policy=ens, speed=est, metrics=metrics, dataset=data, episode_logs=[]
    )


def run_dpiil(cfg: TrainConfig) -> tuple[EnsemblePolicy, SpeedEstimator, RunMetrics]:
    """Risk-gated interactive training; returns final models and metrics."""
    if cfg.algorithm not in (Algorithm.DPIIL_MU, Algorithm.DPIIL_UCB):
        raise ValueError(f"run_dpiil expects a dpiil algorithm, got {cfg.algorithm}")
    res = run(cfg)
    return res.policy, res.speed, res.metrics


def run_baseline(cfg: TrainConfig) -> tuple[EnsemblePolicy, RunMetrics]:
    if cfg.algorithm in (Algorithm.DPIIL_MU, Algorithm.DPIIL_UCB):
        raise ValueError(f"run_baseline expects a baseline, got {cfg.algorithm}")
    res = run(cfg)
    return res.policy, res.metrics


def evaluate_policy(
    policy_fn: PolicyFn, world: World, n_episodes: int, seed: int
) -> float:
    """Fraction of successful fully-autonomous rollouts from noisy starts."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    ss = np.random.SeedSequence(seed)
    wins = 0
    for child in ss.spawn(n_episodes):
        s = reset(world, _child_int(child))
        for t in range(world.cfg.horizon):
            r = step(world, s, policy_fn(s), t)
            s = r.state
            if r.outcome.terminal:
                wins += r.outcome is Outcome.SUCCESS
                break
    return wins / n_episodes


def expert_policy_fn(
    world: World, cfg: ExpertConfig, rng: np.random.Generator
) -> PolicyFn:
    return lambda s: expert_action(world, cfg, s, rng)


@dataclass
class SweepResult:
    rows: list[tuple[float, float, float]]  # (chi, interactive, autonomous)
    r2_interactive: float
    r2_autonomous: float
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "rows": [
                {"chi": c, "interactive": i, "autonomous": a}
                for c, i, a in self.rows
            ],
            "r2_interactive": self.r2_interactive,
            "r2_autonomous": self.r2_autonomous,
            "degenerate": self.degenerate,
        }


def _r_squared(x: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    if len(x) < 2 or np.var(x) == 0.0 or np.var(y) == 0.0:
        return 0.0, True
    r = np.corrcoef(x, y)[0, 1]
    return float(r * r), False


def chi_sweep(cfg: TrainConfig, chi_grid: list[float]) -> SweepResult:
    """Run the configured algorithm once per frozen threshold value."""
    if not chi_grid:
        raise ValueError("empty chi grid")
    if any(c <= 0 for c in chi_grid):
        raise ValueError("chi values must be positive")
    if cfg.algorithm.gate_mode is None:
        raise ValueError(f"{cfg.algorithm} has no risk threshold to sweep")
    rows = []
    for chi in chi_grid:
        res = run(replace(cfg, chi_fixed=chi))
        m = res.metrics
        inter = m.interactive_success if m.interactive_success is not None else 0.0
        rows.append((chi, inter, m.autonomous_success))
    logx = np.log10([r[0] for r in rows])
    r2_i, d1 = _r_squared(logx, np.array([r[1] for r in rows]))
    r2_a, d2 = _r_squared(logx, np.array([r[2] for r in rows]))
    return SweepResult(
        rows=rows,
        r2_interactive=r2_i,
        r2_autonomous=r2_a,
        degenerate=d1 or d2,
    )
