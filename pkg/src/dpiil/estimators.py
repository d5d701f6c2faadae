"""Learned models: policy ensemble and probabilistic speed estimator.

The ensemble (M independently initialized MLPs trained on the same data)
provides a mean action and a disagreement variance that serves as epistemic
uncertainty. The speed estimator is a single two-headed MLP predicting the
mean and log-variance of the per-step squared displacement; its inverse is
the perceived-precision readout used by the risk gate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .arena import Action2, State2
from .tinynet import (
    FitConfig,
    LOG_VAR_MAX,
    LOG_VAR_MIN,
    Mlp,
    forward,
    init_mlp,
    load_mlp,
    save_mlp,
    train,
)

__all__ = [
    "DemoSample",
    "Dataset",
    "EnsemblePolicy",
    "EPS_FLOOR",
    "PrecisionMode",
    "SpeedEstimator",
    "dataset_arrays",
    "f_v",
    "fit_policy",
    "fit_speed",
    "load_dataset",
    "load_ensemble",
    "load_speed",
    "policy_action",
    "policy_variance",
    "precision",
    "save_dataset",
    "save_ensemble",
    "save_speed",
]

EPS_FLOOR = 1e-4

DATASET_VERSION = 1

HIDDEN = (64, 64)


@dataclass(frozen=True, slots=True)
class DemoSample:
    s: State2
    a: Action2
    v: float  # squared per-step displacement of the recorded transition


Dataset = list[DemoSample]


def f_v(s_t: State2, s_next: State2) -> float:
    """Squared Euclidean displacement between consecutive positions."""
    dx = s_next.x - s_t.x
    dy = s_next.y - s_t.y
    return dx * dx + dy * dy


def dataset_arrays(data: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s = np.array([[d.s.x, d.s.y] for d in data], dtype=np.float64).reshape(-1, 2)
    a = np.array([[d.a.vx, d.a.vy] for d in data], dtype=np.float64).reshape(-1, 2)
    v = np.array([d.v for d in data], dtype=np.float64)
    return s, a, v


def save_dataset(data: Dataset, path, meta: dict | None = None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema_version={DATASET_VERSION}\n")
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(["x", "y", "ax", "ay", "v_star"])
        for d in data:
            w.writerow(
                [
                    repr(float(d.s.x)),
                    repr(float(d.s.y)),
                    repr(float(d.a.vx)),
                    repr(float(d.a.vy)),
                    repr(float(d.v)),
                ]
            )


def load_dataset(path) -> Dataset:
    data: Dataset = []
    with Path(path).open(newline="") as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
    rd = csv.reader(rows)
    header = next(rd)
    if header != ["x", "y", "ax", "ay", "v_star"]:
        raise ValueError(f"unexpected dataset header {header}")
    for row in rd:
        if not row:
            continue
        x, y, ax, ay, v = map(float, row)
        data.append(DemoSample(State2(x, y), Action2(ax, ay), v))
    return data


@dataclass
class EnsemblePolicy:
    members: list[Mlp]
    a_max: float = 1.5

    @property
    def size(self) -> int:
        return len(self.members)


def _member_seeds(seed: int, m: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1)[0]) for c in ss.spawn(m)]


def fit_policy(
    data: Dataset,
    m_members: int = 5,
    seed: int = 0,
    fit: FitConfig = FitConfig(),
    a_max: float = 1.5,
) -> EnsemblePolicy:
    """Train M state->action regressors that differ by init and shuffling."""
    if not data:
        raise ValueError("empty dataset")
    if m_members < 2:
        raise ValueError("ensemble needs at least 2 members for a variance")
    s, a, _ = dataset_arrays(data)
    members = []
    for ms in _member_seeds(seed, m_members):
        net = init_mlp((2, *HIDDEN, 2), seed=ms)
        members.append(train(net, s, a, "mse", fit, seed=ms ^ 0x5EED))
    return EnsemblePolicy(members=members, a_max=a_max)


def _member_outputs(ens: EnsemblePolicy, s: State2) -> np.ndarray:
    x = np.array([s.x, s.y], dtype=np.float64)
    return np.stack([forward(m, x) for m in ens.members])


def policy_action(ens: EnsemblePolicy, s: State2) -> Action2:
    """Per-dimension mean over members, norm-clipped to a_max."""
    mean = _member_outputs(ens, s).mean(axis=0)
    n = math.hypot(mean[0], mean[1])
    if n > ens.a_max:
        mean *= ens.a_max / n
    return Action2(float(mean[0]), float(mean[1]))


def policy_variance(ens: EnsemblePolicy, s: State2) -> float:
    """Population variance across members, averaged over action dims."""
    out = _member_outputs(ens, s)
    return float(out.var(axis=0, ddof=0).mean())


@dataclass
class SpeedEstimator:
    net: Mlp

    def predict(self, s: State2) -> tuple[float, float]:
        """Mean and standard deviation of the speed at a state."""
        out = forward(self.net, np.array([s.x, s.y], dtype=np.float64))
        lv = float(np.clip(out[1], LOG_VAR_MIN, LOG_VAR_MAX))
        return float(out[0]), math.exp(0.5 * lv)


def fit_speed(
    data: Dataset, seed: int = 0, fit: FitConfig = FitConfig()
) -> SpeedEstimator:
    """Train the two-headed Gaussian speed model on (state -> v*)."""
    if not data:
        raise ValueError("empty dataset")
    s, _, v = dataset_arrays(data)
    net = init_mlp((2, *HIDDEN, 2), seed=seed)
    # Warm-start the variance head near the marginal target variance, floored
    # well above the clamp so near-degenerate targets cannot start training
    # in the overconfident likelihood regime.
    lv0 = math.log(max(float(v.var()), math.exp(-2.0)))
    net.biases[-1][1] = min(lv0, LOG_VAR_MAX)
    # The second moment converges much more slowly than the mean; give the
    # likelihood fit a higher step floor than squared-error fits need.
    fit = replace(fit, min_steps=5 * fit.min_steps)
    net = train(net, s, v[:, None], "nll", fit, seed=seed ^ 0x5EED)
    return SpeedEstimator(net=net)


class PrecisionMode(Enum):
    MU = "mu"
    UCB = "ucb"


def precision(est: SpeedEstimator, s: State2, mode: PrecisionMode) -> float:
    """Perceived precision: inverse of the (floored) predicted speed.

    MU inverts the predicted mean; UCB inverts mean + one standard deviation.
    The floor on the inverted quantity caps precision at 1/EPS_FLOOR.
    """
    mu, sigma = est.predict(s)
    base = mu if mode is PrecisionMode.MU else mu + sigma
    return 1.0 / max(base, EPS_FLOOR)


def save_ensemble(ens: EnsemblePolicy, dirpath) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    (d / "ensemble.txt").write_text(f"members={ens.size}\na_max={ens.a_max!r}\n")
    for i, m in enumerate(ens.members):
        save_mlp(m, d / f"member{i}.npz")


def load_ensemble(dirpath) -> EnsemblePolicy:
    d = Path(dirpath)
    meta = dict(
        ln.split("=", 1) for ln in (d / "ensemble.txt").read_text().splitlines()
    )
    m = int(meta["members"])
    members = [load_mlp(d / f"member{i}.npz") for i in range(m)]
    return EnsemblePolicy(members=members, a_max=float(meta["a_max"]))


def save_speed(est: SpeedEstimator, path) -> None:
    save_mlp(est.net, path)


def load_speed(path) -> SpeedEstimator:
    return SpeedEstimator(net=load_mlp(path))
