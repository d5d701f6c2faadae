"""Collision-risk scoring, the intervention decision, and threshold calibration.

Risk is the product of perceived precision (inverse predicted expert speed)
and ensemble disagreement; the ensemble-only mode drops the precision factor
and scores by disagreement alone. Control switches to the expert strictly
above the threshold, re-evaluated fresh at every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .arena import State2
from .estimators import (
    Dataset,
    EnsemblePolicy,
    PrecisionMode,
    SpeedEstimator,
    policy_variance,
    precision,
)

__all__ = [
    "ControlMode",
    "GateMode",
    "RiskGate",
    "calibrate_chi",
    "decide",
    "risk",
]


class GateMode(Enum):
    DPIIL_MU = "dpiil_mu"
    DPIIL_UCB = "dpiil_ucb"
    ENSEMBLE_ONLY = "ensemble_only"

    @property
    def precision_mode(self) -> PrecisionMode | None:
        if self is GateMode.DPIIL_MU:
            return PrecisionMode.MU
        if self is GateMode.DPIIL_UCB:
            return PrecisionMode.UCB
        return None


class ControlMode(Enum):
    AUTO = "auto"
    EXPERT = "expert"


@dataclass
class RiskGate:
    mode: GateMode
    chi: float
    ensemble: EnsemblePolicy
    speed: SpeedEstimator | None = None

    def __post_init__(self) -> None:
        if not self.chi > 0.0:
            raise ValueError(f"chi must be positive, got {self.chi}")
        if self.mode is not GateMode.ENSEMBLE_ONLY and self.speed is None:
            raise ValueError(f"{self.mode} requires a speed estimator")


def risk(gate: RiskGate, s: State2) -> float:
    """Collision-risk score at a state under the gate's mode."""
    var = policy_variance(gate.ensemble, s)
    pm = gate.mode.precision_mode
    if pm is None:
        return var
    return precision(gate.speed, s, pm) * var


def decide(gate: RiskGate, s: State2) -> ControlMode:
    """Expert control strictly above the threshold; stateless per step."""
    return ControlMode.EXPERT if risk(gate, s) > gate.chi else ControlMode.AUTO


def calibrate_chi(
    mode: GateMode,
    ensemble: EnsemblePolicy,
    speed: SpeedEstimator | None,
    data: Dataset,
    quantile: float = 0.80,
) -> float:
    """Nearest-rank quantile of risk over the training states.

    With the default 0.80 quantile roughly the top 20% of training states
    score strictly above the returned threshold.
    """
    if not data:
        raise ValueError("empty dataset")
    if not 0.0 < quantile < 1.0:
        raise ValueError("quantile must be in (0, 1)")
    probe = RiskGate(mode=mode, chi=1.0, ensemble=ensemble, speed=speed)
    risks = sorted(risk(probe, d.s) for d in data)
    rank = math.ceil(quantile * len(risks))  # 1-indexed nearest rank
    return risks[rank - 1]
