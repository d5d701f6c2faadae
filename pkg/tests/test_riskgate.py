import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpiil.arena import Action2, State2, build_world, default_env_config
from dpiil.estimators import (
    DemoSample,
    EnsemblePolicy,
    SpeedEstimator,
    PrecisionMode,
    fit_policy,
    fit_speed,
    policy_variance,
    precision,
)
from dpiil.oracle import default_expert_config, generate_demos
from dpiil.riskgate import ControlMode, GateMode, RiskGate, calibrate_chi, decide, risk
from dpiil.tinynet import Mlp


def constant_net(out):
    return Mlp(
        sizes=(2, len(out)),
        weights=[np.zeros((2, len(out)))],
        biases=[np.array(out, dtype=np.float64)],
        x_mean=np.zeros(2),
        x_std=np.ones(2),
    )


def fixed_speed_est(mu, sigma):
    lv = math.log(sigma**2) if sigma > 0 else -10.0
    return SpeedEstimator(net=constant_net([mu, lv]))


def spread_ensemble(lo, hi):
    """Two constant members whose x-outputs differ: variance ((hi-lo)/2)^2 / 2."""
    return EnsemblePolicy([constant_net([lo, 0.0]), constant_net([hi, 0.0])])


@pytest.fixture(scope="module")
def fitted():
    world = build_world(default_env_config())
    data = generate_demos(world, default_expert_config(), 3, seed=0)
    ens = fit_policy(data, 5, seed=1)
    est = fit_speed(data, seed=1)
    return world, data, ens, est


class TestRisk:
    def test_product_of_precision_and_variance(self):
        # Pre = 2.0 (mu 0.5, sigma ~0), variance = 0.01 -> risk 0.02
        ens = spread_ensemble(0.0, 0.2)  # dim variances (0.01, 0) -> mean 0.005
        est = fixed_speed_est(0.5, 0.0)
        gate = RiskGate(GateMode.DPIIL_MU, chi=1.0, ensemble=ens, speed=est)
        s = State2(0, 0)
        assert policy_variance(ens, s) == pytest.approx(0.005)
        assert risk(gate, s) == pytest.approx(2.0 * 0.005)

    def test_zero_variance_zero_risk_all_modes(self):
        ens = EnsemblePolicy([constant_net([0.3, 0.1])] * 3)
        est = fixed_speed_est(0.5, 0.1)
        for mode in GateMode:
            gate = RiskGate(mode, chi=1.0, ensemble=ens, speed=est)
            assert risk(gate, State2(0, 0)) == pytest.approx(0.0, abs=1e-30)

    def test_ensemble_only_ignores_precision(self):
        ens = spread_ensemble(0.0, 0.2)
        est = fixed_speed_est(1e-9, 0.0)  # precision would explode
        gate = RiskGate(GateMode.ENSEMBLE_ONLY, chi=1.0, ensemble=ens, speed=est)
        assert risk(gate, State2(0, 0)) == pytest.approx(0.005)

    def test_factorization_against_estimator_outputs(self, fitted):
        world, data, ens, est = fitted
        rng = np.random.default_rng(3)
        for mode, pm in (
            (GateMode.DPIIL_MU, PrecisionMode.MU),
            (GateMode.DPIIL_UCB, PrecisionMode.UCB),
        ):
            gate = RiskGate(mode, chi=0.5, ensemble=ens, speed=est)
            for _ in range(50):
                s = State2(rng.uniform(-10, 10), rng.uniform(-10, 10))
                expected = precision(est, s, pm) * policy_variance(ens, s)
                assert risk(gate, s) == pytest.approx(expected, rel=1e-12)


class TestDecide:
    def test_above_threshold_expert(self):
        ens = spread_ensemble(0.0, 2.0)  # variance 0.5
        gate = RiskGate(GateMode.ENSEMBLE_ONLY, chi=0.25, ensemble=ens)
        assert decide(gate, State2(0, 0)) is ControlMode.EXPERT

    def test_exactly_at_threshold_auto(self):
        ens = spread_ensemble(0.0, 2.0)  # variance exactly 0.5
        gate = RiskGate(GateMode.ENSEMBLE_ONLY, chi=0.5, ensemble=ens)
        assert decide(gate, State2(0, 0)) is ControlMode.AUTO

    def test_zero_risk_auto_for_any_chi(self):
        ens = EnsemblePolicy([constant_net([0.1, 0.1])] * 2)
        for chi in (1e-9, 1e-3, 10.0):
            gate = RiskGate(GateMode.ENSEMBLE_ONLY, chi=chi, ensemble=ens)
            assert decide(gate, State2(0, 0)) is ControlMode.AUTO

    def test_nonpositive_chi_rejected(self):
        ens = spread_ensemble(0.0, 1.0)
        with pytest.raises(ValueError):
            RiskGate(GateMode.ENSEMBLE_ONLY, chi=0.0, ensemble=ens)

    def test_dpiil_mode_requires_speed_estimator(self):
        ens = spread_ensemble(0.0, 1.0)
        with pytest.raises(ValueError):
            RiskGate(GateMode.DPIIL_UCB, chi=1.0, ensemble=ens, speed=None)


class TestCalibration:
    def make_dataset_with_risks(self, risks):
        # quantile logic is tested against a monkeypatched risk that reads
        # the requested value off the state
        return [
            DemoSample(State2(float(i), 0.0), Action2(0, 0), 0.0)
            for i in range(len(risks))
        ]

    def test_nearest_rank_on_1_to_100(self, monkeypatch):
        import dpiil.riskgate as rg

        data = self.make_dataset_with_risks(range(100))
        ens = spread_ensemble(0.0, 1.0)
        monkeypatch.setattr(rg, "risk", lambda gate, s: s.x + 1.0)
        chi = rg.calibrate_chi(GateMode.ENSEMBLE_ONLY, ens, None, data, 0.80)
        assert chi == 80.0
        gated = sum(1 for d in data if d.s.x + 1.0 > chi)
        assert gated == 20

    def test_all_equal_risks_gate_nothing(self, monkeypatch):
        import dpiil.riskgate as rg

        data = self.make_dataset_with_risks([7.0] * 25)
        ens = spread_ensemble(0.0, 1.0)
        monkeypatch.setattr(rg, "risk", lambda gate, s: 7.0)
        chi = rg.calibrate_chi(GateMode.ENSEMBLE_ONLY, ens, None, data, 0.80)
        assert chi == 7.0
        assert sum(1 for _ in filter(lambda d: 7.0 > chi, data)) == 0

    def test_high_quantile_saturates_at_max(self, monkeypatch):
        import dpiil.riskgate as rg

        data = self.make_dataset_with_risks(range(10))
        ens = spread_ensemble(0.0, 1.0)
        monkeypatch.setattr(rg, "risk", lambda gate, s: s.x)
        chi = rg.calibrate_chi(GateMode.ENSEMBLE_ONLY, ens, None, data, 0.999)
        assert chi == 9.0

    def test_empty_dataset_rejected(self):
        ens = spread_ensemble(0.0, 1.0)
        with pytest.raises(ValueError):
            calibrate_chi(GateMode.ENSEMBLE_ONLY, ens, None, [], 0.8)

    def test_gated_fraction_near_twenty_percent(self, fitted):
        world, data, ens, est = fitted
        chi = calibrate_chi(GateMode.DPIIL_UCB, ens, est, data, 0.80)
        gate = RiskGate(GateMode.DPIIL_UCB, chi=chi, ensemble=ens, speed=est)
        gated = sum(decide(gate, d.s) is ControlMode.EXPERT for d in data)
        assert 0.18 <= gated / len(data) <= 0.22

    @settings(max_examples=60, deadline=None)
    @given(chi_lo=st.floats(1e-6, 1e2), factor=st.floats(1.0001, 100.0))
    def test_monotone_in_chi(self, fitted, chi_lo, factor):
        world, data, ens, est = fitted
        g1 = RiskGate(GateMode.DPIIL_MU, chi=chi_lo, ensemble=ens, speed=est)
        g2 = RiskGate(GateMode.DPIIL_MU, chi=chi_lo * factor, ensemble=ens, speed=est)
        for d in data[::17]:
            if decide(g2, d.s) is ControlMode.EXPERT:
                assert decide(g1, d.s) is ControlMode.EXPERT


class TestConvergenceDisposition:
    def test_tight_ensemble_runs_auto_on_probes(self):
        # once disagreement falls below chi / precision, control stays auto
        est = fixed_speed_est(0.04, 0.0)  # precision ~ 25 in a narrow zone
        pre = precision(est, State2(0, 0), PrecisionMode.MU)
        chi = 1e-3
        # members offset by delta give variance delta^2 / 8 < chi / pre
        delta = math.sqrt(chi / pre)
        ens = EnsemblePolicy(
            [constant_net([0.0, 0.0]), constant_net([delta, 0.0])]
        )
        gate = RiskGate(GateMode.DPIIL_MU, chi=chi, ensemble=ens, speed=est)
        var = policy_variance(ens, State2(0, 0))
        assert pre * var < chi
        for x in np.linspace(-5, 5, 11):
            assert decide(gate, State2(float(x), 0.0)) is ControlMode.AUTO
