import math
import os
from dataclasses import replace

import numpy as np
import pytest

import sim.simulator as simulator
from bounds.bounds import (cfp_general_lower_bound, cfp_lower_bound_bernoulli, rx_simple_lower_bound,
                           transmitter_upper_bound, unit_battery_rx_upper_bound)
from model.arrivals import BernoulliArrivals, UniformArrivals
from model.battery import BatteryState
from model.streams import CHANNEL_STREAM, RX_ARRIVAL_STREAM, TX_ARRIVAL_STREAM, ChannelModel, RngStream
from policies.policies import TransmitPolicy
from sim.simulator import (TRACE_COLUMNS, SimConfig, ThroughputEstimate, build_receive_policy, build_transmit_policy,
                           run_simulation, run_tx_only, run_tx_rx, simulate_replication)
from sim.statistics import (batch_means_stderr, estimate_energy_second_moment_bound, estimate_fkg_terms,
                            fkg_standard_error, replication_summary)
from util.errors import ConfigError, InsufficientDataError, NeutralityViolation

SMALL = SimConfig(n_slots=40_000, n_replications=6, seed=12345, workers=1)


def test_zero_arrivals_give_zero_throughput():
    estimate = run_tx_only(replace(SMALL, arrivals='bernoulli:p=0,e=10', n_slots=2_000))
    assert estimate.mean == 0.0
    assert estimate.extras['epoch_count'] == 0
    assert estimate.extras['mean_inter_epoch_time'] is None


def test_cfp_matches_renewal_value():
    estimate = run_tx_only(SMALL)
    analytic = cfp_lower_bound_bernoulli(0.5, 10.0)
    assert abs(estimate.mean - analytic) <= 4.0 * estimate.std_err + 2e-3
    assert estimate.n_effective == 6 * (40_000 - 400)


def test_inter_epoch_time_matches_arrival_rate():
    estimate = run_tx_only(replace(SMALL, arrivals='bernoulli:p=0.25,e=10'))
    assert estimate.extras['mean_inter_epoch_time'] == pytest.approx(4.0, rel=0.02)


@pytest.mark.parametrize('policy,arrivals', [('cfp', 'bernoulli:p=0.5,e=10'), ('greedy', 'bernoulli:p=0.5,e=10'),
                                             ('cfp', 'uniform:0,10'), ('greedy', 'uniform:0,10'),
                                             ('cfp', 'bernoulli:p=0.2,e=20')])
def test_throughput_below_upper_bound(policy, arrivals):
    cfg = replace(SMALL, policy=policy, arrivals=arrivals)
    estimate = run_tx_only(cfg)
    model = cfg.tx_arrival_model()
    if isinstance(model, BernoulliArrivals):
        model = BernoulliArrivals(p=model.p, energy=min(model.energy, cfg.b_max))
    assert estimate.mean <= transmitter_upper_bound(model) + 3.0 * estimate.std_err


def test_quantized_cfp_matches_analysis():
    estimate = run_tx_only(replace(SMALL, arrivals='uniform:0,10'))
    analytic = cfp_general_lower_bound(UniformArrivals(lo=0.0, hi=10.0), 10.0)
    assert abs(estimate.mean - analytic) <= 4.0 * estimate.std_err + 2e-3


def test_runs_are_deterministic():
    first = run_tx_only(SMALL)
    second = run_tx_only(SMALL)
    assert first.to_dict() == second.to_dict()


def test_worker_count_does_not_change_results():
    cfg = replace(SMALL, n_slots=5_000, n_replications=3)
    assert run_tx_only(cfg).to_dict() == run_tx_only(replace(cfg, workers=2)).to_dict()


def test_seed_changes_results():
    assert run_tx_only(SMALL).mean != run_tx_only(replace(SMALL, seed=54321)).mean


def test_receiver_without_arrivals_gives_zero():
    cfg = replace(SMALL, mode='tx_rx', rx_arrivals='bernoulli:p=0,e=1', n_slots=5_000)
    estimate = run_tx_rx(cfg)
    assert estimate.mean == 0.0
    assert estimate.extras['joint_on_fraction'] == 0.0


def test_simple_receiver_matches_analysis():
    cfg = replace(SMALL, mode='tx_rx', receiver='simple')
    estimate = run_tx_rx(cfg)
    assert cfg.prefactor == 0.5
    analytic = rx_simple_lower_bound(0.5, 0.5, 10.0)
    assert abs(estimate.mean - analytic) <= 4.0 * estimate.std_err + 2e-3


def ctp_config(**overrides):
    cfg = replace(SMALL, mode='tx_rx', policy='ctp', arrivals='bernoulli:p=0.5,e=1',
                  rx_arrivals='bernoulli:p=0.5,e=1', b_max=1.0, rx_b_max=1.0)
    return replace(cfg, **overrides)


def test_ctp_reaches_half_of_upper_bound():
    estimate = run_tx_rx(ctp_config())
    v2, gamma = unit_battery_rx_upper_bound(0.5, 0.5)
    assert estimate.extras['gamma'] == pytest.approx(gamma)
    assert estimate.mean >= 0.5 * v2 - 3.0 * estimate.std_err
    assert estimate.extras['above_threshold_fraction'] == pytest.approx(0.5, abs=0.01)
    assert 0.0 < estimate.extras['joint_on_fraction'] <= 0.5


def test_ctp_relatch_mode_runs():
    latched = run_tx_rx(ctp_config(n_slots=5_000))
    relatched = run_tx_rx(ctp_config(n_slots=5_000, ctp_gate='relatch_after_tx'))
    assert relatched.mean <= latched.mean + 3.0 * (latched.std_err + relatched.std_err) + 1e-2


@pytest.mark.parametrize('gate', ['latch_once', 'relatch_after_tx'])
def test_inlined_ctp_loop_matches_policy_loop(gate):
    cfg = ctp_config(n_slots=5_000, ctp_gate=gate)
    h = ChannelModel().sample(RngStream(cfg.seed, CHANNEL_STREAM), cfg.n_slots).tolist()
    tx = np.asarray(cfg.tx_arrival_model().sample(RngStream(cfg.seed, TX_ARRIVAL_STREAM), cfg.n_slots)).tolist()
    rx = np.asarray(cfg.rx_arrival_model().sample(RngStream(cfg.seed, RX_ARRIVAL_STREAM), cfg.n_slots)).tolist()
    inlined = simulator._ctp_slots(build_transmit_policy(cfg, 0), build_receive_policy(cfg), h, tx, rx, cfg, True)
    generic = simulator._policy_slots(build_transmit_policy(cfg, 0), build_receive_policy(cfg), h, tx, rx, cfg,
                                      True, 0)
    assert inlined == generic
    assert any(s > 0 for s in inlined[0])


def test_ctp_above_threshold_fraction_matches_channel_tail():
    cfg = ctp_config()
    estimate = run_tx_rx(cfg)
    expected = ChannelModel().exceedance(cfg.threshold())
    sigma = math.sqrt(expected * (1.0 - expected) / estimate.n_effective)
    assert abs(estimate.extras['above_threshold_fraction'] - expected) <= 4.0 * sigma


def test_zero_workers_means_one_per_cpu():
    assert replace(SMALL, workers=0).n_workers == (os.cpu_count() or 1)
    assert replace(SMALL, workers=3).n_workers == 3
    cfg = replace(SMALL, n_slots=5_000, n_replications=3)
    assert run_tx_only(replace(cfg, workers=0)).to_dict() == run_tx_only(cfg).to_dict()


@pytest.mark.parametrize('overrides', [
    {'policy': 'ctp'},
    {'mode': 'tx_rx', 'policy': 'ctp'},
    {'n_slots': 0},
    {'warmup_slots': 40_000},
    {'arrivals': 'poisson:3'},
    {'rate_prefactor': 'third'},
    {'rx_on_cost': 2.0},
    {'n_replications': 0},
    {'workers': -1},
])
def test_invalid_configs(overrides):
    with pytest.raises(ConfigError):
        replace(SMALL, **overrides)


def test_mode_mismatch():
    with pytest.raises(ConfigError):
        run_tx_only(replace(SMALL, mode='tx_rx'))
    with pytest.raises(ConfigError):
        run_tx_rx(SMALL)


def test_prefactor_resolution():
    assert SMALL.prefactor == 0.5
    assert ctp_config().prefactor == 1.0
    assert replace(SMALL, rate_prefactor='one').prefactor == 1.0


def test_trace_columns_and_feasibility():
    estimate = run_simulation(replace(SMALL, n_slots=3_000, n_replications=2, keep_trace=True))
    trace = estimate.trace
    assert list(trace.columns) == TRACE_COLUMNS
    assert len(trace) == 3_000 - 30
    assert trace['slot'].iloc[0] == 30
    assert (trace['spend'] <= trace['battery_tx'] + 1e-12).all()
    assert (trace['battery_tx'] <= 10.0).all()
    assert trace['battery_rx'].isna().all()
    assert 'trace' not in estimate.to_dict()


class Overspender(TransmitPolicy):
    def decide(self, h: float, battery: BatteryState) -> float:
        return battery.level + 1.0


def test_overdraw_aborts_with_trace_tail(monkeypatch):
    monkeypatch.setattr(simulator, 'build_transmit_policy', lambda cfg, replication: Overspender())
    with pytest.raises(NeutralityViolation) as excinfo:
        simulate_replication(replace(SMALL, n_slots=100), 0)
    assert excinfo.value.slot == 0
    assert excinfo.value.node == 'tx'


def test_fkg_terms_constant_trace():
    lhs, rhs = estimate_fkg_terms(np.full(1_000, 2.5), lag=1)
    assert lhs == pytest.approx(6.25)
    assert rhs == pytest.approx(6.25)


def test_fkg_terms_independent_trace():
    spend = np.random.default_rng(0).uniform(0.0, 1.0, 200_000)
    lhs, rhs = estimate_fkg_terms(spend, lag=3)
    assert abs(lhs - rhs) <= 4.0 * fkg_standard_error(spend, 3)


def test_fkg_direction_on_cfp_trace():
    estimate = run_tx_only(replace(SMALL, keep_trace=True))
    spend = estimate.trace['spend'].to_numpy()
    for lag in (1, 5):
        lhs, rhs = estimate_fkg_terms(spend, lag)
        assert lhs >= rhs - 3.0 * fkg_standard_error(spend, lag)
    assert estimate.extras['fkg_lhs'] >= estimate.extras['fkg_rhs'] - 3.0 * estimate.extras['fkg_sigma']


def test_fkg_needs_enough_data():
    with pytest.raises(InsufficientDataError):
        estimate_fkg_terms(np.ones(49), lag=5)
    with pytest.raises(ValueError):
        estimate_fkg_terms(np.ones(100), lag=0)


def test_energy_second_moment_bound():
    arrivals = BernoulliArrivals(p=0.5, energy=10.0)
    estimate = run_tx_only(replace(SMALL, keep_trace=True))
    assert estimate_energy_second_moment_bound(estimate.trace['spend'], arrivals)
    assert estimate_energy_second_moment_bound(np.zeros(1_000), arrivals)
    adversarial = np.full(1_000, arrivals.second_moment() + 1.0)
    assert not estimate_energy_second_moment_bound(adversarial, arrivals)


def test_replication_summary():
    mean, std_err = replication_summary([1.0, 2.0, 3.0])
    assert mean == 2.0
    assert std_err == pytest.approx(1.0 / math.sqrt(3.0))
    assert replication_summary([4.0]) == (4.0, 0.0)
    with pytest.raises(InsufficientDataError):
        replication_summary([])


def test_batch_means_needs_two_per_batch():
    with pytest.raises(InsufficientDataError):
        batch_means_stderr(np.ones(10), n_batches=20)


def test_estimate_invariants():
    with pytest.raises(ValueError):
        ThroughputEstimate(mean=1.0, std_err=-0.1, n_effective=10)
    with pytest.raises(ValueError):
        ThroughputEstimate(mean=1.0, std_err=0.1, n_effective=10, extras={'joint_on_fraction': 1.5})


@pytest.mark.slow
def test_acceptance_cfp_simulation():
    cfg = SimConfig(n_slots=1_000_000, n_replications=20, keep_trace=True)
    estimate = run_tx_only(cfg)
    analytic = cfp_lower_bound_bernoulli(0.5, 10.0)
    assert abs(estimate.mean - analytic) <= 3.0 * estimate.std_err
    assert estimate.std_err <= 0.01
    spend = estimate.trace['spend'].to_numpy()
    for lag in (1, 5):
        lhs, rhs = estimate_fkg_terms(spend, lag)
        assert lhs >= rhs - 3.0 * fkg_standard_error(spend, lag)
    assert run_tx_only(cfg).to_dict() == estimate.to_dict()


@pytest.mark.slow
def test_acceptance_ctp_half_ratio():
    cfg = ctp_config(n_slots=1_000_000, n_replications=20)
    estimate = run_tx_rx(cfg)
    v2, _ = unit_battery_rx_upper_bound(0.5, 0.5)
    assert estimate.mean >= 0.5 * v2 - 3.0 * estimate.std_err
    sigma = math.sqrt(0.25 / estimate.n_effective)
    assert abs(estimate.extras['above_threshold_fraction'] - 0.5) <= 3.0 * sigma
