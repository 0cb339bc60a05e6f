import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from model.arrivals import BernoulliArrivals, DiscreteArrivals, UniformArrivals, constant_arrivals
from model.battery import BatteryState
from model.streams import POLICY_STREAM, RngStream
from policies.policies import (CTP_RELATCH_AFTER_TX, CfpPolicy, CfpState, CtpState, CtpTransmitter, GreedyPolicy,
                               SimpleReceiver, ThresholdReceiver, cfp_bmax_ge_E_adapter, cfp_decide,
                               cfp_general_wrap, ctp_threshold, ctp_tx_decide, threshold_receiver_decide)
from util.errors import DegenerateMedianError, UnsupportedRegimeError


def coin():
    return RngStream(seed=3, stream_id=POLICY_STREAM)


@pytest.mark.parametrize('j,level,expected', [(0, 10.0, 5.0), (2, 10.0, 1.25), (2, 0.3, 0.3)])
def test_cfp_decide_examples(j, level, expected):
    state = CfpState(j=j, effective_b_max=10.0, p_eff=0.5)
    assert cfp_decide(state, BatteryState(level=level, capacity=10.0)) == pytest.approx(expected)


def test_cfp_state_validation():
    with pytest.raises(ValueError):
        CfpState(j=-1, effective_b_max=10.0, p_eff=0.5)
    with pytest.raises(ValueError):
        CfpState(j=0, effective_b_max=10.0, p_eff=0.0)


@pytest.mark.parametrize('energy,b_max,expected', [(5.0, 10.0, 5.0), (10.0, 10.0, 10.0), (1.0, 1000.0, 1.0)])
def test_cfp_adapter_examples(energy, b_max, expected):
    assert cfp_bmax_ge_E_adapter(energy, b_max) == expected


def test_cfp_adapter_clips_large_arrivals():
    assert cfp_bmax_ge_E_adapter(20.0, 10.0) == 10.0


def test_cfp_policy_matches_functional_rule():
    state = CfpState(j=0, effective_b_max=10.0, p_eff=0.3)
    policy = CfpPolicy(CfpState(j=0, effective_b_max=10.0, p_eff=0.3))
    battery = BatteryState(level=10.0, capacity=10.0)
    for epoch in [False, False, True, False, False, False]:
        assert policy.decide(1.0, battery) == pytest.approx(cfp_decide(state, battery))
        policy.advance(epoch)
        state.j = 0 if epoch else state.j + 1
    assert policy.state.j == state.j == 3


def test_cfp_spends_telescope_to_battery_size():
    p, b_max, slots = 0.5, 10.0, 30
    policy = CfpPolicy(CfpState(j=0, effective_b_max=b_max, p_eff=p))
    battery = BatteryState(level=b_max, capacity=b_max)
    spent = 0.0
    for _ in range(slots):
        spend = policy.decide(1.0, battery)
        battery.step(spend, 0.0)
        policy.advance(False)
        spent += spend
    assert spent == pytest.approx(b_max * (1.0 - (1.0 - p) ** slots))
    assert battery.level >= 0.0


def test_general_wrap_uniform():
    quantizer, state = cfp_general_wrap(UniformArrivals(lo=0.0, hi=10.0), 10.0)
    assert quantizer.delta == 5.0
    assert not quantizer.include_ties
    assert (state.p_eff, state.effective_b_max, state.j) == (0.5, 5.0, 0)
    np.testing.assert_array_equal(quantizer.quantize(np.array([4.0, 5.0, 6.0])), [0.0, 0.0, 5.0])


def test_general_wrap_constant_arrivals_use_ties():
    quantizer, _ = cfp_general_wrap(constant_arrivals(5.0), 10.0)
    stored = quantizer.quantize(np.full(1_000_000, 5.0))
    assert quantizer.storage_probability == 1.0
    assert np.mean(stored > 0) == 1.0


def test_general_wrap_errors():
    with pytest.raises(DegenerateMedianError):
        cfp_general_wrap(DiscreteArrivals(values=(0.0,), probs=(1.0,)), 10.0)
    with pytest.raises(UnsupportedRegimeError):
        cfp_general_wrap(UniformArrivals(lo=0.0, hi=10.0), 4.0)


def test_threshold_receiver_examples():
    gamma = math.log(2.0)
    charged = BatteryState(level=1.0, capacity=1.0)
    empty = BatteryState(level=0.0, capacity=1.0)
    assert threshold_receiver_decide(charged, 2 * gamma, gamma)
    assert not threshold_receiver_decide(empty, 10.0, gamma)
    assert not threshold_receiver_decide(charged, gamma, gamma)


def test_receiver_classes():
    charged = BatteryState(level=1.0, capacity=1.0)
    assert SimpleReceiver().decide(0.0, charged)
    assert not SimpleReceiver(on_cost=1.0).decide(5.0, BatteryState(level=0.5, capacity=1.0))
    assert ThresholdReceiver(gamma=1.0).decide(1.5, charged)
    assert not ThresholdReceiver(gamma=1.0).decide(0.5, charged)


def test_ctp_closed_gate_never_transmits():
    state = CtpState(gamma_star=0.0, coin_prob=0.0)
    battery = BatteryState(level=1.0, capacity=1.0)
    rng = coin()
    assert all(ctp_tx_decide(state, battery, 100.0, rng) == 0.0 for _ in range(100))
    assert not state.gate_open


def test_ctp_open_gate_rules():
    gamma = math.log(2.0)
    state = CtpState(gamma_star=gamma, coin_prob=1.0)
    full = BatteryState(level=1.0, capacity=1.0)
    assert ctp_tx_decide(state, full, 2.0, coin()) == 1.0
    assert state.gate_open
    assert ctp_tx_decide(state, BatteryState(level=0.0, capacity=1.0), 2.0, coin()) == 0.0
    assert ctp_tx_decide(state, full, 0.5 * gamma, coin()) == 0.0


def test_ctp_latch_once_stays_open_and_relatch_closes():
    full = BatteryState(level=1.0, capacity=1.0)
    latched = CtpState(gamma_star=0.5, coin_prob=1.0)
    ctp_tx_decide(latched, full, 2.0, coin())
    assert latched.gate_open
    relatch = CtpState(gamma_star=0.5, coin_prob=1.0, gate_mode=CTP_RELATCH_AFTER_TX)
    ctp_tx_decide(relatch, full, 2.0, coin())
    assert not relatch.gate_open


def test_ctp_state_validation():
    with pytest.raises(ValueError):
        CtpState(gamma_star=0.5, coin_prob=0.5, gate_mode='sometimes')
    with pytest.raises(ValueError):
        CtpState(gamma_star=0.5, coin_prob=1.5)


@given(st.floats(min_value=0.0, max_value=5.0), st.sampled_from([0.0, 1.0]))
def test_ctp_open_gate_mirrors_threshold_receiver(h, level):
    gamma = ctp_threshold(0.6, 0.4)
    state = CtpState(gamma_star=gamma, coin_prob=0.4, gate_open=True)
    battery = BatteryState(level=level, capacity=1.0)
    transmits = ctp_tx_decide(state, battery, h, coin()) == 1.0
    assert transmits == threshold_receiver_decide(battery, h, gamma)


def test_ctp_threshold():
    assert ctp_threshold(0.5, 0.3) == pytest.approx(-math.log(0.3))
    assert ctp_threshold(1.0, 1.0) == 0.0
    assert ctp_threshold(0.5, 0.0) == math.inf


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 32), st.sampled_from(['cfp', 'greedy', 'ctp']))
def test_policies_never_overdraw(seed, name):
    rng = np.random.default_rng(seed)
    n = 500
    gains = rng.exponential(1.0, n)
    if name == 'ctp':
        capacity = 1.0
        policy = CtpTransmitter(CtpState(gamma_star=0.7, coin_prob=0.5), RngStream(seed, POLICY_STREAM))
        arrivals = np.where(rng.random(n) < 0.5, 1.0, 0.0)
    else:
        capacity = 10.0
        arrivals = rng.uniform(0.0, 15.0, n) * (rng.random(n) < 0.5)
        policy = (CfpPolicy(CfpState(j=0, effective_b_max=capacity, p_eff=0.5)) if name == 'cfp'
                  else GreedyPolicy())
    stored = policy.store(arrivals)
    battery = BatteryState(level=0.0, capacity=capacity)
    for t in range(n):
        spend = policy.decide(gains[t], battery)
        battery.step(spend, stored[t], t)
        policy.advance(bool(stored[t] > 0))
        assert 0.0 <= battery.level <= capacity


def test_bernoulli_store_is_identity_without_quantizer():
    policy = CfpPolicy(CfpState(j=0, effective_b_max=10.0, p_eff=0.5))
    arrivals = BernoulliArrivals(p=0.5, energy=10.0).sample(RngStream(seed=1, stream_id=1), 10)
    np.testing.assert_array_equal(policy.store(arrivals), arrivals)
