import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snla.environment import (
    Action,
    ActionBoundsError,
    ConfigError,
    EnvConfig,
    EnvStateError,
    InterfererState,
    SubnetworkEnv,
    action_from_unit,
    action_to_unit,
    advance_traffic_and_fading,
    aggregate_interference,
    energy_efficiency_score,
)
from snla.fblmath import LinkBudget, outage_probability


def interferer(p=1.0, gain=1.0, remaining=5, countdown=5):
    return InterfererState(mean_inr_db=10 * math.log10(p), tx_power_linear=p,
                           fading_gain=gain, remaining_slots=remaining,
                           coherence_countdown=countdown)


def random_rollout(cfg, seed, steps, action_seed=7):
    env = SubnetworkEnv(cfg)
    obs = [env.reset(seed)]
    rng = np.random.default_rng(action_seed)
    outs = []
    for _ in range(steps):
        out = env.step(action_from_unit(rng.uniform(-1, 1, 2), cfg))
        outs.append(out)
        obs.append(out.next_state_sinr_db)
    return obs, outs


# --- configuration -------------------------------------------------------

def test_defaults_match_scenario_table():
    cfg = EnvConfig()
    assert (cfg.max_tx_snr_db, cfg.max_blocklength, cfg.info_bits) == (20.0, 1000, 50)
    assert (cfg.n_interferers, cfg.activation_factor, cfg.message_duration) == (5, 1.0, 10)
    assert (cfg.mean_inr_db_low, cfg.mean_inr_db_high) == (-10.0, 5.0)
    assert (cfg.outage_threshold, cfg.availability_target, cfg.consec_threshold) == (1e-5, 0.98, 2)
    assert (cfg.weight_outage, cfg.weight_ee) == (0.3, 0.7)


@pytest.mark.parametrize("field,value", [
    ("n_interferers", -1),
    ("activation_factor", 1.5),
    ("message_duration", 0),
    ("min_blocklength", 0),
    ("info_bits", 0),
    ("outage_threshold", 0.0),
    ("coherence_slots", 0),
    ("weight_outage", -0.1),
    ("inr_mode", "nope"),
    ("ee_normalization", "watts"),
    ("n_interferers", 2.5),
    ("max_tx_snr_db", math.nan),
])
def test_bad_config_names_field(field, value):
    with pytest.raises(ConfigError) as info:
        EnvConfig(**{field: value})
    assert info.value.field == field


def test_weights_must_sum_to_one():
    with pytest.raises(ConfigError) as info:
        EnvConfig(weight_outage=0.5, weight_ee=0.7)
    assert info.value.field == "weight_ee"


def test_inverted_power_box_rejected():
    with pytest.raises(ConfigError) as info:
        EnvConfig(min_tx_snr_db=25.0)
    assert info.value.field == "min_tx_snr_db"


def test_with_weight_keeps_other_fields():
    cfg = EnvConfig(n_interferers=3).with_weight(0.8)
    assert cfg.weight_outage == 0.8 and cfg.weight_ee == pytest.approx(0.2)
    assert cfg.n_interferers == 3


# --- reset / observe -----------------------------------------------------

def test_reset_is_deterministic():
    a, b = SubnetworkEnv(EnvConfig()), SubnetworkEnv(EnvConfig())
    assert a.reset(11) == b.reset(11)
    assert a.interferers == b.interferers
    assert a.desired_gain == b.desired_gain


def test_no_interferers_observation_is_reference_snr_times_gain():
    env = SubnetworkEnv(EnvConfig(n_interferers=0))
    obs = env.reset(3)
    assert obs == pytest.approx(10 * math.log10(100.0 * env.desired_gain), abs=1e-12)


def test_scenario_reset_ranges():
    env = SubnetworkEnv(EnvConfig())
    for seed in range(50):
        obs = env.reset(seed)
        assert math.isfinite(obs)
        assert obs <= 20.0 + 10 * math.log10(env.desired_gain) + 1e-9
        assert -10.0 - 1e-9 <= env.mean_inr_db <= 5.0 + 1e-9


def test_per_interferer_mode_draws_each_inr_in_range():
    env = SubnetworkEnv(EnvConfig(inr_mode="per_interferer"))
    env.reset(5)
    inrs = [s.mean_inr_db for s in env.interferers]
    assert all(-10.0 <= x <= 5.0 for x in inrs)
    assert len(set(inrs)) == 5
    for s in env.interferers:
        assert s.tx_power_linear == pytest.approx(10 ** (s.mean_inr_db / 10))


def test_observation_clean_channel_is_20db():
    env = SubnetworkEnv(EnvConfig(n_interferers=0))
    env.reset(0)
    env.desired_gain = 1.0
    assert env.observe() == pytest.approx(20.0, abs=1e-12)


def test_observation_with_unit_interference():
    env = SubnetworkEnv(EnvConfig(n_interferers=1))
    env.reset(0)
    env.interferers = [interferer(p=1.0, gain=1.0)]
    env.desired_gain = 1.0
    # 10 log10(100 / 2)
    assert env.observe() == pytest.approx(16.989700043360187, abs=1e-12)


def test_observation_clipped():
    env = SubnetworkEnv(EnvConfig(n_interferers=0))
    env.reset(0)
    env.desired_gain = 1e-12
    assert env.observe() == -40.0
    env.desired_gain = 1e12
    assert env.observe() == 60.0


def test_observation_ignores_previous_action():
    cfg = EnvConfig()
    a, b = SubnetworkEnv(cfg), SubnetworkEnv(cfg)
    a.reset(9)
    b.reset(9)
    oa = a.step(Action.max_resources(cfg)).next_state_sinr_db
    ob = b.step(Action.min_resources(cfg)).next_state_sinr_db
    assert oa == ob


def test_step_before_reset():
    with pytest.raises(EnvStateError):
        SubnetworkEnv(EnvConfig()).step(Action(10.0, 100))


@pytest.mark.parametrize("action", [Action(0.5, 100), Action(101.0, 100),
                                    Action(10.0, 49), Action(10.0, 1001),
                                    Action(10.0, 100.5), Action(math.nan, 100)])
def test_out_of_box_action_rejected(action):
    env = SubnetworkEnv(EnvConfig())
    env.reset(0)
    with pytest.raises(ActionBoundsError):
        env.step(action)


# --- interference and traffic --------------------------------------------

def test_aggregate_interference_examples():
    assert aggregate_interference([interferer(remaining=0), interferer(remaining=0)]) == 0.0
    assert aggregate_interference([interferer(p=2.0, gain=0.5)]) == 1.0
    assert aggregate_interference([]) == 0.0


def test_aggregate_interference_monte_carlo_mean():
    inr_db = np.linspace(-10, 5, 5)
    cfg = EnvConfig(coherence_slots=1)
    states = [interferer(p=10 ** (x / 10)) for x in inr_db]
    rng = np.random.default_rng(0)
    total = 0.0
    n = 100_000
    for _ in range(n):
        advance_traffic_and_fading(states, cfg, rng)
        total += aggregate_interference(states)
    expected = float(np.sum(10 ** (inr_db / 10)))
    assert total / n == pytest.approx(expected, rel=0.02)


def test_always_on_when_activation_is_one():
    cfg = EnvConfig(activation_factor=1.0, message_duration=10)
    env = SubnetworkEnv(cfg)
    env.reset(4)
    for _ in range(300):
        assert all(s.active for s in env.interferers)
        env.step(Action.max_resources(cfg))


def test_idle_forever_when_activation_is_zero():
    cfg = EnvConfig(activation_factor=0.0)
    env = SubnetworkEnv(cfg)
    env.reset(4)
    for _ in range(30):
        env.step(Action.max_resources(cfg))
    for _ in range(200):
        assert not any(s.active for s in env.interferers)
        assert env.interference == 0.0
        env.step(Action.max_resources(cfg))


def renewal_active_fraction(mu, length, slots, seed):
    """Independent scalar simulation of one interferer's on/off process.

    Each slot: a running message consumes one slot; if nothing is left to
    send, a coin with bias ``mu`` decides whether a fresh message starts in
    this very slot.
    """
    rng = np.random.default_rng(seed)
    left = 0
    on = 0
    for coin in rng.random(slots):
        left = max(left - 1, 0)
        if left == 0 and coin < mu:
            left = length
        on += left > 0
    return on / slots


def test_half_activation_renewal_fraction():
    mu, length, slots = 0.5, 10, 100_000
    cfg = EnvConfig(activation_factor=mu, message_duration=length, n_interferers=1)
    states = [interferer(remaining=0)]
    rng = np.random.default_rng(1)
    on = 0
    for _ in range(slots):
        advance_traffic_and_fading(states, cfg, rng)
        on += states[0].active
    oracle = renewal_active_fraction(mu, length, slots, seed=2)
    analytic = length * mu / (length * mu + 1 - mu)
    assert on / slots == pytest.approx(oracle, rel=0.02)
    assert on / slots == pytest.approx(analytic, rel=0.02)


def test_fading_redrawn_only_on_countdown_expiry():
    cfg = EnvConfig(coherence_slots=4)
    states = [interferer(gain=0.123, countdown=3)]
    rng = np.random.default_rng(0)
    advance_traffic_and_fading(states, cfg, rng)
    advance_traffic_and_fading(states, cfg, rng)
    assert states[0].fading_gain == 0.123
    advance_traffic_and_fading(states, cfg, rng)
    assert states[0].fading_gain != 0.123
    assert states[0].coherence_countdown == 4


# --- step, reward, counters ----------------------------------------------

def test_max_resources_reward_has_no_efficiency_term():
    cfg = EnvConfig()
    env = SubnetworkEnv(cfg)
    env.reset(0)
    for _ in range(200):
        out = env.step(Action.max_resources(cfg))
        assert out.reward == pytest.approx(-cfg.weight_outage * out.violation_flag, abs=1e-15)


@pytest.mark.parametrize("mode", ["energy", "bits_per_energy"])
def test_min_resources_reward_endpoint(mode):
    cfg = EnvConfig(ee_normalization=mode)
    env = SubnetworkEnv(cfg)
    env.reset(0)
    for _ in range(200):
        out = env.step(Action.min_resources(cfg))
        assert out.reward == pytest.approx(cfg.weight_ee - cfg.weight_outage * out.violation_flag)


def test_efficiency_score_modes():
    cfg = EnvConfig()
    mid = 0.5 * (cfg.min_energy + cfg.max_energy)
    assert energy_efficiency_score(mid, cfg) == pytest.approx(0.5)
    cfg2 = EnvConfig(ee_normalization="bits_per_energy")
    b = cfg2.info_bits
    expected = (b / mid - b / cfg2.max_energy) / (b / cfg2.min_energy - b / cfg2.max_energy)
    assert energy_efficiency_score(mid, cfg2) == pytest.approx(expected)


def test_forced_outages_count_and_violate():
    cfg = EnvConfig(n_interferers=0, consec_threshold=2)
    env = SubnetworkEnv(cfg)
    env.reset(0)
    env.desired_gain = 1e-4
    env.desired_countdown = 100
    outs = [env.step(Action.min_resources(cfg)) for _ in range(3)]
    assert [o.outage_flag for o in outs] == [True] * 3
    assert [o.consec_count for o in outs] == [1, 2, 3]
    assert [o.violation_flag for o in outs] == [False, False, True]


def trailing_run(flags):
    n = 0
    for f in reversed(flags):
        if not f:
            break
        n += 1
    return n


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_counter_law_and_flag_consistency(seed):
    cfg = EnvConfig(n_interferers=5, inr_mode="per_interferer")
    _, outs = random_rollout(cfg, seed, 500)
    flags = []
    for o in outs:
        flags.append(o.outage_flag)
        assert o.outage_flag == (o.outage_prob > cfg.outage_threshold)
        assert o.consec_count == trailing_run(flags)
        assert o.violation_flag == (o.consec_count > cfg.consec_threshold)
        assert -cfg.weight_outage <= o.reward <= cfg.weight_ee
    assert any(flags) and not all(flags)


def test_energy_accounting():
    cfg = EnvConfig()
    env = SubnetworkEnv(cfg)
    env.reset(1)
    rng = np.random.default_rng(3)
    total, direct = 0.0, 0.0
    for _ in range(500):
        a = action_from_unit(rng.uniform(-1, 1, 2), cfg)
        total += env.step(a).scaled_energy
        direct += a.tx_snr_linear * a.blocklength
    assert total == direct


def test_rollout_bitwise_deterministic():
    cfg = EnvConfig()
    assert random_rollout(cfg, 21, 300) == random_rollout(cfg, 21, 300)


def test_clean_link_outage_is_fbl_value():
    cfg = EnvConfig(n_interferers=0, coherence_slots=10_000)
    env = SubnetworkEnv(cfg)
    env.reset(2)
    g = env.desired_gain
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = action_from_unit(rng.uniform(-1, 1, 2), cfg)
        expected = outage_probability(LinkBudget(a.tx_snr_linear * g, cfg.info_bits, a.blocklength))
        assert env.step(a).outage_prob == expected


@settings(max_examples=200, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_unit_action_roundtrip(u0, u1):
    cfg = EnvConfig()
    a = action_from_unit([u0, u1], cfg)
    a.check(cfg)
    back = action_to_unit(a, cfg)
    assert back[0] == pytest.approx(u0, abs=1e-9)
    # blocklength rounding moves by at most half a channel use
    assert abs(back[1] - u1) <= 1.0 / (cfg.max_blocklength - cfg.min_blocklength) + 1e-12


def test_unit_corners_hit_box_corners():
    cfg = EnvConfig()
    assert action_from_unit([1, 1], cfg) == Action.max_resources(cfg)
    lo = action_from_unit([-1, -1], cfg)
    assert lo.tx_snr_linear == pytest.approx(cfg.min_tx_snr) and lo.blocklength == cfg.min_blocklength
    mid = action_from_unit([0, 0], cfg)
    assert mid.tx_snr_linear == pytest.approx(10.0) and mid.blocklength == 525
