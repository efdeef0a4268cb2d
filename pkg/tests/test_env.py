"""Environment behavior: spaces, episode loop, rewards, parity, exclusion."""
import numpy as np
import pytest

from stockflow import EnvConfig, SimEnv, load_model, make_env, simulate
from stockflow import models as bundled
from stockflow.env.rewards import compile_computed_state
from stockflow.errors import ActionError, ConfigError, EnvError


def ev_env(**overrides):
    config = EnvConfig.from_file(bundled.config_path("ev_adoption_env"))
    for key, value in overrides.items():
        setattr(config, key, value)
    return SimEnv(config)


def noop_action(env):
    action = np.zeros(env.flat_space.width)
    for i, label in enumerate(env.flat_space.labels):
        if label.endswith(".gate"):
            action[i] = -1.0
    return action


# --- construction ------------------------------------------------------------


def test_make_env_from_path_and_dict():
    env = make_env(bundled.config_path("bathtub_env"))
    assert env.episode_steps == 20
    env = make_env({"model": "builtin:decay", "actionables": ["k"]})
    assert env.action_specs[0].variable == "k"


def test_ev_composite_space_shape():
    env = ev_env()
    kinds = [s.kind for s in env.action_specs]
    assert kinds.count("continuous") == 6
    assert kinds.count("discrete") == 1
    assert kinds.count("categorical") == 2
    assert env.flat_space.width == 18  # parameterized doubles each of the 9
    assert env.episode_steps == 1000


def test_default_observables_are_all_non_actionables():
    env = ev_env()
    assert len(env.observation_names) == len(env.model.variables) - 9
    assert set(env.observation_names).isdisjoint(
        s.variable for s in env.action_specs)
    assert list(env.observation_names) == sorted(env.observation_names)


def test_explicit_observables_respected_and_checked():
    env = ev_env(observables=["ec_in_use", "pc_in_use"])
    assert env.observation_names == ("ec_in_use", "pc_in_use")
    with pytest.raises(ConfigError, match="excluded from observations"):
        ev_env(observables=["vat"])
    with pytest.raises(ConfigError, match="not in model"):
        ev_env(observables=["ghost"])


def test_env_step_must_divide_horizon():
    with pytest.raises(ConfigError, match="multiple of dt"):
        make_env({"model": "builtin:decay", "env_step": 0.15})
    with pytest.raises(ConfigError, match="positive integer multiple"):
        make_env({"model": "builtin:decay", "env_step": 0.05})


def test_unknown_config_key_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        EnvConfig.from_json('{"model": "builtin:decay", "tpyo": 1}')


def test_observation_fixed_order_and_length():
    env = ev_env()
    obs = env.reset(episode=0)
    assert obs.shape == (len(env.observation_names),)
    keyed = env.keyed_observation()
    assert list(keyed) == list(env.observation_names)
    transition = env.step(noop_action(env))
    assert transition.observation.shape == obs.shape


# --- reset and seeding -------------------------------------------------------


def test_reset_deterministic_per_episode_index():
    env = ev_env()
    a = env.reset(episode=3)
    b = env.reset(episode=3)
    assert np.array_equal(a, b)
    assert env.simulation.seed == env.config.seed + 3


def test_reset_advances_episode_by_default():
    env = ev_env()
    env.reset()
    assert env.episode_index == 0
    env.reset()
    assert env.episode_index == 1


def test_reset_restarts_history():
    env = make_env(bundled.config_path("bathtub_env"))
    env.reset(episode=0)
    assert env.t == 0.0
    assert len(env.simulation.history) == 1


def test_reward_baseline_set_at_reset():
    env = ev_env()
    env.reset(episode=0)
    share0 = 5000.0 / (5000.0 + 2000000.0) * 100.0
    assert env.reward_baseline == pytest.approx(share0, rel=1e-12)


# --- stepping ----------------------------------------------------------------


def test_step_before_reset_errors():
    env = ev_env()
    with pytest.raises(EnvError, match="reset"):
        env.step(noop_action(env))


def test_episode_runs_exactly_episode_steps_then_done():
    env = make_env(bundled.config_path("bathtub_env"))
    env.reset(episode=0)
    action = noop_action(env)
    steps = 0
    done = False
    while not done:
        transition = env.step(action)
        done = transition.done
        steps += 1
        assert steps <= env.episode_steps
    assert steps == env.episode_steps
    with pytest.raises(EnvError, match="done"):
        env.step(action)


def test_out_of_range_flat_action_rejected_not_clipped():
    env = make_env(bundled.config_path("bathtub_env"))
    env.reset(episode=0)
    bad = noop_action(env)
    bad[0] = 2.0
    with pytest.raises(ActionError, match=r"outside \[-1, 1\]"):
        env.step(bad)


def test_out_of_range_composite_action_names_variable_and_bound():
    env = make_env({
        "model": "builtin:bathtub",
        "actionables": ["faucet_setting"],
        "flatten_spaces": False,
        "env_step": 2.0,
    })
    env.reset(episode=0)
    with pytest.raises(ActionError) as err:
        env.step({"faucet_setting": 11.0})
    assert "faucet_setting" in str(err.value)
    assert "10" in str(err.value)


def test_composite_dict_action_drives_injection():
    env = make_env({
        "model": "builtin:bathtub",
        "actionables": ["faucet_setting"],
        "flatten_spaces": False,
        "env_step": 2.0,
    })
    env.reset(episode=0)
    transition = env.step({"faucet_setting": 4.0})
    assert transition.info["injections"] == {"faucet_setting": 4.0}
    assert env.simulation.values["faucet_flow"] == 4.0


def test_info_carries_keyed_view_and_trajectory_slice():
    env = make_env(bundled.config_path("bathtub_env"))
    env.reset(episode=0)
    transition = env.step(noop_action(env))
    info = transition.info
    assert info["time"] == pytest.approx(2.0)
    assert set(info["keyed_observation"]) == set(env.observation_names)
    # env_step 2.0 over dt 0.5: boundary row + 4 new rows
    assert len(info["trajectory"]["rows"]) == 5
    assert info["trajectory"]["columns"][0] == "time"


# --- rewards -----------------------------------------------------------------


def test_scalar_delta_simple_increment():
    # a pure accumulator filling at 2/unit: target goes 10 -> 12 -> reward 2
    from stockflow import parse_xmile

    result = parse_xmile(
        '<xmile version="1.0">'
        "<sim_specs><start>0</start><stop>10</stop><dt>1</dt></sim_specs>"
        '<model><variables>'
        '<stock name="s"><eqn>10</eqn><inflow>f</inflow></stock>'
        '<flow name="f"><eqn>rate</eqn></flow>'
        '<aux name="rate"><eqn>2</eqn><range min="0" max="5"/></aux>'
        "</variables></model></xmile>")
    assert result.ok
    config = EnvConfig(
        model=result.model,
        env_step=1.0,
        actionables=["rate"],
        reward={"kind": "scalar_delta", "target": "s"},
    )
    env = SimEnv(config)
    env.reset(episode=0)
    transition = env.step(env.flat_space.flatten({"rate": 2.0}))
    assert transition.reward == 2.0


def test_binarized_delta_is_zero_or_one():
    env = make_env({
        "model": "builtin:bathtub",
        "env_step": 2.0,
        "actionables": ["faucet_setting"],
        "parameterize_action_space": True,
        "reward": {"kind": "binarized_delta", "target": "water_level",
                    "direction": "increase"},
    })
    env.reset(episode=0)
    # water drains from 20 with the faucet off: delta < 0 every step
    done = False
    while not done:
        transition = env.step(noop_action(env))
        assert transition.reward == 0.0
        done = transition.done

    env.reset(episode=0)
    fill = env.flat_space.flatten({"faucet_setting": (1, 10.0)})
    transition = env.step(fill)
    assert transition.reward == 1.0


def test_binarized_decrease_direction():
    env = make_env({
        "model": "builtin:bathtub",
        "env_step": 2.0,
        "actionables": ["faucet_setting"],
        "parameterize_action_space": True,
        "reward": {"kind": "binarized_delta", "target": "water_level",
                    "direction": "decrease"},
    })
    env.reset(episode=0)
    transition = env.step(noop_action(env))
    assert transition.reward == 1.0


def test_ev_share_computed_state_arithmetic():
    fn = compile_computed_state(
        "ec_share", "SAFEDIV(ec_in_use, ec_in_use + pc_in_use, 0) * 100")
    assert fn({"ec_in_use": 100000.0, "pc_in_use": 300000.0}) == 25.0
    assert fn({"ec_in_use": 0.0, "pc_in_use": 0.0}) == 0.0


def test_delta_from_25_to_26_5_is_1_5():
    from stockflow.env.rewards import RewardTracker, ScalarDelta, TargetResolver

    model = load_model(bundled.model_path("ev_adoption"))
    resolver = TargetResolver(
        model, {"ec_share": "SAFEDIV(ec_in_use, ec_in_use + pc_in_use, 0) * 100"})
    tracker = RewardTracker(ScalarDelta("ec_share"), resolver)
    tracker.reset({"ec_in_use": 100000.0, "pc_in_use": 300000.0})
    assert tracker.baseline == 25.0
    reward = tracker.step({"ec_in_use": 106000.0, "pc_in_use": 294000.0})
    assert reward == pytest.approx(1.5, abs=1e-12)


def test_scalar_delta_return_telescopes():
    env = make_env(bundled.config_path("ev_adoption_train"))
    env.reset(episode=5)
    rng = np.random.default_rng(0)
    total = 0.0
    done = False
    while not done:
        transition = env.step(rng.uniform(-1, 1, env.flat_space.width))
        total += transition.reward
        done = transition.done
    values = env.simulation.values
    share_T = values["ec_in_use"] / (values["ec_in_use"] + values["pc_in_use"]) * 100
    share_0 = 5000.0 / 2005000.0 * 100
    assert total == pytest.approx(share_T - share_0, abs=1e-9)


def test_unknown_reward_target_is_config_error():
    with pytest.raises(ConfigError, match="neither a model variable"):
        make_env({
            "model": "builtin:decay",
            "actionables": ["k"],
            "reward": {"kind": "scalar_delta", "target": "ghost"},
        })


def test_computed_state_cannot_shadow_model_variable():
    with pytest.raises(ConfigError, match="shadows"):
        make_env({
            "model": "builtin:decay",
            "actionables": ["k"],
            "computed_states": {"level": "level * 2"},
        })


def test_custom_reward_callable():
    from stockflow.env.rewards import CustomReward

    config = EnvConfig(
        model="builtin:bathtub",
        env_step=2.0,
        actionables=["faucet_setting"],
        parameterize_action_space=True,
        reward=CustomReward(lambda prev, cur: cur["water_level"] - prev["water_level"]),
    )
    env = SimEnv(config)
    env.reset(episode=0)
    transition = env.step(noop_action(env))
    assert transition.reward < 0.0  # draining


# --- the no-intervention parity harness --------------------------------------


def test_noop_parameterized_episode_matches_pure_simulation_bitwise():
    env = ev_env()
    env.reset(episode=0)
    action = noop_action(env)
    done = False
    while not done:
        done = env.step(action).done
    pure = simulate(load_model(bundled.model_path("ev_adoption")), seed=env.config.seed)
    assert env.simulation.history == pure.history
    assert env.simulation.csv_text() == pure.csv_text()


def test_gated_on_midpoint_injects_midrange_value():
    env = ev_env()
    env.reset(episode=0)
    action = noop_action(env)
    idx = env.flat_space.labels.index("gov_policy_on_taxes.gate")
    action[idx] = 1.0
    action[idx + 1] = 0.0
    transition = env.step(action)
    assert transition.info["injections"] == {"gov_policy_on_taxes": 0.5}


def test_initial_conditions_applied_at_reset():
    env = make_env({
        "model": "builtin:bathtub",
        "env_step": 2.0,
        "actionables": ["faucet_setting"],
        "initial_conditions": {"water_level": 42.0},
    })
    env.reset(episode=0)
    assert env.simulation.values["water_level"] == 42.0


def test_missing_model_path_is_config_error():
    with pytest.raises(ConfigError, match="cannot read model file"):
        make_env({"model": "no/such/model.xmile"})


def test_binarized_delta_exact_branch_values():
    from stockflow.env.rewards import BinarizedDelta, RewardTracker, TargetResolver

    model = load_model(bundled.model_path("decay"))
    resolver = TargetResolver(model)
    tracker = RewardTracker(BinarizedDelta("level", "increase"), resolver)
    tracker.reset({"level": 10.0})
    assert tracker.step({"level": 7.0}) == 0.0   # delta -3
    assert tracker.step({"level": 7.4}) == 1.0   # delta +0.4
    assert tracker.step({"level": 7.4}) == 0.0   # delta 0 is not an increase
