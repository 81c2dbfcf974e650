import json
import logging

import numpy as np
import pytest

from grail.core import ContinuousAction, DemoSet, GoalId, RngStream, Step, Trajectory
from grail.demogen import PlanPolicy
from grail.envs import BanditEnv, BanditState, GridEnv, ReachState, interactions, rollout
from grail.errors import BankVersionError, ContractViolation, CorruptBank, GoalTrainingError
from grail.learners import (
    AdversarialParams,
    AirlLearner,
    BcLearner,
    BcParams,
    GailLearner,
    QLearner,
    PpoParams,
    QParams,
    QPolicy,
    airl_fit,
    bc_fit_mlp,
    bc_fit_tabular,
    gail_fit,
    load_bank,
    make_learner,
    ppo_true_reward,
    greedy_reach_steps,
    qlearn,
    save_bank,
    train_bank,
)
from grail.learners.bank import MANIFEST_NAME, policy_file_name
from grail.learners.policies import policy_from_record, policy_to_record

from conftest import bandit_trajectory

A0, A1 = GoalId(0, "a0"), GoalId(1, "a1")
STATE = BanditState(0)


def _adversarial_params(rounds=50):
    return AdversarialParams(policy=PpoParams(rounds=rounds, steps_per_round=64, batch=32))


def _expert(action, n=4):
    return tuple(bandit_trajectory([action], goal=A0 if action == 0 else A1) for _ in range(n))


def _bandit_env(goal):
    return BanditEnv([0.0, 0.0], goal=goal)


def test_tabular_bc_laplace_counts():
    policy = bc_fit_tabular([bandit_trajectory([2] * 7)], alpha=1.0, n_actions=4)
    assert policy.distribution(STATE).probs[2] == pytest.approx(8 / 11)
    assert policy.distribution(BanditState(5)).probs.tolist() == [0.25] * 4
    mixed = bc_fit_tabular([bandit_trajectory([1, 1, 1, 2, 2, 2, 2])], alpha=1.0, n_actions=4)
    assert np.allclose(mixed.distribution(STATE).probs, [1 / 11, 4 / 11, 5 / 11, 1 / 11])


def test_tabular_bc_rejects_bad_input():
    with pytest.raises(ContractViolation):
        bc_fit_tabular([])
    with pytest.raises(ContractViolation):
        bc_fit_tabular([bandit_trajectory([4])], n_actions=4)


def test_tabular_policy_covers_every_grid_tuple(grid_spec):
    demos = [rollout(GridEnv(grid_spec, GoalId.grid(0, 7, 1)), PlanPolicy([]), 5, RngStream(0, "s"))]
    policy = bc_fit_tabular(demos)
    every = [(x, y, d) for y in range(1, 8) for x in range(1, 8) for d in range(4)]
    assert len(every) == 196
    probs = policy.evaluate(every).probs
    assert np.allclose(probs.sum(axis=1), 1.0)


def _reach_demo(action, n=8):
    steps = tuple(Step(ReachState(0.1, 0.0, 0.05), ContinuousAction(*action)) for _ in range(n))
    return Trajectory(steps, ReachState(0.1, 0.0, 0.05), "reach", GoalId.reach(0), 0, n)


def test_mlp_bc_memorises_one_pair():
    hp = BcParams(batch=8, lr=3e-3, epochs=600, hidden=(16,))
    policy = bc_fit_mlp([_reach_demo((0.5, -0.3, 0.2))], hp, RngStream(0, "bc"), feature_scale=0.2)
    mean = policy.distribution(ReachState(0.1, 0.0, 0.05)).mean
    assert np.allclose(mean, [0.5, -0.3, 0.2], atol=1e-2)


def test_mlp_bc_is_deterministic():
    hp = BcParams(epochs=3, hidden=(8,))
    demos = [_reach_demo((0.5, -0.3, 0.2)), _reach_demo((-0.1, 0.4, 0.0))]
    first = bc_fit_mlp(demos, hp, RngStream(1, "bc"), 0.2)
    second = bc_fit_mlp(demos, hp, RngStream(1, "bc"), 0.2)
    assert np.array_equal(first.net.params, second.net.params)
    assert np.array_equal(first.log_scale, second.log_scale)


def test_bc_needs_no_environment_interaction():
    before = interactions.value
    bank = train_bank(BcLearner(), (A0, A1), _bandit_env, DemoSet({A0: _expert(0), A1: _expert(1)}), 0)
    assert interactions.value == before
    assert bank.total_env_calls == 0
    assert len(bank) == 2


def test_qlearning_bandit_converges():
    env = BanditEnv([0.0, 0.0, 1.0, 0.0])
    table, policy = qlearn(env, QParams(episodes=2000), RngStream(0, "q"))
    assert np.allclose(table.q[0], [0.0, 0.0, 1.0, 0.0], atol=0.01)
    assert table.visits.sum() == 2000
    assert policy.distribution(STATE).mode() == 2


def test_qlearning_visits_equal_episodes_times_horizon(grid_spec):
    env = GridEnv(grid_spec, GoalId.grid(0, 7, 1))
    table, _ = qlearn(env, QParams(episodes=20), RngStream(0, "q"))
    assert table.visits.sum() == 20 * grid_spec.horizon
    assert env.calls == 20 * grid_spec.horizon
    start_row = table.index.rows([grid_spec.start])[0]
    assert table.state_visits()[start_row] >= 20


def test_qlearning_values_bounded_by_single_reward(grid_spec):
    env = GridEnv(grid_spec, GoalId.grid(0, 7, 1))
    table, _ = qlearn(env, QParams(episodes=1000), RngStream(0, "q"))
    assert table.q.max() <= 1.0
    at_goal = [i for i, s in enumerate(table.index.states) if (s[0], s[1]) == (7, 1)]
    assert np.all(table.q[at_goal] == 0.0)


def test_qlearner_warns_when_greedy_policy_misses_goal(grid_spec, caplog):
    goal = GoalId.grid(0, 7, 1)
    with caplog.at_level(logging.WARNING, logger="grail.learners.qlearning"):
        QLearner(QParams(episodes=0)).fit(goal, (), GridEnv(grid_spec, goal), RngStream(0, "q"))
    assert "does not reach the goal" in caplog.text


@pytest.mark.slow
def test_qlearning_grid_greedy_rollout_is_optimal(grid_spec):
    goal = GoalId.grid(0, 7, 1)
    env = GridEnv(grid_spec, goal)
    table, policy = qlearn(env, QParams(), RngStream(0, "q"))
    assert greedy_reach_steps(env, table) == 11
    traj = rollout(env, policy, grid_spec.horizon, RngStream(0, "eval"))
    assert traj.reached == 11
    visits = table.state_visits()
    north = sum(v for s, v in zip(table.index.states, visits) if s[1] <= 4)
    assert north > visits.sum() - north


def test_ppo_bandit_prefers_rewarded_action():
    env = BanditEnv([0.0, 1.0])
    policy = ppo_true_reward(env, PpoParams(rounds=30, steps_per_round=64), RngStream(0, "ppo"))
    assert policy.distribution(STATE).probs[1] >= 0.9


def test_zero_rounds_leave_initialisation():
    env = BanditEnv([0.0, 1.0], goal=A0)
    assert ppo_true_reward(env, PpoParams(rounds=0), RngStream(0, "ppo")).distribution(STATE).probs.tolist() == [0.5, 0.5]
    policy = gail_fit(_expert(0), env, _adversarial_params(rounds=0), RngStream(0, "gail"))
    assert policy.distribution(STATE).probs.tolist() == [0.5, 0.5]


def test_gail_recovers_expert_action():
    env = _bandit_env(A0)
    learner = GailLearner(_adversarial_params())
    policy = learner.fit(A0, _expert(0), env, RngStream(0, "gail"))
    assert policy.distribution(STATE).probs[0] >= 0.9
    history = learner.history[A0]
    assert len(history) == 50
    assert history[-1]["disc_accuracy"] <= 0.75


def test_airl_recovers_expert_action_and_reward():
    env = _bandit_env(A0)
    policy, head = airl_fit(_expert(0), env, _adversarial_params(), RngStream(0, "airl"))
    assert policy.distribution(STATE).probs[0] >= 0.9
    assert head.shaped(STATE, 0, STATE) > head.shaped(STATE, 1, STATE)
    assert head.reward(STATE, 0) > head.reward(STATE, 1)
    assert head.calls == 4


def test_adversarial_rejects_mismatched_demos(grid_spec):
    env = GridEnv(grid_spec, GoalId.grid(0, 7, 1))
    with pytest.raises(ContractViolation):
        gail_fit(_expert(0), env, _adversarial_params(1), RngStream(0, "gail"))


def test_airl_bank_keeps_reward_heads():
    demos = DemoSet({A0: _expert(0), A1: _expert(1)})
    bank = train_bank(AirlLearner(_adversarial_params(20)), (A0, A1), _bandit_env, demos, 3)
    assert set(bank.reward_heads) == {A0, A1}
    assert all(head.calls == 0 for head in bank.reward_heads.values())


def test_concurrent_training_matches_sequential():
    demos = DemoSet({A0: _expert(0), A1: _expert(1)})
    serial = train_bank(GailLearner(_adversarial_params(5)), (A0, A1), _bandit_env, demos, 11)
    parallel = train_bank(GailLearner(_adversarial_params(5)), (A1, A0), _bandit_env, demos, 11, workers=2)
    assert parallel.goals == (A0, A1)
    for goal in (A0, A1):
        assert np.array_equal(serial[goal].probs, parallel[goal].probs)
        assert serial.env_calls[goal] == parallel.env_calls[goal] == 5 * 64


def test_failed_goal_is_named():
    demos = DemoSet({A0: _expert(0)})
    with pytest.raises(GoalTrainingError) as info:
        train_bank(BcLearner(), (A0, A1), _bandit_env, demos, 0)
    assert info.value.goal == "a1"


def test_bank_save_and_load(tmp_path):
    env = BanditEnv([0.0, 1.0])
    _, q = qlearn(env, QParams(episodes=50), RngStream(0, "q"))
    demos = DemoSet({A0: _expert(0), A1: _expert(1)})
    bank = train_bank(BcLearner(), (A0, A1), _bandit_env, demos, 9)
    path = save_bank(bank, tmp_path / "bc")
    loaded = load_bank(path)
    assert loaded.goals == bank.goals
    assert loaded.learner == "bc"
    assert loaded.master_seed == 9
    assert loaded.hyperparams == json.loads(json.dumps(bank.hyperparams))
    for goal in bank.goals:
        assert np.array_equal(loaded[goal].probs, bank[goal].probs)
    restored = policy_from_record(policy_to_record(q))
    assert isinstance(restored, QPolicy)
    assert np.array_equal(restored.table.visits, q.table.visits)


def test_tampered_bank_names_the_goal(tmp_path):
    demos = DemoSet({A0: _expert(0), A1: _expert(1)})
    path = save_bank(train_bank(BcLearner(), (A0, A1), _bandit_env, demos, 0), tmp_path / "bc")
    policy_path = path / policy_file_name("bc", A1)
    policy_path.write_bytes(policy_path.read_bytes()[:-10])
    with pytest.raises(CorruptBank) as info:
        load_bank(path)
    assert info.value.goal == "a1"
    policy_path.unlink()
    with pytest.raises(CorruptBank):
        load_bank(path)
    (path / MANIFEST_NAME).write_text("{", encoding="utf-8")
    with pytest.raises(CorruptBank):
        load_bank(path)


def test_unknown_policy_format_is_a_version_error():
    with pytest.raises(BankVersionError):
        policy_from_record({"format": "transformer", "version": 1})
    with pytest.raises(BankVersionError):
        policy_from_record({"format": "tabular", "version": 99})


def test_learner_registry_and_hyperparameter_checks():
    assert make_learner("bc").name == "bc"
    assert make_learner("qlearning", QParams(episodes=5)).params.episodes == 5
    with pytest.raises(ContractViolation):
        make_learner("dqn")
    with pytest.raises(ContractViolation):
        QParams(gamma=1.0)
    with pytest.raises(ContractViolation):
        PpoParams(lr=0.0)
    with pytest.raises(ContractViolation):
        BcParams(batch=0)
