import numpy as np
import pytest

from grail.core import ContinuousAction, DiscreteAction, GoalId, RngStream
from grail.demogen import PlanPolicy, optimal_plan
from grail.envs import (
    EAST,
    NORTH,
    BanditEnv,
    GridEnv,
    GridSpec,
    GridState,
    ReachEnv,
    ReachSpec,
    ReachState,
    grid_step,
    interactions,
    is_consistent,
    reach_step,
    rollout,
)
from grail.errors import ContractViolation

GOAL = GoalId.grid(0, 7, 1)


def test_grid_has_48_free_cells(grid_spec):
    states = grid_spec.states()
    assert len(states) == 48 * 4
    assert GridState(7, 4, EAST) not in states
    assert states[0] == GridState(1, 1, EAST)


def test_forward_moves_into_free_cell(grid_spec):
    out = grid_step(grid_spec, GridState(1, 4, EAST), DiscreteAction.FORWARD, 0, GOAL)
    assert out.next_state == GridState(2, 4, EAST)
    assert out.reward == 0.0
    assert not out.at_goal


def test_obstacle_and_walls_block_forward(grid_spec):
    assert grid_step(grid_spec, GridState(6, 4, EAST), DiscreteAction.FORWARD, 0, GOAL).next_state == GridState(6, 4, EAST)
    assert grid_step(grid_spec, GridState(3, 1, NORTH), DiscreteAction.FORWARD, 0, GOAL).next_state == GridState(3, 1, NORTH)


def test_turns_and_stay(grid_spec):
    s = GridState(3, 3, EAST)
    assert grid_step(grid_spec, s, DiscreteAction.TURN_LEFT, 0, GOAL).next_state == GridState(3, 3, NORTH)
    assert grid_step(grid_spec, s, DiscreteAction.TURN_RIGHT, 0, GOAL).next_state.dir == 1
    assert grid_step(grid_spec, s, DiscreteAction.STAY, 0, GOAL).next_state == s


def test_reward_on_entering_goal(grid_spec):
    out = grid_step(grid_spec, GridState(6, 1, EAST), DiscreteAction.FORWARD, 9, GOAL)
    assert out.at_goal
    assert out.reward == pytest.approx(0.975)
    stay = grid_step(grid_spec, GridState(7, 1, EAST), DiscreteAction.STAY, 10, GOAL)
    assert stay.at_goal
    assert stay.reward == 0.0


def test_grid_step_rejects_invalid_input(grid_spec):
    with pytest.raises(ContractViolation):
        grid_step(grid_spec, GridState(7, 4, EAST), DiscreteAction.STAY, 0, GOAL)
    with pytest.raises(ContractViolation):
        grid_step(grid_spec, GridState(0, 4, EAST), DiscreteAction.STAY, 0, GOAL)
    with pytest.raises(ContractViolation):
        grid_step(grid_spec, GridState(1, 4, EAST), DiscreteAction.STAY, -1, GOAL)
    with pytest.raises(ContractViolation):
        grid_step(grid_spec, GridState(1, 4, EAST), 7, 0, GOAL)


def test_grid_env_rejects_goal_on_obstacle(grid_spec):
    with pytest.raises(ContractViolation):
        GridEnv(grid_spec, GoalId.grid(0, 7, 4))


def test_reach_step_moves_and_clips():
    spec = ReachSpec(goals=((0.2, 0.0, 0.0),))
    goal_pos = np.array([0.2, 0.0, 0.0])
    out = reach_step(spec, ReachState(0.0, 0.0, 0.0), ContinuousAction(1.0, 0.0, 0.0), goal_pos)
    assert np.allclose(out.next_state, (0.05, 0.0, 0.0))
    assert out.reward == pytest.approx(-0.15)
    clipped = reach_step(spec, ReachState(0.0, 0.0, 0.0), (2.0, 0.0, 0.0), goal_pos)
    assert clipped.next_state == out.next_state
    with pytest.raises(ContractViolation):
        reach_step(spec, ReachState(float("inf"), 0.0, 0.0), (0.0, 0.0, 0.0), goal_pos)


def test_reach_spec_rejects_unreachable_goal():
    with pytest.raises(ContractViolation):
        ReachSpec(goals=((5.0, 0.0, 0.0),))


def test_stay_rollout_keeps_start(grid_spec):
    env = GridEnv(grid_spec, GOAL)
    traj = rollout(env, PlanPolicy([]), 5, RngStream(0, "stay"))
    assert traj.states == [grid_spec.start] * 5
    assert traj.reached is None
    assert traj.meaningful_length == 5


def test_optimal_rollout_reaches_goal_at_step_11(grid_spec):
    env = GridEnv(grid_spec, GOAL)
    policy = PlanPolicy(optimal_plan(grid_spec, grid_spec.start, GOAL))
    traj = rollout(env, policy, 50, RngStream(0, "demo"))
    assert traj.reached == 11
    assert (traj.final_state.x, traj.final_state.y) == (7, 1)
    assert is_consistent(env, traj)
    assert rollout(env, policy, 50, RngStream(0, "demo")) == traj


def test_rollout_counts_interactions(grid_spec):
    env = GridEnv(grid_spec, GOAL)
    before = interactions.value
    rollout(env, PlanPolicy([]), 7, RngStream(0, "count"))
    assert interactions.value - before == 7
    assert env.calls == 7
    env.simulate(grid_spec.start, DiscreteAction.FORWARD, 0)
    assert env.calls == 7


def test_rollout_rejects_bad_arguments(grid_spec):
    env = GridEnv(grid_spec, GOAL)
    with pytest.raises(ContractViolation):
        rollout(env, PlanPolicy([]), 0, RngStream(0, "x"))
    with pytest.raises(ContractViolation):
        rollout(env, PlanPolicy([]), 3, RngStream(0, "x"), mode="explore")


def test_reach_env_scales_features(reach_spec):
    env = ReachEnv(reach_spec, GoalId.reach(1))
    assert np.allclose(env.goal_pos, (0.2, -0.2, 0.2))
    assert np.allclose(env.features([ReachState(0.2, 0.0, -0.1)]), [[1.0, 0.0, -0.5]])


def test_bandit_pays_fixed_rewards():
    env = BanditEnv([0.0, 1.0])
    assert env.transition(env.start(), 1, 0).reward == 1.0
    with pytest.raises(ContractViolation):
        env.simulate(env.start(), 2, 0)


def _run(env, plan):
    state = env.start()
    rewards = []
    for t, a in enumerate(plan):
        outcome = env.transition(state, a, t)
        rewards.append(outcome.reward)
        state = outcome.next_state
    return rewards


def test_goal_reward_paid_once_per_episode(grid_spec):
    env = GridEnv(grid_spec, GOAL)
    L, F = DiscreteAction.TURN_LEFT, DiscreteAction.FORWARD
    plan = optimal_plan(grid_spec, grid_spec.start, GOAL) + [L, L, F, L, L, F] * 6
    rewards = _run(env, plan)
    assert sum(1 for r in rewards if r != 0.0) == 1
    assert rewards[10] == pytest.approx(1.0 - 0.9 * 10 / 324)
    # a fresh episode is paid again
    assert sum(1 for r in _run(env, plan) if r != 0.0) == 1


def test_grid_step_honours_rewarded_flag(grid_spec):
    out = grid_step(grid_spec, GridState(6, 1, EAST), DiscreteAction.FORWARD, 9, GOAL, rewarded=True)
    assert out.at_goal
    assert out.reward == 0.0


def test_every_state_action_stays_valid(grid_spec):
    for s in grid_spec.states():
        for a in DiscreteAction:
            out = grid_step(grid_spec, s, a, 0, GOAL)
            assert grid_spec.is_valid(out.next_state)
            assert 0.0 <= out.reward <= 1.0
