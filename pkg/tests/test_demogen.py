from collections import deque

import numpy as np
import pytest

from grail.core import GoalId, RngStream
from grail.demogen import (
    DETOUR,
    BiasSpec,
    F,
    L,
    NoiseSpec,
    R,
    S,
    TurnInsertionSpec,
    biased_plan,
    corrupt_suboptimal,
    demo_file_name,
    gen_grid_demos,
    gen_reach_demos,
    ReachExpert,
    distinct_plans,
    optimal_plan,
    optimal_plans,
    simulate_plan,
    split_demos,
)
from grail.envs import EAST, GridState, ReachEnv, ReachSpec, grid_move, rollout
from grail.errors import BiasError, ContractViolation, PlanningError

PRESET_GOALS = [(7, 1), (7, 7), (7, 3), (7, 5), (5, 1), (5, 7)]


def _search_length(spec, start, cell):
    """Forward breadth-first search over (x, y, dir) with turn and forward moves."""
    seen = {start: 0}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        if (s.x, s.y) == cell:
            return seen[s]
        for a in (L, R, F):
            nxt = grid_move(spec, s, a)
            if nxt not in seen:
                seen[nxt] = seen[s] + 1
                queue.append(nxt)
    return None


@pytest.mark.parametrize("cell", PRESET_GOALS)
def test_optimal_plan_matches_exhaustive_search(grid_spec, cell):
    goal = GoalId.grid(0, *cell)
    plan = optimal_plan(grid_spec, grid_spec.start, goal)
    assert len(plan) == _search_length(grid_spec, grid_spec.start, cell)
    final = simulate_plan(grid_spec, grid_spec.start, plan)[-1]
    assert (final.x, final.y) == cell


def test_known_plan_lengths(grid_spec):
    lengths = {cell: len(optimal_plan(grid_spec, grid_spec.start, GoalId.grid(0, *cell))) for cell in PRESET_GOALS}
    assert lengths[(7, 1)] == 11
    assert lengths[(7, 7)] == 11
    assert lengths[(5, 1)] == 8
    assert lengths[(5, 7)] == 8


def test_optimal_plan_trivial_cases(grid_spec):
    assert optimal_plan(grid_spec, grid_spec.start, GoalId.grid(0, 2, 4)) == [F]
    assert optimal_plan(grid_spec, grid_spec.start, GoalId.grid(0, 1, 4)) == []
    assert optimal_plan(grid_spec, grid_spec.start, GoalId.grid(0, 7, 1)) == [L, F, F, F, R, F, F, F, F, F, F]


def test_optimal_plan_errors(grid_spec):
    with pytest.raises(PlanningError):
        optimal_plan(grid_spec, grid_spec.start, GoalId.grid(0, 7, 4))
    with pytest.raises(ContractViolation):
        optimal_plan(grid_spec, GridState(7, 4, EAST), GoalId.grid(0, 7, 1))


def test_biased_plans(grid_spec):
    north = biased_plan(grid_spec, grid_spec.start, GoalId.grid(0, 7, 1), "north-first")
    assert north == [L, F, F, F, R, F, F, F, F, F, F]
    east = biased_plan(grid_spec, grid_spec.start, GoalId.grid(1, 7, 7), "east-first")
    assert east[:5] == [F] * 5
    assert len(east) == 11
    final = simulate_plan(grid_spec, grid_spec.start, east)[-1]
    assert (final.x, final.y) == (7, 7)


def test_bias_pointing_away_from_goal_is_rejected(grid_spec):
    with pytest.raises(BiasError):
        biased_plan(grid_spec, grid_spec.start, GoalId.grid(0, 7, 1), "south-first")
    with pytest.raises(ContractViolation):
        biased_plan(grid_spec, grid_spec.start, GoalId.grid(0, 7, 1), "diagonal")


def test_bias_spec_defaults_by_row(grid_spec):
    spec = BiasSpec()
    assert spec.for_goal(GoalId.grid(0, 7, 1), grid_spec.start) == "north-first"
    assert spec.for_goal(GoalId.grid(0, 7, 7), grid_spec.start) == "east-first"
    assert BiasSpec({"g_7_1": "west-first"}).for_goal(GoalId.grid(0, 7, 1), grid_spec.start) == "west-first"
    with pytest.raises(ContractViolation):
        BiasSpec({"g_7_1": "up"})


def test_corruption_extremes(grid_spec):
    plan = optimal_plan(grid_spec, grid_spec.start, GoalId.grid(0, 7, 1))
    assert corrupt_suboptimal(plan, TurnInsertionSpec(0.0), RngStream(0, "c")) == plan
    full = corrupt_suboptimal(plan, TurnInsertionSpec(1.0), RngStream(0, "c"))
    assert len(full) == 55
    assert tuple(full[:4]) == DETOUR


def test_corruption_preserves_final_state(grid_spec):
    gen = np.random.default_rng(7)
    for i in range(100):
        plan = [[L, R, F, S][k] for k in gen.integers(0, 4, gen.integers(1, 30))]
        corrupted = corrupt_suboptimal(plan, TurnInsertionSpec(0.5), RngStream(i, "corrupt"))
        original_end = simulate_plan(grid_spec, grid_spec.start, plan)[-1]
        assert simulate_plan(grid_spec, grid_spec.start, corrupted)[-1] == original_end


def test_optimal_demos_are_identical(grid_spec):
    demos = gen_grid_demos(grid_spec, GoalId.grid(0, 7, 1), "optimal", 10, RngStream(0, "demos"))
    assert len(demos) == 10
    assert all(d.horizon == 50 and d.steps == demos[0].steps for d in demos)
    assert demos[0].reached == 11
    assert demos[0].steps[-1].action == S


def test_suboptimal_demos_vary(grid_spec):
    demos = gen_grid_demos(grid_spec, GoalId.grid(0, 7, 1), "suboptimal", 10, RngStream(3, "demos"))
    lengths = {d.reached for d in demos}
    assert len(lengths) > 1
    assert all(d.reached is None or d.reached >= 11 for d in demos)


def test_long_plans_are_truncated(grid_spec, caplog):
    demos = gen_grid_demos(grid_spec, GoalId.grid(0, 7, 1), "suboptimal", 1, RngStream(0, "d"),
                           insertion=TurnInsertionSpec(1.0))
    assert demos[0].horizon == 50
    assert demos[0].reached is None
    assert "truncated" in caplog.text


def test_split_is_disjoint(grid_spec):
    demos = gen_grid_demos(grid_spec, GoalId.grid(0, 7, 7), "suboptimal", 10, RngStream(0, "demos"))
    train, test = split_demos(demos, 7)
    assert len(train) == 7 and len(test) == 3
    assert not {id(t) for t in train} & {id(t) for t in test}
    with pytest.raises(ContractViolation):
        split_demos(demos, 10)


def test_reach_expert_reaches_target_in_four_steps():
    spec = ReachSpec(goals=((0.2, 0.0, 0.0),))
    demo = gen_reach_demos(spec, GoalId.reach(0), None, 1, RngStream(0, "reach"))[0]
    assert np.allclose(demo.steps[4].state, (0.2, 0.0, 0.0))
    assert demo.reached == 4


def test_zero_noise_matches_noiseless_expert(reach_spec):
    goal = GoalId.reach(0)
    clean = gen_reach_demos(reach_spec, goal, None, 2, RngStream(0, "r"))
    zero = gen_reach_demos(reach_spec, goal, NoiseSpec("gaussian", 0.0), 2, RngStream(0, "r"))
    assert [d.steps for d in clean] == [d.steps for d in zero]


def test_gaussian_noise_moves_the_endpoint(reach_spec):
    goal = GoalId.reach(0)
    target = np.asarray(reach_spec.goals[0])
    noisy = gen_reach_demos(reach_spec, goal, NoiseSpec("gaussian", 0.3), 50, RngStream(0, "r"))
    clean = gen_reach_demos(reach_spec, goal, None, 1, RngStream(0, "r"))
    clean_distance = np.linalg.norm(np.asarray(clean[0].final_state) - target)
    noisy_distance = np.mean([np.linalg.norm(np.asarray(d.final_state) - target) for d in noisy])
    assert noisy_distance > clean_distance


def test_noise_spec_validation():
    with pytest.raises(ContractViolation):
        NoiseSpec("gaussian", -0.1)
    with pytest.raises(ContractViolation):
        NoiseSpec("laplace", 0.1)
    draws = NoiseSpec("uniform", 0.3).draw(np.random.default_rng(0), 1000)
    assert np.all(np.abs(draws) <= 0.3)


def test_demo_file_name():
    assert demo_file_name("grid", GoalId.grid(0, 7, 1), "biased", 42) == "grid_g_7_1_biased_42.jsonl"


def test_every_shortest_plan_is_listed_in_order(grid_spec):
    goal = GoalId.grid(0, 7, 3)
    plans = optimal_plans(grid_spec, grid_spec.start, goal)
    assert plans[0] == optimal_plan(grid_spec, grid_spec.start, goal)
    assert plans == sorted(plans)
    assert len({tuple(p) for p in plans}) == len(plans) > 1
    for plan in plans:
        assert len(plan) == 9
        final = simulate_plan(grid_spec, grid_spec.start, plan)[-1]
        assert (final.x, final.y) == (7, 3)


def test_distinct_routes_part_ways_early(grid_spec):
    goals = [GoalId.grid(i, *cell) for i, cell in enumerate(PRESET_GOALS[:4])]
    routes = distinct_plans(grid_spec, grid_spec.start, goals)
    assert routes[goals[0]] == [L, F, F, F, R] + [F] * 6
    assert routes[goals[1]] == [R, F, F, F, L] + [F] * 6
    assert routes[goals[2]] == [F, L, F, R] + [F] * 5
    assert routes[goals[3]] == [F, R, F, L] + [F] * 5


def test_route_replaces_shortest_plan(grid_spec):
    goal = GoalId.grid(2, 7, 3)
    route = [F, L, F, R] + [F] * 5
    demos = gen_grid_demos(grid_spec, goal, "optimal", 2, RngStream(0, "d"), route=route)
    assert [int(s.action) for s in demos[0].steps[:9]] == [int(a) for a in route]
    assert demos[0].reached == 9
    with pytest.raises(ContractViolation):
        gen_grid_demos(grid_spec, goal, "optimal", 1, RngStream(0, "d"), route=[L, F, R] + [F] * 7)


def test_noiseless_expert_never_moves_away(reach_spec):
    for i in range(len(reach_spec.goals)):
        env = ReachEnv(reach_spec, GoalId.reach(i))
        traj = rollout(env, ReachExpert(reach_spec, env.goal_pos), reach_spec.horizon, RngStream(0, "x"))
        points = traj.states + [traj.final_state]
        distances = [np.linalg.norm(np.asarray(p) - env.goal_pos) for p in points]
        assert all(b <= a + 1e-12 for a, b in zip(distances, distances[1:]))
        assert distances[-1] < reach_spec.tolerance
