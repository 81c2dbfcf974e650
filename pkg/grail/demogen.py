"""Demonstration generators for the optimal, biased and suboptimal regimes.

Grid plans come from a breadth-first search over (x, y, dir); the biased
planner walks the same distance field but prefers one axis while it still
has displacement along it. Reach demonstrations come from a clipped
proportional controller with optional action noise.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import ContinuousAction, DiscreteAction, GoalId, Policy, RngStream, Trajectory
from .envs import EAST, HEADINGS, NORTH, SOUTH, WEST, GridEnv, GridSpec, GridState, ReachEnv, ReachSpec, grid_move, rollout
from .errors import BiasError, ContractViolation, PlanningError

log = logging.getLogger(__name__)

L, R, F, S = DiscreteAction.TURN_LEFT, DiscreteAction.TURN_RIGHT, DiscreteAction.FORWARD, DiscreteAction.STAY
DETOUR = (L, L, R, R)
GRID_REGIMES = ("optimal", "biased", "suboptimal")
ROUTE_CHOICES = ("lexicographic", "distinct")
NOISE_KINDS = ("gaussian", "uniform")

_PREFERENCES = {
    "north-first": (NORTH, (EAST, WEST)),
    "south-first": (SOUTH, (EAST, WEST)),
    "east-first": (EAST, (NORTH, SOUTH)),
    "west-first": (WEST, (NORTH, SOUTH)),
}


@dataclass(frozen=True)
class BiasSpec:
    """Per-goal axis preference, keyed by goal label.

    Goals without an explicit entry fall back to ``north-first`` when they lie
    north of the start row and ``east-first`` otherwise.
    """

    preferences: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        unknown = {v for v in self.preferences.values() if v not in _PREFERENCES}
        if unknown:
            raise ContractViolation(f"unknown bias preference(s) {sorted(unknown)}")

    def for_goal(self, goal: GoalId, start: GridState) -> str:
        if goal.label in self.preferences:
            return self.preferences[goal.label]
        return "north-first" if goal.cell[1] < start.y else "east-first"


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "gaussian"
    level: float = 0.1

    def __post_init__(self) -> None:
        if self.kind not in NOISE_KINDS:
            raise ContractViolation(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not np.isfinite(self.level) or self.level < 0:
            raise ContractViolation(f"noise level must be non-negative, got {self.level}")

    def draw(self, rng: np.random.Generator, size: int = 3) -> np.ndarray:
        if self.kind == "gaussian":
            return self.level * rng.standard_normal(size)
        return rng.uniform(-self.level, self.level, size)


@dataclass(frozen=True)
class TurnInsertionSpec:
    probability: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise ContractViolation(f"insertion probability must lie in [0, 1], got {self.probability}")


def distance_field(spec: GridSpec, goal: GoalId) -> Dict[GridState, int]:
    """Shortest number of actions from every state to the goal cell.

    States that cannot reach the goal are absent from the result.
    """
    goal_cell = goal.cell
    predecessors: Dict[GridState, List[GridState]] = {}
    for s in spec.states():
        for a in (L, R, F):
            predecessors.setdefault(grid_move(spec, s, a), []).append(s)
    dist = {s: 0 for s in spec.states() if (s.x, s.y) == goal_cell}
    queue = deque(dist)
    while queue:
        s = queue.popleft()
        for p in predecessors.get(s, ()):
            if p not in dist:
                dist[p] = dist[s] + 1
                queue.append(p)
    return dist


def _optimal_actions(spec: GridSpec, dist: Mapping[GridState, int], s: GridState) -> List[DiscreteAction]:
    return [a for a in (L, R, F) if dist.get(grid_move(spec, s, a), -2) == dist[s] - 1]


def _check_reachable(spec: GridSpec, start: GridState, goal: GoalId) -> Dict[GridState, int]:
    if not spec.is_valid(start):
        raise ContractViolation(f"invalid start state {start!r}")
    if not spec.is_free(*goal.cell):
        raise PlanningError(f"goal {goal.label} is not a free cell")
    dist = distance_field(spec, goal)
    if start not in dist:
        raise PlanningError(f"goal {goal.label} is unreachable from {tuple(start)}")
    return dist


def optimal_plan(spec: GridSpec, start: GridState, goal: GoalId) -> List[DiscreteAction]:
    """Shortest plan to the goal cell, lexicographically smallest under L < R < F.

    Raises:
        PlanningError: If the goal cannot be reached.
    """
    dist = _check_reachable(spec, start, goal)
    plan: List[DiscreteAction] = []
    s = start
    while dist[s] > 0:
        a = _optimal_actions(spec, dist, s)[0]
        plan.append(a)
        s = grid_move(spec, s, a)
    return plan


def optimal_plans(spec: GridSpec, start: GridState, goal: GoalId) -> List[List[DiscreteAction]]:
    """Every shortest plan to the goal cell, in lexicographic order under L < R < F."""
    dist = _check_reachable(spec, start, goal)
    plans: List[List[DiscreteAction]] = []

    def extend(s: GridState, prefix: List[DiscreteAction]) -> None:
        if dist[s] == 0:
            plans.append(list(prefix))
            return
        for a in _optimal_actions(spec, dist, s):
            prefix.append(a)
            extend(grid_move(spec, s, a), prefix)
            prefix.pop()

    extend(start, [])
    return plans


def _shared_prefix(a: Sequence[DiscreteAction], b: Sequence[DiscreteAction]) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def distinct_plans(spec: GridSpec, start: GridState, goals: Sequence[GoalId]) -> Dict[GoalId, List[DiscreteAction]]:
    """One shortest plan per goal, chosen so routes part ways as early as possible.

    Goals are taken in the given order. Each gets the shortest plan whose
    longest common prefix with the plans already chosen is smallest, the
    lexicographically smallest among equals. The first goal therefore gets
    :func:`optimal_plan`.
    """
    chosen: Dict[GoalId, List[DiscreteAction]] = {}
    for goal in goals:
        candidates = optimal_plans(spec, start, goal)
        overlap = [max((_shared_prefix(p, q) for q in chosen.values()), default=0) for p in candidates]
        chosen[goal] = candidates[int(np.argmin(overlap))]
        log.debug("Route for %s: %d actions, shares %d with earlier goals", goal, len(chosen[goal]), min(overlap))
    return chosen


def _turn_towards(heading: int, target: int) -> Tuple[DiscreteAction, ...]:
    delta = (target - heading) % 4
    if delta == 1:
        return (R,)
    if delta == 3:
        return (L,)
    if delta == 2:
        return (L, R)
    return ()


def biased_plan(spec: GridSpec, start: GridState, goal: GoalId, bias: str) -> List[DiscreteAction]:
    """Optimal-length plan that covers the preferred axis first.

    Each step picks among optimal actions: move forward when already heading
    in the preferred direction, otherwise turn toward it, otherwise move
    forward, otherwise the smallest optimal action. The preferred direction
    is the primary axis while displacement remains along it, then the
    secondary axis toward the goal.

    Raises:
        BiasError: If the primary direction points away from the goal.
        PlanningError: If the goal cannot be reached.
    """
    if bias not in _PREFERENCES:
        raise ContractViolation(f"unknown bias preference {bias!r}")
    dist = _check_reachable(spec, start, goal)
    primary, secondary = _PREFERENCES[bias]
    gx, gy = goal.cell
    pdx, pdy = HEADINGS[primary]
    if (gx - start.x) * pdx + (gy - start.y) * pdy < 0:
        raise BiasError(f"{bias} moves away from goal {goal.label}")

    plan: List[DiscreteAction] = []
    s = start
    while dist[s] > 0:
        remaining = (gx - s.x) * pdx + (gy - s.y) * pdy
        if remaining > 0:
            preferred = primary
        else:
            sdx, sdy = HEADINGS[secondary[0]]
            along = (gx - s.x) * sdx + (gy - s.y) * sdy
            preferred = secondary[0] if along >= 0 else secondary[1]
        options = _optimal_actions(spec, dist, s)
        if s.dir == preferred and F in options:
            a = F
        else:
            turns = [t for t in _turn_towards(s.dir, preferred) if t in options]
            if turns:
                a = turns[0]
            elif F in options:
                a = F
            else:
                a = options[0]
        plan.append(a)
        s = grid_move(spec, s, a)
    if len(plan) != dist[start]:
        raise BiasError(f"{bias} plan for {goal.label} is not optimal")
    return plan


def corrupt_suboptimal(plan: Sequence[DiscreteAction], spec: TurnInsertionSpec, rng: RngStream) -> List[DiscreteAction]:
    """Insert the in-place detour L, L, R, R before each action with probability p."""
    gen = rng.generator
    draws = gen.random(len(plan))
    out: List[DiscreteAction] = []
    for a, u in zip(plan, draws):
        if u < spec.probability:
            out.extend(DETOUR)
        out.append(DiscreteAction(a))
    return out


def simulate_plan(spec: GridSpec, start: GridState, plan: Sequence[DiscreteAction]) -> List[GridState]:
    """States visited by executing ``plan``, starting state included."""
    visited = [start]
    for a in plan:
        visited.append(grid_move(spec, visited[-1], a))
    return visited


class PlanPolicy(Policy):
    """Replays a fixed action plan, then stays."""

    kind = "plan"

    def __init__(self, plan: Sequence[DiscreteAction]) -> None:
        super().__init__()
        self.plan = tuple(DiscreteAction(a) for a in plan)

    def act(self, state, t, rng, mode="greedy"):
        return self.plan[t] if t < len(self.plan) else S


class ReachExpert(Policy):
    """Clipped proportional controller ``a = clip((g - p) / step_scale)`` plus optional noise."""

    kind = "expert"
    discrete = False

    def __init__(self, spec: ReachSpec, goal_pos: np.ndarray, noise: Optional[NoiseSpec] = None) -> None:
        super().__init__()
        self.spec = spec
        self.goal_pos = np.asarray(goal_pos, dtype=float)
        self.noise = noise

    def command(self, state) -> np.ndarray:
        return np.clip((self.goal_pos - np.asarray(state, dtype=float)) / self.spec.step_scale, -1.0, 1.0)

    def act(self, state, t, rng, mode="greedy"):
        a = self.command(state)
        if self.noise is not None:
            a = a + self.noise.draw(rng)
        return ContinuousAction.clipped(a)


def gen_grid_demos(
    spec: GridSpec,
    goal: GoalId,
    regime: str,
    n: int,
    rng: RngStream,
    bias: Optional[BiasSpec] = None,
    insertion: Optional[TurnInsertionSpec] = None,
    route: Optional[Sequence[DiscreteAction]] = None,
) -> List[Trajectory]:
    """Execute ``n`` plans for one goal, padded with ``stay`` to the horizon.

    ``route`` replaces the lexicographic shortest plan of the optimal and
    suboptimal regimes; it must be a shortest plan to ``goal``. The
    suboptimal regime draws fresh detour insertions for every trajectory
    from the child stream ``demo/<i>``.
    """
    if n < 1:
        raise ContractViolation(f"need at least one demonstration, got {n}")
    if regime not in GRID_REGIMES:
        raise ContractViolation(f"grid regime must be one of {GRID_REGIMES}, got {regime!r}")
    env = GridEnv(spec, goal)
    if regime == "biased":
        base = biased_plan(spec, spec.start, goal, (bias or BiasSpec()).for_goal(goal, spec.start))
    else:
        base = optimal_plan(spec, spec.start, goal)
        if route is not None:
            visited = simulate_plan(spec, spec.start, route)
            if len(route) != len(base) or (visited[-1].x, visited[-1].y) != goal.cell:
                raise ContractViolation(f"route for {goal.label} is not a shortest plan")
            base = [DiscreteAction(a) for a in route]
    insertion = insertion or TurnInsertionSpec()
    demos = []
    for i in range(n):
        stream = rng.child(f"demo/{i}")
        plan = corrupt_suboptimal(base, insertion, stream) if regime == "suboptimal" else base
        if len(plan) > spec.horizon:
            log.warning("Plan for %s has %d actions; truncated to horizon %d", goal, len(plan), spec.horizon)
        demos.append(rollout(env, PlanPolicy(plan), spec.horizon, stream))
    return demos


def gen_reach_demos(spec: ReachSpec, goal: GoalId, noise: Optional[NoiseSpec], n: int, rng: RngStream) -> List[Trajectory]:
    """Roll out the proportional expert ``n`` times, each on child stream ``demo/<i>``."""
    if n < 1:
        raise ContractViolation(f"need at least one demonstration, got {n}")
    env = ReachEnv(spec, goal)
    expert = ReachExpert(spec, env.goal_pos, noise)
    return [rollout(env, expert, spec.horizon, rng.child(f"demo/{i}"), mode="sample") for i in range(n)]


def split_demos(trajectories: Sequence[Trajectory], n_train: int) -> Tuple[Tuple[Trajectory, ...], Tuple[Trajectory, ...]]:
    """First ``n_train`` trajectories for training, the rest for testing."""
    if not 0 < n_train < len(trajectories):
        raise ContractViolation(f"cannot split {len(trajectories)} trajectories with {n_train} for training")
    return tuple(trajectories[:n_train]), tuple(trajectories[n_train:])


def demo_file_name(env_kind: str, goal: GoalId, regime: str, seed: int) -> str:
    return f"{env_kind}_{goal.label}_{regime}_{seed}.jsonl"
