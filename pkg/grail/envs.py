"""Deterministic evaluation environments.

Two domains are provided: a 9x9 gridworld with one obstacle (orientation
matters, actions turn, move forward or stay) and a kinematic point-mass that
reaches for 3D targets. A single-state bandit is included for sanity checks
of the learners.

The pure transition functions :func:`grid_step` and :func:`reach_step` never
touch the interaction counter; the environment objects do, once per call to
``transition``.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Any, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .core import ContinuousAction, DiscreteAction, GoalId, Policy, RngStream, Step, Trajectory
from .errors import ContractViolation

log = logging.getLogger(__name__)


class InteractionCounter:
    """Process-wide, lock-protected count of environment transitions."""

    def __init__(self) -> None:
        self._value = 0
        self._lock = threading.Lock()

    def add(self, n: int = 1) -> None:
        with self._lock:
            self._value += n

    @property
    def value(self) -> int:
        with self._lock:
            return self._value


interactions = InteractionCounter()

EAST, SOUTH, WEST, NORTH = range(4)
# y grows southward
HEADINGS = ((1, 0), (0, 1), (-1, 0), (0, -1))


class GridState(NamedTuple):
    x: int
    y: int
    dir: int


class StepOutcome(NamedTuple):
    next_state: Any
    reward: float
    at_goal: bool


@dataclass(frozen=True)
class GridSpec:
    """Gridworld layout. Border walls surround free cells 1..width-2."""

    width: int = 9
    height: int = 9
    obstacle: Tuple[int, int] = (7, 4)
    start: GridState = GridState(1, 4, EAST)
    max_steps: int = 324
    horizon: int = 50

    def __post_init__(self) -> None:
        if self.max_steps <= 0 or self.horizon <= 0:
            raise ContractViolation("max_steps and horizon must be positive")
        if not self._inside(*self.obstacle):
            raise ContractViolation(f"obstacle {self.obstacle} is outside the free range")
        if not self.is_valid(self.start):
            raise ContractViolation(f"start {tuple(self.start)} is not a free cell")

    def _inside(self, x: int, y: int) -> bool:
        return 1 <= x <= self.width - 2 and 1 <= y <= self.height - 2

    def is_free(self, x: int, y: int) -> bool:
        return self._inside(x, y) and (x, y) != tuple(self.obstacle)

    def is_valid(self, state: Any) -> bool:
        return (
            isinstance(state, tuple)
            and len(state) == 3
            and self.is_free(state[0], state[1])
            and state[2] in (EAST, SOUTH, WEST, NORTH)
        )

    def states(self) -> List[GridState]:
        """Every valid state, ordered by row, column, heading."""
        return [
            GridState(x, y, d)
            for y in range(1, self.height - 1)
            for x in range(1, self.width - 1)
            if self.is_free(x, y)
            for d in range(4)
        ]

    def goal_violations(self, goals: Sequence[GoalId]) -> List[str]:
        problems = []
        for goal in goals:
            x, y = goal.cell
            if not self.is_free(x, y):
                problems.append(f"goal {goal.label} is not a free cell")
            elif (x, y) == (self.start.x, self.start.y):
                problems.append(f"goal {goal.label} coincides with the start")
        return problems


def grid_move(spec: GridSpec, s: GridState, a: int) -> GridState:
    """Apply one action; forward into a wall or the obstacle is a no-op."""
    if a == DiscreteAction.TURN_LEFT:
        return GridState(s.x, s.y, (s.dir + 3) % 4)
    if a == DiscreteAction.TURN_RIGHT:
        return GridState(s.x, s.y, (s.dir + 1) % 4)
    if a == DiscreteAction.FORWARD:
        dx, dy = HEADINGS[s.dir]
        if spec.is_free(s.x + dx, s.y + dy):
            return GridState(s.x + dx, s.y + dy, s.dir)
        return s
    if a == DiscreteAction.STAY:
        return s
    raise ContractViolation(f"unknown grid action {a!r}")


def grid_step(
    spec: GridSpec, s: GridState, a: int, step_count: int, goal: GoalId, rewarded: bool = False
) -> StepOutcome:
    """One gridworld transition with the sparse time-discounted reward.

    Reward ``1 - 0.9 * step_count / max_steps`` is paid when the agent enters
    the goal cell from another cell and ``rewarded`` is false, so an episode
    that tracks the flag is paid at most once. Otherwise 0.

    Raises:
        ContractViolation: If the state is invalid or ``step_count`` negative.
    """
    if not spec.is_valid(s):
        raise ContractViolation(f"invalid grid state {s!r}")
    if step_count < 0:
        raise ContractViolation(f"step_count must be non-negative, got {step_count}")
    goal_cell = goal.cell
    nxt = grid_move(spec, GridState(*s), a)
    at_goal = (nxt.x, nxt.y) == goal_cell
    entered = at_goal and not rewarded and (s[0], s[1]) != goal_cell
    reward = 1.0 - 0.9 * (step_count / spec.max_steps) if entered else 0.0
    return StepOutcome(nxt, reward, at_goal)


class ReachState(NamedTuple):
    x: float
    y: float
    z: float


DEFAULT_REACH_GOALS = (
    (0.2, 0.2, 0.2),
    (0.2, -0.2, 0.2),
    (-0.2, 0.2, 0.2),
    (-0.2, -0.2, 0.2),
)


@dataclass(frozen=True)
class ReachSpec:
    """Point-mass reach task.

    Attributes:
        start: Start position (m).
        step_scale (float): Displacement per unit action (m).
        goals: Target positions (m), addressed by ``r_<i>`` labels.
        horizon (int): Rollout length.
        tolerance (float): Distance under which the target counts as reached.
        feature_scale (float): Divisor applied to positions before they enter
            a network.
    """

    start: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    step_scale: float = 0.05
    goals: Tuple[Tuple[float, float, float], ...] = DEFAULT_REACH_GOALS
    horizon: int = 50
    tolerance: float = 0.01
    feature_scale: float = 0.2

    def __post_init__(self) -> None:
        if self.step_scale <= 0 or self.horizon <= 0 or self.tolerance <= 0:
            raise ContractViolation("step_scale, horizon and tolerance must be positive")
        reach = self.step_scale * self.horizon
        points = [np.asarray(g, dtype=float) for g in self.goals]
        for i, g in enumerate(points):
            if np.linalg.norm(g - np.asarray(self.start)) > reach:
                raise ContractViolation(f"reach goal r_{i} lies beyond {reach:.3f} m")
            for j in range(i):
                if np.allclose(g, points[j]):
                    raise ContractViolation(f"reach goals r_{j} and r_{i} coincide")

    def goal_position(self, goal: GoalId) -> np.ndarray:
        index = goal.target
        if index >= len(self.goals):
            raise ContractViolation(f"unknown reach goal {goal.label}")
        return np.asarray(self.goals[index], dtype=float)


def reach_step(spec: ReachSpec, s: ReachState, a: Any, goal_pos: np.ndarray) -> StepOutcome:
    """Move by ``step_scale * clip(a)``; reward is the negative distance to the goal.

    Raises:
        ContractViolation: If the state or action is not finite.
    """
    p = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ContractViolation(f"reach state must be finite, got {s!r}")
    action = np.asarray(ContinuousAction.clipped(a), dtype=float)
    p_next = p + spec.step_scale * action
    distance = float(np.linalg.norm(p_next - goal_pos))
    return StepOutcome(ReachState(*(float(v) for v in p_next)), -distance, distance < spec.tolerance)


class GridEnv:
    """Gridworld bound to one goal.

    ``calls`` counts this instance's transitions, so concurrent trainings can
    each report their own interactions. ``start`` opens an episode; the goal
    reward is paid on the first arrival of that episode only.
    """

    kind = "grid"
    discrete = True
    n_actions = 4

    def __init__(self, spec: GridSpec, goal: GoalId) -> None:
        problems = spec.goal_violations([goal])
        if problems:
            raise ContractViolation("; ".join(problems))
        self.spec = spec
        self.goal = goal
        self.calls = 0
        self._rewarded = False

    @property
    def horizon(self) -> int:
        return self.spec.horizon

    def start(self) -> GridState:
        self._rewarded = False
        return self.spec.start

    def simulate(self, state: GridState, action: int, t: int) -> StepOutcome:
        return grid_step(self.spec, state, action, t, self.goal)

    def transition(self, state: GridState, action: int, t: int) -> StepOutcome:
        interactions.add(1)
        self.calls += 1
        outcome = grid_step(self.spec, state, action, t, self.goal, self._rewarded)
        if outcome.at_goal:
            self._rewarded = True
        return outcome

    def states(self) -> List[GridState]:
        return self.spec.states()


class ReachEnv:
    """Point-mass reach task bound to one target."""

    kind = "reach"
    discrete = False
    action_dim = 3
    obs_dim = 3

    def __init__(self, spec: ReachSpec, goal: GoalId) -> None:
        self.spec = spec
        self.goal = goal
        self.goal_pos = spec.goal_position(goal)
        self.calls = 0

    @property
    def horizon(self) -> int:
        return self.spec.horizon

    def start(self) -> ReachState:
        return ReachState(*(float(v) for v in self.spec.start))

    def simulate(self, state: ReachState, action: Any, t: int) -> StepOutcome:
        return reach_step(self.spec, state, action, self.goal_pos)

    def transition(self, state: ReachState, action: Any, t: int) -> StepOutcome:
        interactions.add(1)
        self.calls += 1
        return self.simulate(state, action, t)

    def features(self, states: Sequence[ReachState]) -> np.ndarray:
        return np.asarray(states, dtype=float).reshape(-1, self.obs_dim) / self.spec.feature_scale


class BanditState(NamedTuple):
    index: int


class BanditEnv:
    """A single state with one fixed reward per action."""

    kind = "bandit"
    discrete = True

    def __init__(self, rewards: Sequence[float], horizon: int = 1, goal: Optional[GoalId] = None) -> None:
        if horizon < 1:
            raise ContractViolation("bandit horizon must be positive")
        self.rewards = tuple(float(r) for r in rewards)
        self.n_actions = len(self.rewards)
        self.horizon = horizon
        self.goal = goal
        self.calls = 0

    def start(self) -> BanditState:
        return BanditState(0)

    def simulate(self, state: BanditState, action: int, t: int) -> StepOutcome:
        if not 0 <= int(action) < self.n_actions:
            raise ContractViolation(f"bandit action {action!r} out of range")
        return StepOutcome(state, self.rewards[int(action)], False)

    def transition(self, state: BanditState, action: int, t: int) -> StepOutcome:
        interactions.add(1)
        self.calls += 1
        return self.simulate(state, action, t)

    def states(self) -> List[BanditState]:
        return [BanditState(0)]


def rollout(env: Any, policy: Policy, horizon: int, rng: RngStream, mode: str = "greedy") -> Trajectory:
    """Run ``policy`` for exactly ``horizon`` steps from the start state.

    The episode does not stop at the goal; ``reached`` records how many steps
    it took to first arrive there. Adds ``horizon`` to the interaction counter.

    Raises:
        ContractViolation: If ``horizon < 1``, the mode is unknown, or the
            policy emits an invalid distribution (the state is named).
    """
    if horizon < 1:
        raise ContractViolation(f"horizon must be at least 1, got {horizon}")
    if mode not in ("greedy", "sample"):
        raise ContractViolation(f"unknown rollout mode {mode!r}")
    state = env.start()
    steps = []
    reached = None
    for t in range(horizon):
        try:
            action = policy.act(state, t, rng.generator, mode)
        except ContractViolation as exc:
            raise ContractViolation(f"policy emitted an invalid distribution at state {tuple(state)}: {exc}") from exc
        outcome = env.transition(state, action, t)
        steps.append(Step(state, action))
        if reached is None and outcome.at_goal:
            reached = t + 1
        state = outcome.next_state
    return Trajectory(
        steps=tuple(steps),
        final_state=state,
        env_kind=env.kind,
        goal=env.goal,
        seed=rng.master_seed,
        horizon=horizon,
        reached=reached,
    )


def is_consistent(env: Any, traj: Trajectory) -> bool:
    """Whether consecutive states follow the environment's transition function."""
    states = traj.states + [traj.final_state]
    for t, step in enumerate(traj.steps):
        nxt = env.simulate(step.state, step.action, t).next_state
        if not np.allclose(np.asarray(nxt, dtype=float), np.asarray(states[t + 1], dtype=float)):
            return False
    return True
