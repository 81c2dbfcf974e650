"""Shared domain types, RNG streams and the trajectory file format.

Everything here is environment-agnostic: grid and reach states are plain
named tuples defined in :mod:`grail.envs` and are only referenced lazily when
decoding trajectory files.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractViolation

PROB_TOLERANCE = 1e-9
_SEED_LIMIT = 2 ** 64


@dataclass(frozen=True)
class GoalId:
    """A candidate goal: its position in the task and a stable label.

    Equality and hashing use the label only; the index orders goals inside a
    task and drives the recognizer's tie-break.

    Attributes:
        index (int): Small non-negative position of the goal in its task.
        label (str): Self-describing name, ``g_<x>_<y>`` for grid cells or
            ``r_<i>`` for reach targets.
    """

    index: int = field(compare=False)
    label: str

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ContractViolation(f"goal index must be non-negative, got {self.index}")
        if not self.label:
            raise ContractViolation("goal label must be non-empty")

    @classmethod
    def grid(cls, index: int, x: int, y: int) -> "GoalId":
        return cls(index, f"g_{x}_{y}")

    @classmethod
    def reach(cls, index: int) -> "GoalId":
        return cls(index, f"r_{index}")

    @classmethod
    def from_label(cls, label: str, index: Optional[int] = None,
                   goals: Optional[Sequence["GoalId"]] = None) -> "GoalId":
        """Rebuild a goal from its label.

        With ``goals`` the label is looked up there and keeps that goal's
        index. Otherwise reach labels carry their own index and other labels
        need ``index``.

        Raises:
            ContractViolation: If the label is not among ``goals``, or no
                index can be determined.
        """
        if goals is not None:
            for goal in goals:
                if goal.label == label:
                    return goal
            raise ContractViolation(f"goal {label} is not one of {[g.label for g in goals]}")
        if index is None:
            if not (label.startswith("r_") and label[2:].isdigit()):
                raise ContractViolation(f"goal {label} carries no index; resolve it against the task goals")
            index = int(label[2:])
        return cls(index, label)

    @property
    def cell(self) -> Tuple[int, int]:
        """Grid coordinates encoded in a ``g_<x>_<y>`` label."""
        parts = self.label.split("_")
        if len(parts) != 3 or parts[0] != "g" or not all(p.isdigit() for p in parts[1:]):
            raise ContractViolation(f"{self.label} is not a grid goal label")
        return int(parts[1]), int(parts[2])

    @property
    def target(self) -> int:
        """Reach target index encoded in an ``r_<i>`` label."""
        if not (self.label.startswith("r_") and self.label[2:].isdigit()):
            raise ContractViolation(f"{self.label} is not a reach goal label")
        return int(self.label[2:])

    def __str__(self) -> str:
        return self.label


class DiscreteAction(IntEnum):
    """Grid actions. The code order is part of the trajectory file format."""

    TURN_LEFT = 0
    TURN_RIGHT = 1
    FORWARD = 2
    STAY = 3

    @property
    def symbol(self) -> str:
        return "LRFS"[self.value]


class ContinuousAction(NamedTuple):
    """A 3-component displacement command, each component in [-1, 1]."""

    a1: float
    a2: float
    a3: float

    @classmethod
    def clipped(cls, values: Iterable[float]) -> "ContinuousAction":
        arr = np.asarray(list(values), dtype=float)
        if arr.shape != (3,):
            raise ContractViolation(f"continuous action needs 3 components, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ContractViolation(f"continuous action must be finite, got {arr.tolist()}")
        arr = np.clip(arr, -1.0, 1.0)
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


Action = Union[DiscreteAction, ContinuousAction]


@dataclass(frozen=True)
class Step:
    state: Any
    action: Any


@dataclass(frozen=True)
class Trajectory:
    """A fixed-horizon sequence of (state, action) steps.

    Attributes:
        steps (tuple[Step, ...]): Exactly ``horizon`` steps.
        final_state: State reached after the last step.
        env_kind (str): ``"grid"``, ``"reach"`` or ``"bandit"``.
        goal (GoalId | None): Goal pursued by the agent, if known.
        seed (int): Seed of the stream that produced the trajectory.
        horizon (int): Number of steps.
        reached (int | None): Number of meaningful steps, i.e. steps up to and
            including the first one that reached the goal; ``None`` if the
            goal was never reached.
    """

    steps: Tuple[Step, ...]
    final_state: Any
    env_kind: str
    goal: Optional[GoalId]
    seed: int
    horizon: int
    reached: Optional[int] = None

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ContractViolation(f"horizon must be positive, got {self.horizon}")
        if len(self.steps) != self.horizon:
            raise ContractViolation(
                f"trajectory has {len(self.steps)} steps but horizon {self.horizon}"
            )
        if self.reached is not None and not 1 <= self.reached <= self.horizon:
            raise ContractViolation(f"reached must lie in [1, {self.horizon}], got {self.reached}")

    @property
    def meaningful_length(self) -> int:
        return self.reached if self.reached is not None else self.horizon

    @property
    def states(self) -> List[Any]:
        return [step.state for step in self.steps]

    @property
    def actions(self) -> List[Any]:
        return [step.action for step in self.steps]


@dataclass(frozen=True)
class DemoSet:
    """Demonstrations grouped by goal (the N_g trajectories of each goal)."""

    per_goal: Mapping[GoalId, Tuple[Trajectory, ...]]

    @property
    def goals(self) -> List[GoalId]:
        return sorted(self.per_goal, key=lambda g: g.index)

    def __getitem__(self, goal: GoalId) -> Tuple[Trajectory, ...]:
        return self.per_goal[goal]

    def __contains__(self, goal: object) -> bool:
        return goal in self.per_goal


@dataclass(frozen=True)
class GRDTask:
    goals: Tuple[GoalId, ...]
    demos: DemoSet
    observed: Tuple[Step, ...]


def validate_task(task: GRDTask) -> List[str]:
    """Check the invariants of a goal-recognition task.

    Returns:
        list[str]: Human-readable violations; empty when the task is well formed.
    """
    violations: List[str] = []
    if not task.goals:
        violations.append("goals empty")
    labels = [g.label for g in task.goals]
    indices = [g.index for g in task.goals]
    if len(set(labels)) != len(labels):
        violations.append("duplicate goal labels")
    if len(set(indices)) != len(indices):
        violations.append("duplicate goal indices")
    for goal in task.goals:
        if goal not in task.demos:
            violations.append(f"demos missing goal {goal.label}")
    kinds = set()
    horizons = set()
    for goal, trajectories in task.demos.per_goal.items():
        for traj in trajectories:
            if traj.goal is None or traj.goal.label != goal.label:
                found = traj.goal.label if traj.goal is not None else None
                violations.append(f"trajectory under {goal.label} is labelled {found}")
            kinds.add(traj.env_kind)
            horizons.add(traj.horizon)
    if len(kinds) > 1:
        violations.append(f"demos mix environments {sorted(kinds)}")
    if len(horizons) > 1:
        violations.append(f"demos mix horizons {sorted(horizons)}")
    if len(task.observed) < 1:
        violations.append("observed prefix empty")
    return violations


@dataclass(frozen=True, eq=False)
class ActionDistribution:
    """Action distribution for one state, or a batch of states (leading axis).

    Exactly one of ``probs`` or (``mean``, ``scale``) is set.
    """

    probs: Optional[np.ndarray] = None
    mean: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.probs is not None:
            if self.mean is not None or self.scale is not None:
                raise ContractViolation("distribution is either discrete or continuous, not both")
            probs = np.asarray(self.probs, dtype=float)
            if not np.all(np.isfinite(probs)) or np.any(probs < 0):
                raise ContractViolation(f"probabilities must be finite and non-negative: {probs}")
            if np.any(np.abs(probs.sum(axis=-1) - 1.0) > PROB_TOLERANCE):
                raise ContractViolation(f"probabilities must sum to 1: {probs}")
            object.__setattr__(self, "probs", probs)
        else:
            if self.mean is None or self.scale is None:
                raise ContractViolation("continuous distribution needs both mean and scale")
            mean = np.asarray(self.mean, dtype=float)
            scale = np.broadcast_to(np.asarray(self.scale, dtype=float), mean.shape).copy()
            if not np.all(np.isfinite(mean)):
                raise ContractViolation(f"mean must be finite: {mean}")
            if not np.all(np.isfinite(scale)) or np.any(scale <= 0):
                raise ContractViolation(f"scale must be positive: {scale}")
            object.__setattr__(self, "mean", mean)
            object.__setattr__(self, "scale", scale)

    @classmethod
    def categorical(cls, weights: Iterable[float]) -> "ActionDistribution":
        """Normalise non-negative weights along the last axis."""
        weights = np.asarray(weights, dtype=float)
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ContractViolation(f"weights must be finite and non-negative: {weights}")
        total = weights.sum(axis=-1, keepdims=True)
        if np.any(total <= 0):
            raise ContractViolation("weights must have a positive sum")
        return cls(probs=weights / total)

    @classmethod
    def gaussian(cls, mean: Iterable[float], scale: Union[float, Iterable[float]]) -> "ActionDistribution":
        return cls(mean=np.asarray(mean, dtype=float), scale=np.asarray(scale, dtype=float))

    @property
    def is_discrete(self) -> bool:
        return self.probs is not None

    @property
    def _values(self) -> np.ndarray:
        return self.probs if self.is_discrete else self.mean

    @property
    def batched(self) -> bool:
        return self._values.ndim == 2

    def __len__(self) -> int:
        return self._values.shape[0] if self.batched else 1

    def row(self, i: int) -> "ActionDistribution":
        if not self.batched:
            if i != 0:
                raise IndexError(i)
            return self
        if self.is_discrete:
            return ActionDistribution(probs=self.probs[i])
        return ActionDistribution(mean=self.mean[i], scale=self.scale[i])

    def mode(self) -> Action:
        """Greedy action: most probable code (lowest on ties) or the clipped mean."""
        if self.batched:
            raise ContractViolation("mode() needs a single-state distribution")
        if self.is_discrete:
            return DiscreteAction(int(np.argmax(self.probs)))
        return ContinuousAction.clipped(self.mean)

    def sample(self, rng: np.random.Generator) -> Action:
        if self.batched:
            raise ContractViolation("sample() needs a single-state distribution")
        if self.is_discrete:
            cumulative = np.cumsum(self.probs)
            code = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
            return DiscreteAction(min(code, len(self.probs) - 1))
        return ContinuousAction.clipped(self.mean + self.scale * rng.standard_normal(self.mean.shape))


class RngStream:
    """A named, hash-split random stream.

    The generator is seeded from SHA-256 of ``(master_seed, stream_key)`` so
    the same pair produces the same PCG64 bit stream on every platform, and
    distinct keys give independent streams. Streams are owned by one worker.
    """

    def __init__(self, master_seed: int, stream_key: str) -> None:
        if not stream_key:
            raise ContractViolation("stream key must be non-empty")
        if not -(_SEED_LIMIT // 2) <= master_seed < _SEED_LIMIT:
            raise ContractViolation(f"master seed {master_seed} is not a 64-bit integer")
        self.master_seed = int(master_seed)
        self.stream_key = stream_key
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.entropy)))

    @property
    def entropy(self) -> int:
        digest = hashlib.sha256(f"{self.master_seed}:{self.stream_key}".encode("utf-8")).digest()
        return int.from_bytes(digest, "little")

    def child(self, key: str) -> "RngStream":
        return RngStream(self.master_seed, f"{self.stream_key}/{key}")

    def __repr__(self) -> str:
        return f"RngStream({self.master_seed}, {self.stream_key!r})"


def derive_stream(master_seed: int, key: str) -> RngStream:
    """Return the deterministic stream for ``key`` under ``master_seed``."""
    return RngStream(master_seed, key)


def derive_seed(master_seed: int, key: str) -> int:
    """A non-negative 63-bit seed for nested components (e.g. a bank per seed)."""
    return derive_stream(master_seed, key).entropy & ((1 << 63) - 1)


class Policy:
    """Abstract goal-directed policy.

    Subclasses implement :meth:`_evaluate` for a batch of states. Every
    evaluated state increments :attr:`calls`, which the recognizer uses to
    account for scoring cost.

    Attributes:
        kind (str): Storage format tag (``tabular``, ``mlp`` or ``qtable``).
        discrete (bool): Whether the policy emits categorical distributions.
        calls (int): Number of states evaluated so far.
    """

    kind = "abstract"
    discrete = True

    def __init__(self) -> None:
        self.calls = 0
        self._lock = threading.Lock()

    def evaluate(self, states: Sequence[Any]) -> ActionDistribution:
        """Evaluate the policy on a batch of states in one pass.

        Raises:
            ContractViolation: If ``states`` is empty.
        """
        states = list(states)
        if not states:
            raise ContractViolation("cannot evaluate a policy on zero states")
        dist = self._evaluate(states)
        with self._lock:
            self.calls += len(states)
        return dist

    def _evaluate(self, states: List[Any]) -> ActionDistribution:
        raise NotImplementedError("Not implemented. Use a subclass for a specific policy kind.")

    def distribution(self, state: Any) -> ActionDistribution:
        return self.evaluate([state]).row(0)

    def act(self, state: Any, t: int, rng: np.random.Generator, mode: str = "greedy") -> Action:
        dist = self.distribution(state)
        return dist.mode() if mode == "greedy" else dist.sample(rng)


def _state_record(state: Any) -> List[Union[int, float]]:
    return [v if isinstance(v, int) else float(v) for v in state]


def _action_record(action: Any) -> List[Union[int, float]]:
    if isinstance(action, (int, np.integer)):
        return [int(action)]
    return [float(v) for v in action]


def encode_trajectory(traj: Trajectory) -> str:
    """Serialise a trajectory as one JSON Lines record."""
    record: Dict[str, Any] = {
        "env": traj.env_kind,
        "goal": traj.goal.label if traj.goal is not None else None,
        "seed": traj.seed,
        "horizon": traj.horizon,
        "steps": [{"s": _state_record(step.state), "a": _action_record(step.action)} for step in traj.steps],
        "final": _state_record(traj.final_state),
    }
    if traj.reached is not None:
        record["reached"] = traj.reached
    return json.dumps(record, separators=(",", ":"))


def _state_codec(env_kind: str):
    from .envs import BanditState, GridState, ReachState

    if env_kind == "grid":
        return lambda values: GridState(*(int(v) for v in values)), lambda values: DiscreteAction(int(values[0]))
    if env_kind == "reach":
        return lambda values: ReachState(*(float(v) for v in values)), ContinuousAction.clipped
    if env_kind == "bandit":
        return lambda values: BanditState(int(values[0])), lambda values: int(values[0])
    raise ContractViolation(f"unknown env kind {env_kind!r}")


def decode_trajectory(line: str, goals: Optional[Sequence[GoalId]] = None) -> Trajectory:
    """Parse one JSON Lines record.

    Args:
        line (str): The record.
        goals (Sequence[GoalId] | None): Task goals used to resolve the goal
            label to its indexed :class:`GoalId`.

    Raises:
        ContractViolation: If the record is malformed.
    """
    try:
        record = json.loads(line)
        make_state, make_action = _state_codec(record["env"])
        steps = tuple(Step(make_state(s["s"]), make_action(s["a"])) for s in record["steps"])
        label = record["goal"]
        goal = None if label is None else GoalId.from_label(label, goals=goals)
        return Trajectory(
            steps=steps,
            final_state=make_state(record["final"]),
            env_kind=record["env"],
            goal=goal,
            seed=int(record["seed"]),
            horizon=int(record["horizon"]),
            reached=record.get("reached"),
        )
    except (KeyError, TypeError, IndexError, AttributeError, ValueError) as exc:
        raise ContractViolation(f"malformed trajectory record: {exc}") from exc


def write_trajectories(path: Union[str, Path], trajectories: Iterable[Trajectory]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for traj in trajectories:
            fh.write(encode_trajectory(traj))
            fh.write("\n")
    return path


def read_trajectories(path: Union[str, Path], goals: Optional[Sequence[GoalId]] = None) -> List[Trajectory]:
    """Decode every non-blank line of a JSON Lines file.

    Raises:
        ContractViolation: If a record is malformed; names the file and line.
    """
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(decode_trajectory(line, goals))
            except ContractViolation as exc:
                raise ContractViolation(f"{path}:{number}: {exc}") from exc
    return out
