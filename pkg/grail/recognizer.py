"""One-shot goal inference against a policy bank."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .core import GoalId, RngStream, Step, Trajectory
from .envs import interactions
from .errors import ContractViolation, GrailError
from .learners.bank import PolicyBank
from .scoring import ScoreMetric, score

log = logging.getLogger(__name__)

_FRACTION_SLACK = 1e-9


def observe_prefix(traj: Trajectory, fraction: float) -> Tuple[Step, ...]:
    """First ``max(1, ceil(fraction * meaningful_length))`` steps.

    The meaningful length stops at the step that first reached the goal, so
    the stay-padding after it never counts toward observability.

    Raises:
        ContractViolation: If ``fraction`` is outside (0, 1].
    """
    if not 0.0 < fraction <= 1.0:
        raise ContractViolation(f"fraction must lie in (0, 1], got {fraction}")
    n = max(1, math.ceil(fraction * traj.meaningful_length - _FRACTION_SLACK))
    return traj.steps[:n]


@dataclass
class ScoreReport:
    """Scores of one prefix against every goal and the chosen goal.

    Attributes:
        per_goal_scores (dict[GoalId, float]): Score per goal, in index order.
        chosen (GoalId): Highest-scoring goal, smallest index on ties.
        metric (ScoreMetric): Metric and parameters used.
        prefix_length (int): Observed steps scored.
        policy_calls (int): Policy state evaluations spent on this report.
        env_calls (int): Environment transitions during scoring; always 0.
        tied (bool): Whether another goal scored within the metric's tie
            tolerance of the best.
        seconds (float): Wall-clock scoring time.
    """

    per_goal_scores: Dict[GoalId, float]
    chosen: GoalId
    metric: ScoreMetric
    prefix_length: int
    policy_calls: int
    env_calls: int = 0
    tied: bool = False
    seconds: float = field(default=0.0, compare=False)

    def posterior(self, temperature: float = 1.0) -> Dict[GoalId, float]:
        """Softmax of scores / temperature. For display only; the argmax does not use it."""
        if temperature <= 0:
            raise ContractViolation(f"temperature must be positive, got {temperature}")
        goals = list(self.per_goal_scores)
        z = np.asarray([self.per_goal_scores[g] for g in goals]) / temperature
        p = np.exp(z - z.max())
        p /= p.sum()
        return {g: float(v) for g, v in zip(goals, p)}

    def to_dict(self, temperature: Optional[float] = None) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "chosen": self.chosen.label,
            "scores": {g.label: s for g, s in self.per_goal_scores.items()},
            **self.metric.describe(),
            "prefix_length": self.prefix_length,
            "policy_calls": self.policy_calls,
            "env_calls": self.env_calls,
            "tied": self.tied,
        }
        if temperature is not None:
            out["posterior"] = {g.label: p for g, p in self.posterior(temperature).items()}
        return out


def choose(scores: Dict[GoalId, float], tolerance: float = 0.0) -> Tuple[GoalId, bool]:
    """Argmax with the smallest-index tie-break; also reports whether it was tied.

    Goals scoring within ``tolerance`` of the best are tied with it.
    """
    ordered = sorted(scores, key=lambda g: g.index)
    values = [scores[g] for g in ordered]
    if any(math.isnan(v) for v in values):
        raise ContractViolation("scores must not be NaN")
    best = max(values)
    winners = [g for g, v in zip(ordered, values) if v >= best - tolerance]
    return winners[0], len(winners) > 1


def infer_goal(prefix: Sequence[Step], bank: PolicyBank, metric: ScoreMetric,
               rng: Optional[RngStream] = None, workers: int = 1) -> ScoreReport:
    """Score ``prefix`` against every policy in ``bank`` and pick the best goal.

    Each goal's sampling (``neg_w1`` on continuous policies) draws from its
    own child stream, so concurrent and sequential scoring agree.

    Raises:
        ContractViolation: If the prefix is empty.
        UnsupportedMetric: If the metric cannot score the bank's policy kind.
        GrailError: If scoring touched an environment.
    """
    prefix = tuple(prefix)
    if not prefix:
        raise ContractViolation("cannot infer a goal from an empty prefix")
    rng = rng or RngStream(0, "score")
    env_before = interactions.value
    calls_before = bank.policy_calls
    started = time.perf_counter()

    def run(goal: GoalId) -> float:
        return score(prefix, bank[goal], metric, rng.child(goal.label).generator)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            values = list(executor.map(run, bank.goals))
    else:
        values = [run(goal) for goal in bank.goals]
    scores = dict(zip(bank.goals, values))
    chosen, tied = choose(scores, metric.tie_tolerance)
    env_calls = interactions.value - env_before
    if env_calls != 0:
        raise GrailError(f"scoring performed {env_calls} environment interactions")
    if tied:
        log.debug("Score tie at %s between goals scoring %.6f", metric.kind, scores[chosen])
    return ScoreReport(
        per_goal_scores=scores,
        chosen=chosen,
        metric=metric,
        prefix_length=len(prefix),
        policy_calls=bank.policy_calls - calls_before,
        env_calls=env_calls,
        tied=tied,
        seconds=time.perf_counter() - started,
    )


class Recognizer:
    """Binds a bank to a metric and recognises goals from trajectories.

    Attributes:
        bank (PolicyBank): Policies to score against.
        metric (ScoreMetric): Scoring rule.
        rng (RngStream): Stream for sampling metrics.
    """

    def __init__(self, bank: PolicyBank, metric: ScoreMetric, rng: Optional[RngStream] = None, workers: int = 1) -> None:
        self.bank = bank
        self.metric = metric
        self.rng = rng or RngStream(0, "score")
        self.workers = workers

    def recognize_prefix(self, prefix: Sequence[Step], key: str = "prefix") -> ScoreReport:
        return infer_goal(prefix, self.bank, self.metric, self.rng.child(key), self.workers)

    def recognize(self, traj: Trajectory, fraction: float, key: str = "prefix") -> ScoreReport:
        """Observe the first ``fraction`` of ``traj`` and infer its goal."""
        return self.recognize_prefix(observe_prefix(traj, fraction), key)
