"""Hyperparameter records and the learner interface."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

from ..core import GoalId, Policy, RngStream, Trajectory
from ..errors import ContractViolation


def _check(problems: List[str], owner: str) -> None:
    if problems:
        raise ContractViolation(f"invalid {owner} hyperparameters: " + "; ".join(problems))


def _rates(record: Any, *names: str) -> List[str]:
    return [f"{name} must be positive" for name in names if not getattr(record, name) > 0]


def _discount(gamma: float) -> List[str]:
    return [] if 0.0 <= gamma < 1.0 else [f"gamma must lie in [0, 1), got {gamma}"]


@dataclass(frozen=True)
class BcParams:
    """Behavioral cloning.

    Attributes:
        batch (int): Mini-batch size for the network variant.
        lr (float): Adam learning rate.
        epochs (int): Passes over the demonstration pairs.
        laplace (float): Additive smoothing for the tabular variant.
        hidden (tuple[int, ...]): Hidden layer widths.
    """

    batch: int = 8
    lr: float = 1e-3
    epochs: int = 50
    laplace: float = 1.0
    hidden: Tuple[int, ...] = (64, 64)

    def __post_init__(self) -> None:
        _check(_rates(self, "batch", "lr", "laplace") + ([] if self.epochs >= 0 else ["epochs must be >= 0"]), "bc")


@dataclass(frozen=True)
class QParams:
    alpha: float = 0.1
    epsilon: float = 0.1
    gamma: float = 0.95
    episodes: int = 20000
    temperature: float = 1.0

    def __post_init__(self) -> None:
        problems = _rates(self, "alpha", "temperature") + _discount(self.gamma)
        if not 0.0 <= self.epsilon <= 1.0:
            problems.append("epsilon must lie in [0, 1]")
        if self.episodes < 0:
            problems.append("episodes must be >= 0")
        _check(problems, "qlearning")


@dataclass(frozen=True)
class PpoParams:
    """Clipped policy-gradient settings, shared by PPO and the adversarial inner loop.

    Attributes:
        clip (float): Surrogate ratio clip.
        gamma (float): Discount for returns-to-go.
        lr (float): Adam rate for network parameters.
        table_lr (float): Adam rate for tabular logits and values.
        epochs (int): Optimisation passes over each collected batch.
        batch (int): Mini-batch size for network updates.
        rounds (int): Collect-then-update iterations.
        steps_per_round (int): Environment steps collected per round.
        init_log_scale (float): Initial log standard deviation (continuous).
        hidden (tuple[int, ...]): Hidden widths of policy and value networks.
    """

    clip: float = 0.2
    gamma: float = 0.95
    lr: float = 3e-4
    table_lr: float = 0.05
    epochs: int = 4
    batch: int = 64
    rounds: int = 200
    steps_per_round: int = 512
    init_log_scale: float = -0.5
    hidden: Tuple[int, ...] = (64, 64)

    def __post_init__(self) -> None:
        problems = _rates(self, "clip", "lr", "table_lr", "epochs", "batch", "steps_per_round") + _discount(self.gamma)
        if self.rounds < 0:
            problems.append("rounds must be >= 0")
        _check(problems, "ppo")


@dataclass(frozen=True)
class AdversarialParams:
    """GAIL and AIRL settings; the policy step reuses :class:`PpoParams`.

    Attributes:
        disc_lr (float): Adam rate for network discriminators / reward heads.
        disc_updates_per_round (int): Discriminator steps per round.
        replay_capacity (int): Policy transitions kept for the discriminator.
        demo_batch (int): Expert samples per discriminator step (matched by
            as many policy samples).
    """

    disc_lr: float = 3e-4
    disc_updates_per_round: int = 8
    replay_capacity: int = 512
    demo_batch: int = 16
    policy: PpoParams = field(default_factory=lambda: PpoParams(batch=32))

    def __post_init__(self) -> None:
        _check(_rates(self, "disc_lr", "disc_updates_per_round", "replay_capacity", "demo_batch"), "adversarial")

    @property
    def rounds(self) -> int:
        return self.policy.rounds


def as_dict(params: Any) -> Dict[str, Any]:
    return dataclasses.asdict(params)


class Learner:
    """Abstract learner that produces one goal-directed policy.

    Attributes:
        name (str): Registry name (``bc``, ``qlearning``, ``ppo``, ``gail``, ``airl``).
        uses_demos (bool): Whether training reads demonstrations.
        uses_reward (bool): Whether training reads the environment reward.
        params: Hyperparameter record.
    """

    name = "abstract"
    uses_demos = True
    uses_reward = False

    def __init__(self, params: Any) -> None:
        self.params = params

    def fit(self, goal: GoalId, demos: Sequence[Trajectory], env: Any, rng: RngStream) -> Policy:
        """Train the policy for ``goal``.

        Args:
            goal (GoalId): Goal being learned.
            demos (Sequence[Trajectory]): Training demonstrations for ``goal``.
            env: Environment bound to ``goal`` (unused by offline learners).
            rng (RngStream): The goal's training stream.

        Raises:
            NotImplementedError: Must be overridden by subclasses.
        """
        raise NotImplementedError("Not implemented. Use a subclass for a specific learner.")

    def hyperparams(self) -> Dict[str, Any]:
        return as_dict(self.params)
