"""Learners that turn demonstrations or rewards into a bank of goal-directed policies."""

from typing import Any, Dict, Optional, Type

from ..errors import ContractViolation
from .adversarial import AirlLearner, GailLearner, RewardHead, airl_fit, gail_fit
from .bank import PolicyBank, load_bank, save_bank, train_bank
from .base import AdversarialParams, BcParams, Learner, PpoParams, QParams
from .bc import BcLearner, bc_fit_mlp, bc_fit_tabular
from .policies import GaussianMlpPolicy, QPolicy, QTable, StateIndex, TabularPolicy
from .ppo import PpoLearner, ppo_true_reward
from .qlearning import QLearner, greedy_reach_steps, qlearn

LEARNERS: Dict[str, Type[Learner]] = {
    "bc": BcLearner,
    "gail": GailLearner,
    "airl": AirlLearner,
    "qlearning": QLearner,
    "ppo": PpoLearner,
}


def make_learner(name: str, params: Optional[Any] = None) -> Learner:
    """Instantiate a learner by registry name, with default hyperparameters unless given."""
    try:
        cls = LEARNERS[name]
    except KeyError:
        raise ContractViolation(f"unknown learner {name!r}; expected one of {sorted(LEARNERS)}") from None
    return cls() if params is None else cls(params)


__all__ = [
    "AdversarialParams", "AirlLearner", "BcLearner", "BcParams", "GailLearner", "GaussianMlpPolicy", "LEARNERS",
    "Learner", "PolicyBank", "PpoLearner", "PpoParams", "QLearner", "QParams", "QPolicy", "QTable", "RewardHead",
    "StateIndex", "TabularPolicy", "airl_fit", "bc_fit_mlp", "bc_fit_tabular", "gail_fit", "load_bank",
    "greedy_reach_steps", "make_learner", "ppo_true_reward", "qlearn", "save_bank", "train_bank",
]
