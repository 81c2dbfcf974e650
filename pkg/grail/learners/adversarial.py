"""Adversarial imitation: GAIL and AIRL.

Each round collects policy rollouts into a replay buffer, takes several
discriminator steps on balanced expert/policy batches (binary cross-entropy,
expert = 1) and then improves the policy with the clipped policy gradient on
the discriminator's reward.

GAIL scores ``D = sigmoid(g(s, a))`` and rewards the policy with
``-log(1 - D) = softplus(g)``. AIRL uses ``D = exp(f) / (exp(f) + pi(a|s))``
with ``f(s, a, s') = g(s, a) + gamma * h(s') - h(s)``, so its logit is
``f - log pi`` and that logit is the policy reward.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import GoalId, Policy, RngStream, Trajectory
from ..errors import ContractViolation, TrainingDiverged
from ..tinynn import AdamState, Mlp, adam_step
from .base import AdversarialParams, Learner
from .policies import StateIndex
from .ppo import collect, episodes_per_round, make_actor, returns_to_go

log = logging.getLogger(__name__)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-softplus(-x))


@dataclass
class Transitions:
    states: List[Any] = field(default_factory=list)
    actions: List[Any] = field(default_factory=list)
    next_states: List[Any] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.states)

    def take(self, rows: np.ndarray) -> "Transitions":
        return Transitions([self.states[i] for i in rows], [self.actions[i] for i in rows],
                           [self.next_states[i] for i in rows])


def expert_transitions(demos: Sequence[Trajectory]) -> Transitions:
    out = Transitions()
    for traj in demos:
        states = traj.states
        out.states.extend(states)
        out.actions.extend(traj.actions)
        out.next_states.extend(states[1:] + [traj.final_state])
    return out


class ReplayBuffer:
    """FIFO store of the most recent policy transitions."""

    def __init__(self, capacity: int) -> None:
        self._items: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def extend(self, states: Sequence[Any], actions: Sequence[Any], next_states: Sequence[Any]) -> None:
        self._items.extend(zip(states, actions, next_states))

    def sample(self, n: int, gen: np.random.Generator) -> Transitions:
        rows = gen.integers(0, len(self._items), n)
        picked = [self._items[i] for i in rows]
        return Transitions([p[0] for p in picked], [p[1] for p in picked], [p[2] for p in picked])


class TableHead:
    """Scalar per state (``n_actions=None``) or per (state, action)."""

    def __init__(self, index: StateIndex, n_actions: Optional[int], lr: float) -> None:
        self.index = index
        shape = (len(index),) if n_actions is None else (len(index), n_actions)
        self.params = np.zeros(shape).ravel()
        self._shape = shape
        self.lr = lr

    def _cells(self, states: Sequence[Any], actions: Optional[Sequence[Any]]):
        rows = self.index.require(states)
        if len(self._shape) == 1:
            return rows
        return rows * self._shape[1] + np.asarray([int(a) for a in actions], dtype=int)

    def __call__(self, states: Sequence[Any], actions: Optional[Sequence[Any]] = None) -> np.ndarray:
        return self.params[self._cells(states, actions)]

    def gradient(self, states: Sequence[Any], actions: Optional[Sequence[Any]], upstream: np.ndarray) -> np.ndarray:
        grad = np.zeros_like(self.params)
        np.add.at(grad, self._cells(states, actions), upstream)
        return grad


class MlpHead:
    """Scalar Mlp over scaled states, optionally concatenated with actions."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: Tuple[int, ...], gen: np.random.Generator,
                 feature_scale: float, lr: float) -> None:
        self.net = Mlp.initialise((obs_dim + act_dim, *hidden, 1), gen)
        self.obs_dim = obs_dim
        self.feature_scale = feature_scale
        self.lr = lr

    @property
    def params(self) -> np.ndarray:
        return self.net.params

    @params.setter
    def params(self, values: np.ndarray) -> None:
        self.net.load(values)

    def _inputs(self, states: Sequence[Any], actions: Optional[Sequence[Any]]) -> np.ndarray:
        x = np.asarray(states, dtype=float).reshape(-1, self.obs_dim) / self.feature_scale
        if actions is None:
            return x
        return np.concatenate([x, np.asarray(actions, dtype=float).reshape(len(x), -1)], axis=1)

    def __call__(self, states: Sequence[Any], actions: Optional[Sequence[Any]] = None) -> np.ndarray:
        return self.net(self._inputs(states, actions))[:, 0]

    def gradient(self, states: Sequence[Any], actions: Optional[Sequence[Any]], upstream: np.ndarray) -> np.ndarray:
        return self.net.backward(self._inputs(states, actions), np.asarray(upstream)[:, None])


def _make_head(env: Any, with_actions: bool, hp: AdversarialParams, gen: np.random.Generator):
    if env.discrete:
        return TableHead(StateIndex(env.states()), env.n_actions if with_actions else None, hp.policy.table_lr)
    act_dim = env.action_dim if with_actions else 0
    return MlpHead(env.obs_dim, act_dim, hp.policy.hidden, gen, env.spec.feature_scale, hp.disc_lr)


class RewardHead:
    """Learned AIRL reward ``f(s, a, s') = g(s, a) + gamma * h(s') - h(s)``.

    Public queries increment :attr:`calls`; training reads the heads directly.
    """

    def __init__(self, g: Any, h: Any, gamma: float) -> None:
        self.g = g
        self.h = h
        self.gamma = gamma
        self.calls = 0

    def _shaped(self, t: Transitions) -> np.ndarray:
        return self.g(t.states, t.actions) + self.gamma * self.h(t.next_states) - self.h(t.states)

    def reward(self, state: Any, action: Any) -> float:
        """The action-dependent term ``g(s, a)``."""
        self.calls += 1
        return float(self.g([state], [action])[0])

    def shaped(self, state: Any, action: Any, next_state: Any) -> float:
        self.calls += 1
        return float(self._shaped(Transitions([state], [action], [next_state]))[0])


class AdversarialTrainer:
    """Shared round loop; ``variant`` is ``"gail"`` or ``"airl"``.

    Attributes:
        history (list[dict]): Per-round discriminator loss and accuracy (on a
            fresh expert sample against the latest rollouts) and mean return.
    """

    def __init__(self, variant: str, demos: Sequence[Trajectory], env: Any, hp: AdversarialParams, rng: RngStream) -> None:
        if variant not in ("gail", "airl"):
            raise ContractViolation(f"unknown adversarial variant {variant!r}")
        if not demos:
            raise ContractViolation(f"{variant} needs at least one demonstration")
        if any(t.env_kind != env.kind for t in demos):
            raise ContractViolation(f"{variant} demonstrations do not match the {env.kind} environment")
        self.variant = variant
        self.env = env
        self.hp = hp
        self.gen = rng.generator
        self.expert = expert_transitions(demos)
        self.actor = make_actor(env, hp.policy, self.gen)
        self.g = _make_head(env, True, hp, self.gen)
        self.h = _make_head(env, False, hp, self.gen) if variant == "airl" else None
        size = self.g.params.size + (self.h.params.size if self.h is not None else 0)
        self._adam = AdamState(self.g.lr, size)
        self.buffer = ReplayBuffer(hp.replay_capacity)
        self.history: List[Dict[str, float]] = []

    def logits(self, t: Transitions) -> np.ndarray:
        out = self.g(t.states, t.actions)
        if self.h is not None:
            out = out + self.hp.policy.gamma * self.h(t.next_states) - self.h(t.states)
            out = out - self.actor.log_prob(t.states, t.actions)
        return out

    def policy_reward(self, t: Transitions) -> np.ndarray:
        logits = self.logits(t)
        return logits if self.variant == "airl" else softplus(logits)

    def _gradient(self, t: Transitions, upstream: np.ndarray) -> np.ndarray:
        grad_g = self.g.gradient(t.states, t.actions, upstream)
        if self.h is None:
            return grad_g
        grad_h = (self.h.gradient(t.next_states, None, self.hp.policy.gamma * upstream)
                  + self.h.gradient(t.states, None, -upstream))
        return np.concatenate([grad_g, grad_h])

    def _sample_expert(self) -> Transitions:
        return self.expert.take(self.gen.integers(0, len(self.expert), self.hp.demo_batch))

    def discriminator_step(self, index: int) -> Tuple[float, float]:
        """One BCE step on ``demo_batch`` expert vs as many replayed policy samples."""
        expert = self._sample_expert()
        policy = self.buffer.sample(self.hp.demo_batch, self.gen)
        le, lp = self.logits(expert), self.logits(policy)
        n = len(le) + len(lp)
        loss = float((softplus(-le).sum() + softplus(lp).sum()) / n)
        if not np.isfinite(loss):
            raise TrainingDiverged(self.variant, index, f"discriminator loss {loss}")
        grad = self._gradient(expert, (sigmoid(le) - 1.0) / n) + self._gradient(policy, sigmoid(lp) / n)
        flat = self.g.params if self.h is None else np.concatenate([self.g.params, self.h.params])
        updated = adam_step(self._adam, flat, grad, self.variant)
        self.g.params = updated[:self.g.params.size]
        if self.h is not None:
            self.h.params = updated[self.g.params.size:]
        accuracy = float(((le > 0).sum() + (lp < 0).sum()) / n)
        return loss, accuracy

    def accuracy(self, policy: Transitions) -> float:
        expert = self._sample_expert()
        le, lp = self.logits(expert), self.logits(policy)
        return float(((le > 0).sum() + (lp < 0).sum()) / (len(le) + len(lp)))

    def run(self) -> Policy:
        n_episodes = episodes_per_round(self.hp.policy.steps_per_round, self.env.horizon)
        for index in range(self.hp.rounds):
            batch = collect(self.env, self.actor, n_episodes, self.gen)
            self.buffer.extend(batch.states, batch.actions, batch.next_states)
            loss = 0.0
            for _ in range(self.hp.disc_updates_per_round):
                loss, _ = self.discriminator_step(index)
            fresh = Transitions(batch.states, batch.actions, batch.next_states)
            rows = self.gen.integers(0, len(fresh), self.hp.demo_batch)
            accuracy = self.accuracy(fresh.take(rows))
            rewards = self.policy_reward(fresh)
            if not np.all(np.isfinite(rewards)):
                raise TrainingDiverged(self.variant, index, "non-finite policy reward")
            returns = returns_to_go(rewards, batch.episodes, batch.horizon, self.hp.policy.gamma)
            self.actor.update(batch, returns, self.hp.policy, self.gen, self.variant, index)
            self.history.append({"round": index, "disc_loss": loss, "disc_accuracy": accuracy,
                                 "mean_return": batch.mean_return})
            log.debug("%s round %d: disc loss %.4f, accuracy %.3f", self.variant, index, loss, accuracy)
        return self.actor.policy()

    def reward_head(self) -> RewardHead:
        if self.h is None:
            raise ContractViolation("only AIRL learns a reward head")
        return RewardHead(self.g, self.h, self.hp.policy.gamma)


def gail_fit(demos: Sequence[Trajectory], env: Any, hp: AdversarialParams, rng: RngStream) -> Policy:
    return AdversarialTrainer("gail", demos, env, hp, rng).run()


def airl_fit(demos: Sequence[Trajectory], env: Any, hp: AdversarialParams, rng: RngStream) -> Tuple[Policy, RewardHead]:
    trainer = AdversarialTrainer("airl", demos, env, hp, rng)
    policy = trainer.run()
    return policy, trainer.reward_head()


class GailLearner(Learner):
    name = "gail"

    def __init__(self, params: AdversarialParams = AdversarialParams()) -> None:
        super().__init__(params)
        self.history: Dict[GoalId, List[Dict[str, float]]] = {}

    def fit(self, goal, demos, env, rng):
        trainer = AdversarialTrainer(self.name, demos, env, self.params, rng)
        policy = trainer.run()
        self.history[goal] = trainer.history
        return policy


class AirlLearner(GailLearner):
    """AIRL; reward heads are kept in memory only, keyed by goal."""

    name = "airl"

    def __init__(self, params: AdversarialParams = AdversarialParams()) -> None:
        super().__init__(params)
        self.reward_heads: Dict[GoalId, RewardHead] = {}

    def fit(self, goal, demos, env, rng):
        trainer = AdversarialTrainer(self.name, demos, env, self.params, rng)
        policy = trainer.run()
        self.history[goal] = trainer.history
        self.reward_heads[goal] = trainer.reward_head()
        return policy
