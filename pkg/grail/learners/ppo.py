"""Clipped policy-gradient optimisation with a learned value baseline.

Advantages are discounted returns-to-go over the fixed horizon minus the
value estimate, normalised per batch. The same actor-critics drive PPO on
the true reward and the policy step of GAIL and AIRL.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, List, Sequence

import numpy as np

from ..core import ContinuousAction, Policy, RngStream
from ..errors import TrainingDiverged
from ..tinynn import AdamState, Mlp, adam_step
from .base import Learner, PpoParams
from .policies import LOG_SCALE_BOUNDS, GaussianMlpPolicy, StateIndex, TabularPolicy, softmax

log = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class Batch:
    """Transitions from ``episodes`` consecutive fixed-horizon episodes.

    Attributes:
        raw (np.ndarray): Sampled action codes (discrete) or pre-clip
            Gaussian samples (continuous), used for the likelihood ratio.
        logp (np.ndarray): Log-probability of ``raw`` under the sampling policy.
    """

    states: List[Any]
    actions: List[Any]
    raw: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    next_states: List[Any]
    episodes: int
    horizon: int

    def __len__(self) -> int:
        return len(self.states)

    @property
    def mean_return(self) -> float:
        return float(self.rewards.reshape(self.episodes, self.horizon).sum(axis=1).mean())


def episodes_per_round(steps_per_round: int, horizon: int) -> int:
    return max(1, math.ceil(steps_per_round / horizon))


def collect(env: Any, actor: Any, n_episodes: int, gen: np.random.Generator) -> Batch:
    """Sample ``n_episodes`` full-horizon episodes from ``actor`` in ``env``."""
    states, actions, raws, logps, rewards, nexts = [], [], [], [], [], []
    for _ in range(n_episodes):
        state = env.start()
        for t in range(env.horizon):
            raw, action, logp = actor.sample(state, gen)
            outcome = env.transition(state, action, t)
            states.append(state)
            actions.append(action)
            raws.append(raw)
            logps.append(logp)
            rewards.append(outcome.reward)
            nexts.append(outcome.next_state)
            state = outcome.next_state
    return Batch(states, actions, np.asarray(raws), np.asarray(logps, dtype=float), np.asarray(rewards, dtype=float),
                 nexts, n_episodes, env.horizon)


def returns_to_go(rewards: np.ndarray, episodes: int, horizon: int, gamma: float) -> np.ndarray:
    r = np.asarray(rewards, dtype=float).reshape(episodes, horizon)
    out = np.zeros_like(r)
    running = np.zeros(episodes)
    for t in range(horizon - 1, -1, -1):
        running = r[:, t] + gamma * running
        out[:, t] = running
    return out.ravel()


def _normalise(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def _surrogate_coefficients(logp: np.ndarray, old_logp: np.ndarray, adv: np.ndarray, clip: float) -> np.ndarray:
    """d(clipped surrogate)/d(logp) per sample, before averaging."""
    ratio = np.exp(logp - old_logp)
    active = np.where(adv >= 0, ratio < 1.0 + clip, ratio > 1.0 - clip)
    return active * ratio * adv


class TabularActorCritic:
    """Softmax logits and state values over an explicit state list."""

    def __init__(self, states: Sequence[Any], n_actions: int, hp: PpoParams) -> None:
        self.index = StateIndex(states)
        self.n_actions = n_actions
        self.logits = np.zeros((len(self.index), n_actions))
        self.values = np.zeros(len(self.index))
        self._adam_pi = AdamState(hp.table_lr, self.logits.size)
        self._adam_v = AdamState(hp.table_lr, self.values.size)
        self._rows = {s: i for i, s in enumerate(self.index.states)}

    def sample(self, state: Any, gen: np.random.Generator):
        probs = softmax(self.logits[self._rows[tuple(state)]])
        a = min(int(np.searchsorted(np.cumsum(probs), gen.random(), side="right")), self.n_actions - 1)
        return a, a, float(np.log(probs[a]))

    def log_prob(self, states: Sequence[Any], actions: Sequence[Any]) -> np.ndarray:
        rows = self.index.require(states)
        z = self.logits[rows] - self.logits[rows].max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return logp[np.arange(len(rows)), np.asarray([int(a) for a in actions])]

    def update(self, batch: Batch, returns: np.ndarray, hp: PpoParams, gen: np.random.Generator, stage: str, index: int) -> None:
        rows = self.index.require(batch.states)
        codes = batch.raw.astype(int)
        n = len(rows)
        adv = _normalise(returns - self.values[rows])
        onehot = np.eye(self.n_actions)[codes]
        for _ in range(hp.epochs):
            probs = softmax(self.logits[rows])
            logp = np.log(probs[np.arange(n), codes])
            coeff = _surrogate_coefficients(logp, batch.logp, adv, hp.clip) / n
            grad = np.zeros_like(self.logits)
            np.add.at(grad, rows, coeff[:, None] * (onehot - probs))
            self.logits = adam_step(self._adam_pi, self.logits.ravel(), -grad.ravel(), stage).reshape(self.logits.shape)
            grad_v = np.zeros_like(self.values)
            np.add.at(grad_v, rows, 2.0 * (self.values[rows] - returns) / n)
            self.values = adam_step(self._adam_v, self.values, grad_v, stage)
        if not np.all(np.isfinite(self.logits)):
            raise TrainingDiverged(stage, index, "non-finite policy logits")

    def policy(self) -> TabularPolicy:
        return TabularPolicy.from_logits(self.index, self.logits)


def gaussian_log_prob(samples: np.ndarray, mean: np.ndarray, log_scale: np.ndarray) -> np.ndarray:
    z = (samples - mean) / np.exp(log_scale)
    return -0.5 * np.sum(z ** 2, axis=-1) - np.sum(log_scale) - 0.5 * mean.shape[-1] * _LOG_2PI


class GaussianActorCritic:
    """Gaussian Mlp policy with a learned log-scale and an Mlp value function.

    Actions are sampled unclipped; the environment receives the clipped
    sample and the likelihood ratio uses the unclipped one.
    """

    def __init__(self, obs_dim: int, act_dim: int, hp: PpoParams, gen: np.random.Generator, feature_scale: float = 1.0) -> None:
        self.net = Mlp.initialise((obs_dim, *hp.hidden, act_dim), gen, output_gain=0.01)
        self.log_scale = np.full(act_dim, hp.init_log_scale)
        self.value = Mlp.initialise((obs_dim, *hp.hidden, 1), gen)
        self.feature_scale = feature_scale
        self._adam_pi = AdamState(hp.lr, self.net.n_params + act_dim)
        self._adam_v = AdamState(hp.lr, self.value.n_params)

    def features(self, states: Sequence[Any]) -> np.ndarray:
        return np.asarray(states, dtype=float).reshape(-1, self.net.sizes[0]) / self.feature_scale

    def sample(self, state: Any, gen: np.random.Generator):
        mean = self.net(self.features([state]))[0]
        u = mean + np.exp(self.log_scale) * gen.standard_normal(mean.shape)
        return u, ContinuousAction.clipped(u), float(gaussian_log_prob(u, mean, self.log_scale))

    def log_prob(self, states: Sequence[Any], actions: Sequence[Any]) -> np.ndarray:
        mean = self.net(self.features(states))
        return gaussian_log_prob(np.asarray(actions, dtype=float), mean, self.log_scale)

    def update(self, batch: Batch, returns: np.ndarray, hp: PpoParams, gen: np.random.Generator, stage: str, index: int) -> None:
        x = self.features(batch.states)
        u = np.asarray(batch.raw, dtype=float)
        adv = _normalise(returns - self.value(x)[:, 0])
        n_net = self.net.n_params
        for _ in range(hp.epochs):
            order = gen.permutation(len(x))
            for start in range(0, len(x), hp.batch):
                rows = order[start:start + hp.batch]
                m = len(rows)
                mean = self.net(x[rows])
                scale = np.exp(self.log_scale)
                diff = u[rows] - mean
                logp = gaussian_log_prob(u[rows], mean, self.log_scale)
                coeff = _surrogate_coefficients(logp, batch.logp[rows], adv[rows], hp.clip) / m
                grad_mean = -coeff[:, None] * diff / scale ** 2
                grad_log_scale = -np.sum(coeff[:, None] * ((diff / scale) ** 2 - 1.0), axis=0)
                flat = np.concatenate([self.net.params, self.log_scale])
                grads = np.concatenate([self.net.backward(x[rows], grad_mean), grad_log_scale])
                updated = adam_step(self._adam_pi, flat, grads, stage)
                self.net.load(updated[:n_net])
                self.log_scale = np.clip(updated[n_net:], *LOG_SCALE_BOUNDS)
                v = self.value(x[rows])[:, 0]
                grad_v = self.value.backward(x[rows], (2.0 * (v - returns[rows]) / m)[:, None])
                self.value.load(adam_step(self._adam_v, self.value.params, grad_v, stage))
        if not self.net.is_finite():
            raise TrainingDiverged(stage, index, "non-finite policy parameters")

    def policy(self) -> GaussianMlpPolicy:
        return GaussianMlpPolicy(self.net.copy(), self.log_scale.copy(), self.feature_scale)


def make_actor(env: Any, hp: PpoParams, gen: np.random.Generator):
    if env.discrete:
        return TabularActorCritic(env.states(), env.n_actions, hp)
    return GaussianActorCritic(env.obs_dim, env.action_dim, hp, gen, env.spec.feature_scale)


def ppo_true_reward(env: Any, hp: PpoParams, rng: RngStream) -> Policy:
    """Train a goal-directed policy on the environment's own reward."""
    gen = rng.generator
    actor = make_actor(env, hp, gen)
    n_episodes = episodes_per_round(hp.steps_per_round, env.horizon)
    for index in range(hp.rounds):
        batch = collect(env, actor, n_episodes, gen)
        actor.update(batch, returns_to_go(batch.rewards, batch.episodes, batch.horizon, hp.gamma), hp, gen, "ppo", index)
        log.debug("ppo round %d: mean return %.4f", index, batch.mean_return)
    return actor.policy()


class PpoLearner(Learner):
    """Reward-driven baseline; ignores demonstrations."""

    name = "ppo"
    uses_demos = False
    uses_reward = True

    def __init__(self, params: PpoParams = PpoParams()) -> None:
        super().__init__(params)

    def fit(self, goal, demos, env, rng):
        return ppo_true_reward(env, self.params, rng)
