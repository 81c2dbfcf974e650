"""Tabular Q-learning with epsilon-greedy exploration over fixed-horizon episodes."""

from __future__ import annotations

import logging
from typing import Any, Optional, Tuple

import numpy as np

from ..core import RngStream
from ..errors import ContractViolation
from .base import Learner, QParams
from .policies import QPolicy, QTable

log = logging.getLogger(__name__)


def qlearn(env: Any, hp: QParams, rng: RngStream) -> Tuple[QTable, QPolicy]:
    """Learn ``Q_g`` by interacting with ``env`` for ``hp.episodes`` episodes.

    The first arrival at the goal and the last step of each episode are
    terminal. Episodes still run to the horizon so visit counts cover
    episodes x horizon, but nothing is learned after the arrival. Greedy
    ties are broken uniformly at random; all randomness for an episode is
    drawn up front from the stream.

    Returns:
        tuple[QTable, QPolicy]: The table (with visit counts) and its
        Boltzmann policy at ``hp.temperature``.
    """
    if not env.discrete:
        raise ContractViolation("Q-learning needs a discrete environment")
    table = QTable.zeros(env.states(), env.n_actions)
    q, visits = table.q, table.visits
    rows = {s: i for i, s in enumerate(table.index.states)}
    horizon = env.horizon
    gen = rng.generator
    for episode in range(hp.episodes):
        explore = gen.random(horizon) < hp.epsilon
        random_actions = gen.integers(0, env.n_actions, horizon)
        tie_draws = gen.random(horizon)
        state = env.start()
        learning = True
        for t in range(horizon):
            i = rows[tuple(state)]
            if explore[t]:
                a = int(random_actions[t])
            else:
                best = np.flatnonzero(q[i] == q[i].max())
                a = int(best[int(tie_draws[t] * len(best))])
            outcome = env.transition(state, a, t)
            visits[i, a] += 1
            if learning:
                target = outcome.reward
                if t < horizon - 1 and not outcome.at_goal:
                    target += hp.gamma * q[rows[tuple(outcome.next_state)]].max()
                q[i, a] += hp.alpha * (target - q[i, a])
                learning = not outcome.at_goal
            state = outcome.next_state
        if (episode + 1) % 5000 == 0:
            log.debug("qlearning episode %d: max Q at start %.4f", episode + 1, q[rows[tuple(env.start())]].max())
    return table, QPolicy(table, hp.temperature)


def greedy_reach_steps(env: Any, table: QTable) -> Optional[int]:
    """Steps the greedy policy of ``table`` needs to reach the goal, or None.

    Uses the pure transition, so nothing is added to the interaction count.
    """
    rows = {s: i for i, s in enumerate(table.index.states)}
    state = env.start()
    for t in range(env.horizon):
        a = int(np.argmax(table.q[rows[tuple(state)]]))
        outcome = env.simulate(state, a, t)
        if outcome.at_goal:
            return t + 1
        state = outcome.next_state
    return None


class QLearner(Learner):
    """Reward-driven baseline; ignores demonstrations."""

    name = "qlearning"
    uses_demos = False
    uses_reward = True

    def __init__(self, params: QParams = QParams()) -> None:
        super().__init__(params)

    def fit(self, goal, demos, env, rng):
        table, policy = qlearn(env, self.params, rng)
        if env.kind == "grid":
            steps = greedy_reach_steps(env, table)
            if steps is None:
                log.warning("Greedy Q policy for %s does not reach the goal within %d steps", goal, env.horizon)
            else:
                log.debug("Greedy Q policy for %s reaches the goal in %d steps", goal, steps)
        return policy
