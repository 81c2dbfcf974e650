"""Behavioral cloning: Laplace-smoothed counts or an Mlp regression."""

from __future__ import annotations

import logging
from typing import Any, Sequence

import numpy as np

from ..core import Policy, RngStream, Trajectory
from ..errors import ContractViolation, TrainingDiverged
from ..tinynn import AdamState, Mlp, adam_step
from .base import BcParams, Learner
from .policies import LOG_SCALE_BOUNDS, GaussianMlpPolicy, StateIndex, TabularPolicy

log = logging.getLogger(__name__)

_MIN_SCALE = 1e-3


def _pairs(demos: Sequence[Trajectory]):
    if not demos:
        raise ContractViolation("behavioral cloning needs at least one demonstration")
    states = [step.state for traj in demos for step in traj.steps]
    actions = [step.action for traj in demos for step in traj.steps]
    return states, actions


def bc_fit_tabular(demos: Sequence[Trajectory], alpha: float = 1.0, n_actions: int = 4) -> TabularPolicy:
    """``pi(a|s) = (count(s,a) + alpha) / (count(s) + alpha * n_actions)``; unseen states are uniform.

    Raises:
        ContractViolation: If ``demos`` is empty or an action is out of range.
    """
    states, actions = _pairs(demos)
    index = StateIndex(sorted({tuple(s) for s in states}))
    counts = np.zeros((len(index), n_actions))
    codes = np.asarray([int(a) for a in actions])
    if np.any((codes < 0) | (codes >= n_actions)):
        raise ContractViolation(f"demonstrated actions must lie in [0, {n_actions})")
    np.add.at(counts, (index.require(states), codes), 1.0)
    probs = (counts + alpha) / (counts.sum(axis=1, keepdims=True) + alpha * n_actions)
    return TabularPolicy(index, probs)


def bc_fit_mlp(demos: Sequence[Trajectory], hp: BcParams, rng: RngStream, feature_scale: float = 1.0) -> GaussianMlpPolicy:
    """Fit the mean network by mini-batch MSE, then set the scale to the residual std.

    Raises:
        TrainingDiverged: If the loss becomes non-finite (reports the epoch).
    """
    states, actions = _pairs(demos)
    x = np.asarray(states, dtype=float) / feature_scale
    y = np.asarray(actions, dtype=float)
    if x.ndim != 2 or y.ndim != 2:
        raise ContractViolation("network cloning needs vector states and continuous actions")
    gen = rng.generator
    net = Mlp.initialise((x.shape[1], *hp.hidden, y.shape[1]), gen, output_gain=0.1)
    adam = AdamState(hp.lr, net.n_params)
    for epoch in range(hp.epochs):
        order = gen.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), hp.batch):
            rows = order[start:start + hp.batch]
            err = net(x[rows]) - y[rows]
            loss = float(np.mean(np.sum(err ** 2, axis=1)))
            if not np.isfinite(loss):
                raise TrainingDiverged("bc", epoch, f"loss {loss}")
            net.load(adam_step(adam, net.params, net.backward(x[rows], 2.0 * err / len(rows)), stage="bc"))
            total += loss * len(rows)
        log.debug("bc epoch %d: mse %.6f", epoch, total / len(x))
    residual = net(x) - y
    scale = np.maximum(residual.std(axis=0), _MIN_SCALE)
    return GaussianMlpPolicy(net, np.clip(np.log(scale), *LOG_SCALE_BOUNDS), feature_scale)


class BcLearner(Learner):
    """Offline cloning; tabular for discrete environments, Mlp otherwise."""

    name = "bc"

    def __init__(self, params: BcParams = BcParams()) -> None:
        super().__init__(params)

    def fit(self, goal, demos, env: Any, rng: RngStream) -> Policy:
        if env.discrete:
            return bc_fit_tabular(demos, self.params.laplace, env.n_actions)
        return bc_fit_mlp(demos, self.params, rng, env.spec.feature_scale)
