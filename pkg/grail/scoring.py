"""Goal-agnostic scores of an observed prefix under one policy (higher is more plausible).

Every score evaluates the policy once on the batch of observed states and
never touches an environment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from .core import Policy, Step
from .errors import ContractViolation, UnsupportedMetric

SHORT_NAMES = {"mse": "neg_mse", "kl": "neg_kl", "w1": "neg_w1", "maxutil": "neg_maxutil"}
KL_DIRECTIONS = ("policy_first", "pseudo_first")
_TINY = 1e-300


@dataclass(frozen=True)
class ScoreMetric:
    """A scoring rule and its parameters.

    Attributes:
        kind (str): ``neg_mse``, ``neg_kl``, ``neg_w1`` or ``neg_maxutil``.
        epsilon (float): Off-action mass of the KL pseudo-policy.
        samples (int): Policy samples per step for continuous ``neg_w1``.
        kl_direction (str): ``policy_first`` for KL(pi_g || pi_O), or
            ``pseudo_first`` for KL(pi_O || pi_g).
        tie_tolerance (float): Scores within this distance of the best count
            as tied with it.
    """

    kind: str = "neg_mse"
    epsilon: float = 0.01
    samples: int = 16
    kl_direction: str = "policy_first"
    tie_tolerance: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in SHORT_NAMES.values():
            raise ContractViolation(f"unknown metric {self.kind!r}")
        if not self.epsilon > 0:
            raise ContractViolation(f"epsilon must be positive, got {self.epsilon}")
        if self.samples < 1:
            raise ContractViolation(f"sample count must be at least 1, got {self.samples}")
        if self.kl_direction not in KL_DIRECTIONS:
            raise ContractViolation(f"kl_direction must be one of {KL_DIRECTIONS}")
        if not self.tie_tolerance >= 0:
            raise ContractViolation(f"tie_tolerance must be non-negative, got {self.tie_tolerance}")

    @classmethod
    def from_name(cls, name: str, **params: Any) -> "ScoreMetric":
        """Accept either a short CLI name (``mse``) or the full kind (``neg_mse``)."""
        return cls(SHORT_NAMES.get(name, name), **params)

    @property
    def short_name(self) -> str:
        return self.kind[len("neg_"):]

    def describe(self) -> Dict[str, Any]:
        params: Dict[str, Any] = {"metric": self.kind}
        if self.kind == "neg_kl":
            params.update(epsilon=self.epsilon, kl_direction=self.kl_direction)
        elif self.kind == "neg_w1":
            params.update(samples=self.samples)
        if self.tie_tolerance:
            params.update(tie_tolerance=self.tie_tolerance)
        return params


def supports(metric: ScoreMetric, policy_kind: str) -> bool:
    """Whether ``metric`` can score policies of ``policy_kind``."""
    if metric.kind == "neg_kl":
        return policy_kind in ("tabular", "qtable")
    if metric.kind == "neg_maxutil":
        return policy_kind == "qtable"
    return True


def _check_prefix(prefix: Sequence[Step]) -> None:
    if len(prefix) < 1:
        raise ContractViolation("cannot score an empty prefix")


def _codes(prefix: Sequence[Step], n_actions: int) -> np.ndarray:
    try:
        codes = np.asarray([int(step.action) for step in prefix], dtype=int)
    except TypeError as exc:
        raise ContractViolation("discrete policy cannot score continuous actions") from exc
    if np.any((codes < 0) | (codes >= n_actions)):
        raise ContractViolation(f"observed action outside [0, {n_actions})")
    return codes


def _vectors(prefix: Sequence[Step], dim: int) -> np.ndarray:
    actions = np.asarray([np.asarray(step.action, dtype=float).reshape(-1) for step in prefix])
    if actions.shape != (len(prefix), dim):
        raise ContractViolation(f"expected {dim}-dimensional actions, got shape {actions.shape}")
    return actions


def score_mse(prefix: Sequence[Step], policy: Policy) -> float:
    """Negative mean squared distance between prediction and observed action.

    Discrete policies compare the probability vector with the one-hot action;
    continuous policies compare the clipped mean with the action vector.
    """
    _check_prefix(prefix)
    dist = policy.evaluate([step.state for step in prefix])
    if dist.is_discrete:
        codes = _codes(prefix, dist.probs.shape[1])
        target = np.eye(dist.probs.shape[1])[codes]
        errors = np.sum((dist.probs - target) ** 2, axis=1)
    else:
        mean = np.clip(dist.mean, -1.0, 1.0)
        errors = np.sum((mean - _vectors(prefix, mean.shape[1])) ** 2, axis=1)
    return -float(errors.mean())


def score_kl(prefix: Sequence[Step], policy: Policy, epsilon: float = 0.01, direction: str = "policy_first") -> float:
    """Negative summed KL divergence against the smoothed observed-action pseudo-policy.

    Raises:
        UnsupportedMetric: For continuous policies.
    """
    if not policy.discrete:
        raise UnsupportedMetric(f"neg_kl cannot score {policy.kind} policies")
    _check_prefix(prefix)
    dist = policy.evaluate([step.state for step in prefix])
    n_actions = dist.probs.shape[1]
    if not 0 < epsilon < 1.0 / n_actions:
        raise ContractViolation(f"epsilon must lie in (0, {1.0 / n_actions}), got {epsilon}")
    codes = _codes(prefix, n_actions)
    pseudo = np.full(dist.probs.shape, epsilon)
    pseudo[np.arange(len(codes)), codes] = 1.0 - epsilon * (n_actions - 1)
    p, q = (dist.probs, pseudo) if direction == "policy_first" else (pseudo, dist.probs)
    terms = np.where(p > 0, p * (np.log(np.maximum(p, _TINY)) - np.log(np.maximum(q, _TINY))), 0.0)
    return -float(terms.sum())


def score_w1(prefix: Sequence[Step], policy: Policy, samples: int = 16,
             rng: Optional[np.random.Generator] = None) -> float:
    """Negative mean 1-Wasserstein cost between the observed action and the policy.

    Discrete: ``2 * (1 - pi(a_t | s_t))`` (L1 between one-hots). Continuous:
    mean L1 distance to ``samples`` clipped policy samples per step.
    """
    if samples < 1:
        raise ContractViolation(f"sample count must be at least 1, got {samples}")
    _check_prefix(prefix)
    dist = policy.evaluate([step.state for step in prefix])
    if dist.is_discrete:
        codes = _codes(prefix, dist.probs.shape[1])
        costs = 2.0 * (1.0 - dist.probs[np.arange(len(codes)), codes])
    else:
        if rng is None:
            raise ContractViolation("continuous neg_w1 needs a random generator")
        observed = _vectors(prefix, dist.mean.shape[1])
        noise = rng.standard_normal((len(prefix), samples, dist.mean.shape[1]))
        drawn = np.clip(dist.mean[:, None, :] + dist.scale[:, None, :] * noise, -1.0, 1.0)
        costs = np.abs(drawn - observed[:, None, :]).sum(axis=2).mean(axis=1)
    return -float(costs.mean())


def score_maxutil(prefix: Sequence[Step], policy: Policy) -> float:
    """Mean regret of the observed actions under ``Q_g``: ``Q(s, a) - max_b Q(s, b)``.

    Raises:
        UnsupportedMetric: Unless the policy carries Q-values.
    """
    if not hasattr(policy, "q_values"):
        raise UnsupportedMetric(f"neg_maxutil needs Q-values, not a {policy.kind} policy")
    _check_prefix(prefix)
    q = policy.q_values([step.state for step in prefix])
    codes = _codes(prefix, q.shape[1])
    return float((q[np.arange(len(codes)), codes] - q.max(axis=1)).mean())


def score(prefix: Sequence[Step], policy: Policy, metric: ScoreMetric,
          rng: Optional[np.random.Generator] = None) -> float:
    """Dispatch to the scoring rule named by ``metric``."""
    if not supports(metric, policy.kind):
        raise UnsupportedMetric(f"{metric.kind} cannot score {policy.kind} policies")
    if metric.kind == "neg_mse":
        return score_mse(prefix, policy)
    if metric.kind == "neg_kl":
        return score_kl(prefix, policy, metric.epsilon, metric.kl_direction)
    if metric.kind == "neg_w1":
        return score_w1(prefix, policy, metric.samples, rng)
    return score_maxutil(prefix, policy)
