"""Concrete policy kinds and their on-disk records.

Discrete policies are dense tables over an explicit state list; states that
were never indexed get the uniform distribution. The continuous policy is a
Gaussian whose mean comes from an :class:`~grail.tinynn.Mlp`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import ActionDistribution, Policy
from ..errors import BankVersionError, ContractViolation, CorruptBank
from ..tinynn import Mlp

RECORD_VERSION = 1
LOG_SCALE_BOUNDS = (-5.0, 1.0)


class StateIndex:
    """Row lookup for hashable states (named tuples compare equal to plain tuples)."""

    def __init__(self, states: Sequence[Any]) -> None:
        self.states: List[Tuple] = [tuple(s) for s in states]
        self._rows = {s: i for i, s in enumerate(self.states)}
        if len(self._rows) != len(self.states):
            raise ContractViolation("state index contains duplicates")

    def __len__(self) -> int:
        return len(self.states)

    def __contains__(self, state: object) -> bool:
        return tuple(state) in self._rows

    def rows(self, states: Sequence[Any]) -> np.ndarray:
        """Row per state, ``-1`` for states outside the index."""
        return np.array([self._rows.get(tuple(s), -1) for s in states], dtype=int)

    def require(self, states: Sequence[Any]) -> np.ndarray:
        rows = self.rows(states)
        if np.any(rows < 0):
            missing = states[int(np.flatnonzero(rows < 0)[0])]
            raise ContractViolation(f"state {tuple(missing)} is not in the state index")
        return rows


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _lookup(index: StateIndex, table: np.ndarray, states: Sequence[Any], fill: float) -> np.ndarray:
    rows = index.rows(states)
    out = np.full((len(states), table.shape[1]), fill)
    known = rows >= 0
    out[known] = table[rows[known]]
    return out


class TabularPolicy(Policy):
    """Explicit per-state action probabilities.

    Attributes:
        index (StateIndex): States with a stored distribution.
        probs (np.ndarray): ``(len(index), n_actions)`` rows summing to 1.
    """

    kind = "tabular"
    discrete = True

    def __init__(self, index: StateIndex, probs: np.ndarray) -> None:
        super().__init__()
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 2 or probs.shape[0] != len(index):
            raise ContractViolation(f"probability table shape {probs.shape} does not match {len(index)} states")
        ActionDistribution(probs=probs)
        self.index = index
        self.probs = probs
        self.n_actions = probs.shape[1]

    @classmethod
    def from_logits(cls, index: StateIndex, logits: np.ndarray) -> "TabularPolicy":
        return cls(index, softmax(np.asarray(logits, dtype=float)))

    def _evaluate(self, states: List[Any]) -> ActionDistribution:
        return ActionDistribution(probs=_lookup(self.index, self.probs, states, 1.0 / self.n_actions))


@dataclass
class QTable:
    """Tabular action values and visit counts over an explicit state list."""

    index: StateIndex
    q: np.ndarray
    visits: np.ndarray

    def __post_init__(self) -> None:
        if self.q.shape != self.visits.shape or self.q.shape[0] != len(self.index):
            raise ContractViolation("Q and visit tables must both be (states, actions)")
        if not np.all(np.isfinite(self.q)):
            raise ContractViolation("Q values must be finite")
        if np.any(self.visits < 0):
            raise ContractViolation("visit counts must be non-negative")

    @classmethod
    def zeros(cls, states: Sequence[Any], n_actions: int) -> "QTable":
        index = StateIndex(states)
        return cls(index, np.zeros((len(index), n_actions)), np.zeros((len(index), n_actions), dtype=np.int64))

    def state_visits(self) -> np.ndarray:
        return self.visits.sum(axis=1)


class QPolicy(Policy):
    """Boltzmann policy ``softmax(Q / temperature)`` over a :class:`QTable`."""

    kind = "qtable"
    discrete = True

    def __init__(self, table: QTable, temperature: float = 1.0) -> None:
        super().__init__()
        if temperature <= 0:
            raise ContractViolation(f"temperature must be positive, got {temperature}")
        self.table = table
        self.temperature = float(temperature)

    def _evaluate(self, states: List[Any]) -> ActionDistribution:
        q = _lookup(self.table.index, self.table.q, states, 0.0)
        return ActionDistribution(probs=softmax(q / self.temperature))

    def q_values(self, states: Sequence[Any]) -> np.ndarray:
        """Raw Q rows (zeros for unknown states), counted like :meth:`evaluate`."""
        states = list(states)
        if not states:
            raise ContractViolation("cannot evaluate a policy on zero states")
        q = _lookup(self.table.index, self.table.q, states, 0.0)
        with self._lock:
            self.calls += len(states)
        return q


class GaussianMlpPolicy(Policy):
    """Diagonal Gaussian with an Mlp mean and a learned per-dimension log-scale.

    Positions are divided by ``feature_scale`` before entering the network.
    """

    kind = "mlp"
    discrete = False

    def __init__(self, net: Mlp, log_scale: np.ndarray, feature_scale: float = 1.0) -> None:
        super().__init__()
        log_scale = np.asarray(log_scale, dtype=float)
        if log_scale.shape != (net.sizes[-1],):
            raise ContractViolation(f"log_scale shape {log_scale.shape} does not match action size {net.sizes[-1]}")
        self.net = net
        self.log_scale = np.clip(log_scale, *LOG_SCALE_BOUNDS)
        self.feature_scale = float(feature_scale)

    def features(self, states: Sequence[Any]) -> np.ndarray:
        return np.asarray(states, dtype=float).reshape(-1, self.net.sizes[0]) / self.feature_scale

    def _evaluate(self, states: List[Any]) -> ActionDistribution:
        mean = self.net(self.features(states))
        return ActionDistribution.gaussian(mean, np.exp(self.log_scale))


def policy_to_record(policy: Policy, meta: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Flatten a policy into the JSON-ready bank file layout."""
    meta = dict(meta or {})
    if isinstance(policy, TabularPolicy):
        shapes = {"probs": list(policy.probs.shape)}
        params = policy.probs.ravel()
        meta["states"] = [list(s) for s in policy.index.states]
    elif isinstance(policy, QPolicy):
        table = policy.table
        shapes = {"q": list(table.q.shape), "visits": list(table.visits.shape)}
        params = np.concatenate([table.q.ravel(), table.visits.ravel().astype(float)])
        meta["states"] = [list(s) for s in table.index.states]
        meta["temperature"] = policy.temperature
    elif isinstance(policy, GaussianMlpPolicy):
        shapes = {"sizes": list(policy.net.sizes), "log_scale": [policy.log_scale.size]}
        params = np.concatenate([policy.net.params, policy.log_scale])
        meta["feature_scale"] = policy.feature_scale
    else:
        raise ContractViolation(f"cannot serialise policy kind {policy.kind!r}")
    return {
        "format": policy.kind,
        "version": RECORD_VERSION,
        "shapes": shapes,
        "params": [float(v) for v in params],
        "meta": meta,
    }


def _take(params: np.ndarray, offset: int, shape: Sequence[int]) -> Tuple[np.ndarray, int]:
    size = int(np.prod(shape))
    if offset + size > params.size:
        raise CorruptBank(f"parameter block ends early: need {offset + size}, have {params.size}")
    return params[offset:offset + size].reshape(shape), offset + size


def policy_from_record(record: Dict[str, Any]) -> Policy:
    """Rebuild a policy from :func:`policy_to_record` output.

    Raises:
        BankVersionError: If the format tag or version is unknown.
        CorruptBank: If the shape header and parameter block disagree.
    """
    fmt = record.get("format")
    if record.get("version") != RECORD_VERSION or fmt not in ("tabular", "qtable", "mlp"):
        raise BankVersionError(f"unsupported policy format {fmt!r} version {record.get('version')!r}")
    try:
        params = np.asarray(record["params"], dtype=float)
        shapes = record["shapes"]
        meta = record["meta"]
        if fmt == "tabular":
            probs, used = _take(params, 0, shapes["probs"])
            policy: Policy = TabularPolicy(StateIndex(meta["states"]), probs)
        elif fmt == "qtable":
            q, offset = _take(params, 0, shapes["q"])
            visits, used = _take(params, offset, shapes["visits"])
            table = QTable(StateIndex(meta["states"]), q.copy(), visits.astype(np.int64))
            policy = QPolicy(table, meta["temperature"])
        else:
            net = Mlp(shapes["sizes"])
            flat, offset = _take(params, 0, [net.n_params])
            net.load(flat)
            log_scale, used = _take(params, offset, shapes["log_scale"])
            policy = GaussianMlpPolicy(net, log_scale, meta["feature_scale"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptBank(f"malformed {fmt} policy record: {exc}") from exc
    if used != params.size:
        raise CorruptBank(f"{params.size - used} unexpected trailing parameters in {fmt} record")
    return policy
