"""A small tanh feed-forward network with hand-derived gradients and Adam.

Parameters live in one flat float64 buffer; per-layer weight and bias arrays
are views into it, so serialisation and optimizer updates work on the flat
vector directly.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractViolation, TrainingDiverged


class Mlp:
    """Fully connected network, tanh on hidden layers, identity output.

    Args:
        sizes (Sequence[int]): Layer widths, input first, output last.
        params (np.ndarray | None): Flat parameter vector; zeros when omitted.

    Attributes:
        weights (list[np.ndarray]): ``(fan_in, fan_out)`` views into ``params``.
        biases (list[np.ndarray]): ``(fan_out,)`` views into ``params``.
    """

    def __init__(self, sizes: Sequence[int], params: Optional[np.ndarray] = None) -> None:
        self.sizes = tuple(int(n) for n in sizes)
        if len(self.sizes) < 2 or any(n < 1 for n in self.sizes):
            raise ContractViolation(f"invalid layer sizes {self.sizes}")
        n_params = sum(i * o + o for i, o in zip(self.sizes[:-1], self.sizes[1:]))
        if params is None:
            self.params = np.zeros(n_params)
        else:
            params = np.asarray(params, dtype=float)
            if params.shape != (n_params,):
                raise ContractViolation(f"expected {n_params} parameters for {self.sizes}, got {params.shape}")
            self.params = params.copy()
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        offset = 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            self.weights.append(self.params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out))
            offset += fan_in * fan_out
            self.biases.append(self.params[offset:offset + fan_out])
            offset += fan_out

    @classmethod
    def initialise(cls, sizes: Sequence[int], rng: np.random.Generator, output_gain: float = 1.0) -> "Mlp":
        """Scaled-normal initialisation (std ``1/sqrt(fan_in)``), zero biases."""
        net = cls(sizes)
        for i, w in enumerate(net.weights):
            gain = output_gain if i == len(net.weights) - 1 else 1.0
            w[...] = gain * rng.standard_normal(w.shape) / np.sqrt(w.shape[0])
        return net

    @property
    def n_params(self) -> int:
        return self.params.size

    def load(self, params: np.ndarray) -> None:
        """Overwrite the parameter buffer in place, keeping the layer views."""
        params = np.asarray(params, dtype=float)
        if params.shape != self.params.shape:
            raise ContractViolation(f"parameter shape {params.shape} does not match {self.params.shape}")
        self.params[...] = params

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, self.params)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.params)))

    def _check_input(self, x: np.ndarray) -> Tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = x[None, :] if single else x
        if x2.ndim != 2 or x2.shape[1] != self.sizes[0]:
            raise ContractViolation(f"input shape {x.shape} does not match input size {self.sizes[0]}")
        return x2, single

    def _trace(self, x: np.ndarray) -> List[np.ndarray]:
        activations = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else np.tanh(z)
            activations.append(h)
        return activations

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Evaluate on one input vector or a batch of rows."""
        x2, single = self._check_input(x)
        out = self._trace(x2)[-1]
        return out[0] if single else out

    __call__ = forward

    def backward(self, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(forward(x) * upstream)`` w.r.t. the flat parameters.

        Batched inputs contribute additively.
        """
        x2, single = self._check_input(x)
        g = np.asarray(upstream, dtype=float)
        g = g[None, :] if single else g
        if g.shape != (x2.shape[0], self.sizes[-1]):
            raise ContractViolation(f"upstream shape {np.shape(upstream)} does not match output {self.sizes[-1]}")
        activations = self._trace(x2)
        grads = Mlp(self.sizes)
        for i in range(len(self.weights) - 1, -1, -1):
            grads.weights[i][...] = activations[i].T @ g
            grads.biases[i][...] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (1.0 - activations[i] ** 2)
        return grads.params


@dataclass
class AdamState:
    """Adam moments and step count for one parameter vector."""

    lr: float
    size: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ContractViolation(f"learning rate must be positive, got {self.lr}")
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)

    def snapshot(self) -> "AdamState":
        return copy.deepcopy(self)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, stage: str = "adam") -> np.ndarray:
    """One bias-corrected Adam update; returns new parameters and advances ``state``.

    Raises:
        TrainingDiverged: If any gradient component is not finite.
        ContractViolation: If shapes disagree.
    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ContractViolation(f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        raise TrainingDiverged(stage, state.step, "non-finite gradient")
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads ** 2
    m_hat = state.m / (1 - state.beta1 ** state.step)
    v_hat = state.v / (1 - state.beta2 ** state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
