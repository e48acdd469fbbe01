"""Adam optimiser over Parameter objects."""

from typing import Dict, List, Sequence

import numpy as np

from volatility.errors import ShapeMismatch
from .layers import Parameter


class Adam:
    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ValueError(f"Learning rate must be positive, got {lr}")
        self.params: List[Parameter] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]
        self._by_name = {p.name: p for p in self.params}

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def accumulate(self, grads: Dict[str, np.ndarray], weight: float = 1.0):
        """Add ``weight * grad`` into each named parameter's buffer."""
        for name, g in grads.items():
            param = self._by_name.get(name)
            if param is None:
                continue
            if g.shape != param.value.shape:
                raise ShapeMismatch(f"Gradient for {name} has shape {g.shape}")
            param.grad = param.grad + weight * g

    def step(self):
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        for i, p in enumerate(self.params):
            g = p.grad
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * g * g
            m_hat = self._m[i] / bias1
            v_hat = self._v[i] / bias2
            p.value = p.value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Moment buffers keyed ``<param>.m`` / ``<param>.v`` plus the step counter."""
        state = {"step": np.array(float(self.step_count))}
        for p, m, v in zip(self.params, self._m, self._v):
            state[f"{p.name}.m"] = m.copy()
            state[f"{p.name}.v"] = v.copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        self.step_count = int(state["step"])
        for i, p in enumerate(self.params):
            self._m[i] = np.array(state[f"{p.name}.m"], dtype=float)
            self._v[i] = np.array(state[f"{p.name}.v"], dtype=float)
