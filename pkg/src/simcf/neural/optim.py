"""Bias-corrected Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from simcf.neural.autodiff import ParameterSet


@dataclass
class AdamState:
    """Moment accumulators and step counter; moments mirror parameter shapes."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> dict[str, np.ndarray]:
    """One bias-corrected update; returns new parameter arrays.

    Zero gradients leave parameters untouched (moments still decay).
    """
    state.step_count += 1
    t = state.step_count
    out = {}
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {value.shape} for {name!r}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        out[name] = value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


class Adam:
    """Adam bound to a ParameterSet; step() consumes the stored .grad fields."""

    def __init__(self, params: ParameterSet, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self):
        values = {name: t.data for name, t in self.params.items()}
        grads = {name: (np.zeros_like(t.data) if t.grad is None else t.grad)
                 for name, t in self.params.items()}
        updated = adam_step(values, grads, self.state)
        for name, t in self.params.items():
            t.data = updated[name]

    def zero_grad(self):
        self.params.zero_grad()
