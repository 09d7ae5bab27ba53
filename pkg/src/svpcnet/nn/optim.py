from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .networks import NetworkParams


@dataclass
class Adamax:
    """ADAMAX: Adam with an infinity-norm second moment."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    u: dict = field(default_factory=dict)

    def step(self, params: NetworkParams, grads: dict) -> NetworkParams:
        self.t += 1
        step = self.lr / (1.0 - self.beta1**self.t)
        out = {}
        for key, p in params.tensors.items():
            g = grads[key]
            m = self.m.get(key, np.zeros_like(p))
            u = self.u.get(key, np.zeros_like(p))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            u = np.maximum(self.beta2 * u, np.abs(g))
            self.m[key], self.u[key] = m, u
            out[key] = p - step * m / (u + self.eps)
        return NetworkParams(params.arch, out)


def adamax_step(state: Adamax, params: NetworkParams, grads: dict, lr: float | None = None):
    if lr is not None:
        state.lr = lr
    new = state.step(params, grads)
    return state, new
