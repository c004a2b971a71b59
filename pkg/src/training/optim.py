"""
Adaptive-moment optimizer over named parameter tensors
"""
from typing import Mapping

import numpy as np


class Adam:
    """Adam with bias correction; the learning rate is passed per step"""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(
        self,
        params: dict[str, np.ndarray],
        grads: Mapping[str, np.ndarray],
        lr: float,
    ) -> None:
        """Update params in place"""
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name, grad in grads.items():
            m = self._m.get(name, np.zeros_like(grad))
            v = self._v.get(name, np.zeros_like(grad))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self._m[name], self._v[name] = m, v
            if lr == 0.0:
                continue
            params[name] = params[name] - lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
