"""Adam optimizer on flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Adam:
    """Standard Adam with bias correction.

    Operates in place on the flat parameter vector; the moment buffers are
    allocated on first use. Deterministic: a given (params, grads) history
    reproduces bitwise-identical trajectories.
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def step(self, params: np.ndarray, grads: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1.0 - b1) * grads
        self.v *= b2
        self.v += (1.0 - b2) * grads * grads
        m_hat = self.m / (1.0 - b1 ** self.step_count)
        v_hat = self.v / (1.0 - b2 ** self.step_count)
        params -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
