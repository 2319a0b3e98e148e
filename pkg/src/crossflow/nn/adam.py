"""Adam optimiser with bias correction, operating on parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Keeps first/second moment estimates per parameter tensor.

    With a constant gradient the bias-corrected update magnitude converges
    to lr * g/(|g| + eps), i.e. essentially lr per entry; with a zero
    gradient parameters stay untouched.
    """

    def __init__(self, params: dict[str, np.ndarray],
                 config: AdamConfig = AdamConfig()):
        self.config = config
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        cfg = self.config
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
