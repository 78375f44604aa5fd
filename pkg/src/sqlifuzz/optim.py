"""Adam with bias correction (beta1=0.9, beta2=0.98, eps=1e-9)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LR = 1e-3
BETA1 = 0.9
BETA2 = 0.98
EPS = 1e-9


@dataclass
class AdamState:
    lr: float = DEFAULT_LR
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float = DEFAULT_LR) -> "AdamState":
        return cls(
            lr=lr,
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr_scale: float = 1.0,
) -> dict[str, np.ndarray]:
    """One bias-corrected update, in place; returns params for chaining.

    lr_scale supports warmup schedules without touching the stored rate.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    lr = state.lr * lr_scale
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params
