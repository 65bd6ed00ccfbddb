"""Adam optimizer with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """Moment estimates for one list of parameter arrays.

    ``m`` and ``v`` are kept per parameter, in the same order as the
    parameter list handed to :func:`adam_step`. ``step`` counts completed
    updates and drives the bias correction.
    """

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError(f"betas must lie in (0,1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.step < 0:
            raise ValueError(f"step must be non-negative, got {self.step}")


def adam_step(params, grads, state: AdamState):
    """Apply one Adam update in place.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), with first/second
    moments updated as m <- b1*m + (1-b1)*g and v <- b2*v + (1-b2)*g^2 and
    de-biased by the step count.
    """
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params vs {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"adam_step shape mismatch: param {p.shape} vs grad {g.shape}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state


class Adam:
    """Convenience wrapper binding an AdamState to a model's parameters."""

    def __init__(self, parameters, lr=1e-4, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.parameters = list(parameters)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)

    def step(self):
        arrays, grads = [], []
        for p in self.parameters:
            if p.tensor.grad is None:
                raise ValueError(f"parameter {p.name} has no gradient; run backward first")
            arrays.append(p.tensor.data)
            grads.append(p.tensor.grad)
        adam_step(arrays, grads, self.state)

    def zero_grad(self):
        for p in self.parameters:
            p.tensor.zero_grad()
