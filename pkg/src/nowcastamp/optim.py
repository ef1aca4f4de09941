"""Adam optimizer applied to binary32 (or binary64) master parameters."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NonFiniteGradientError


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates and the step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            t=0,
        )


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place on the master parameters.

    Rejects non-finite gradients outright; the loss-scaler skip logic is
    responsible for filtering overflowed steps before they reach here.
    """
    if set(params) != set(grads):
        raise ContractViolation("gradient keys do not match parameter keys")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ContractViolation(
                f"gradient shape {g.shape} does not match parameter "
                f"{name} shape {params[name].shape}"
            )
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient for {name}")
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads[name].astype(p.dtype, copy=False)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state
