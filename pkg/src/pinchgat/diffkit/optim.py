"""Adam with bias correction, in a pure-functional step."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamSet


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(params: ParamSet, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    zeros = {name: np.zeros(spec.shape)
             for name, spec in zip(params.names(), params.specs)}
    return AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
                     m={k: z.copy() for k, z in zeros.items()},
                     v={k: z.copy() for k, z in zeros.items()})


def adam_step(params: ParamSet, grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[ParamSet, AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    t = state.step + 1
    new_m, new_v, new_values = {}, {}, {}
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for spec in params.specs:
        g = grads[spec.name]
        m = state.beta1 * state.m[spec.name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[spec.name] + (1.0 - state.beta2) * g * g
        new_m[spec.name] = m
        new_v[spec.name] = v
        new_values[spec.name] = (params[spec.name].data
                                 - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    new_state = AdamState(lr=state.lr, beta1=state.beta1, beta2=state.beta2,
                          eps=state.eps, step=t, m=new_m, v=new_v)
    return params.with_values(new_values), new_state
