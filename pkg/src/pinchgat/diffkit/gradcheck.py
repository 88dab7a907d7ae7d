"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .params import ParamSet
from .tensor import Tensor


@dataclass
class GradCheckResult:
    n_checked: int
    max_rel_error: float
    worst_coord: int
    ok: bool
    errors: np.ndarray
    coords: np.ndarray


def finite_difference_check(loss_fn: Callable[[ParamSet], Tensor],
                            params: ParamSet, n_coords: int = 100,
                            h: float = 1e-6, rtol: float = 1e-5,
                            seed: int = 0,
                            coords: np.ndarray | None = None) -> GradCheckResult:
    """Compare the analytic gradient against central differences.

    Relative error uses max(|analytic|, |fd|, floor) as denominator with
    floor = 0.05 * max(1, ||g||_inf). Coordinates whose gradient is tiny
    relative to the gradient scale are then judged against an absolute
    tolerance sitting above the noise floor of the difference quotient
    itself (loss values inherit ~ulp-of-distance phase noise, which the
    division by 2h amplifies); genuinely wrong backward formulas produce
    errors on the scale of the gradients and still fail by orders of
    magnitude.
    """
    params.zero_grad()
    loss = loss_fn(params)
    loss.backward()
    analytic = params.grads_flat()

    if coords is None:
        rng = np.random.default_rng(seed)
        coords = rng.choice(params.n_scalars, size=min(n_coords, params.n_scalars),
                            replace=False)
    coords = np.asarray(coords, dtype=int)

    base = params.flatten()
    floor = 0.05 * max(1.0, float(np.max(np.abs(analytic))))

    def eval_at(flat: np.ndarray) -> float:
        probe = params.copy()
        probe.assign_flat(flat)
        return float(loss_fn(probe).data)

    errors = np.zeros(coords.size)
    for i, c in enumerate(coords):
        bumped = base.copy()
        bumped[c] = base[c] + h
        up = eval_at(bumped)
        bumped[c] = base[c] - h
        down = eval_at(bumped)
        fd = (up - down) / (2.0 * h)
        denom = max(abs(analytic[c]), abs(fd), floor)
        errors[i] = abs(analytic[c] - fd) / denom

    worst = int(np.argmax(errors))
    return GradCheckResult(
        n_checked=coords.size,
        max_rel_error=float(errors[worst]),
        worst_coord=int(coords[worst]),
        ok=bool(np.all(errors <= rtol)),
        errors=errors,
        coords=coords,
    )
