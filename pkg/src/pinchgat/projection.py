"""Feasibility projections shared by the graph builder and the models.

``scale_to_budget`` enforces a sum budget on a nonnegative vector and
``positions_from_deltas`` turns budgeted slack intervals into antenna
coordinates that respect the guard spacing and the waveguide extent.
"""

from __future__ import annotations

import math

import numpy as np

from .system import AntennaPlacement, SystemConfig


def scale_to_budget(v: np.ndarray, budget: float) -> np.ndarray:
    """Rescale a nonnegative vector so its sum is at most ``budget``.

    Returns v * budget / max(budget, sum(v)): the identity whenever the sum
    is within budget. The scaled branch re-checks the floating-point sum and
    shrinks by another ulp-level factor if rounding pushed it over, so the
    output always satisfies sum(out) <= budget exactly and the map is
    exactly idempotent.
    """
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("scale_to_budget requires a nonnegative vector")
    if budget <= 0:
        raise ValueError("budget must be positive")
    total = float(np.sum(v))
    if total <= budget:
        return v.copy()
    out = v * (budget / total)
    for _ in range(10):
        total = float(np.sum(out))
        if total <= budget:
            return out
        out = out * (budget / total)
    raise AssertionError("budget scaling failed to settle")


def positions_from_deltas(deltas: np.ndarray, cfg: SystemConfig) -> AntennaPlacement:
    """Antenna x-coordinates from nonnegative slack intervals.

    x_1 = delta_1 - D and x_n = x_{n-1} + delta_n + guard for n >= 2. With
    sum(deltas) within the placement budget the result is feasible: spacing
    at least the guard distance and coordinates inside [-D, D]. Stored
    coordinates are nudged up by ulps where rounding would otherwise leave a
    spacing short of the guard.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    n = cfg.n_antennas
    if deltas.shape != (n,):
        raise ValueError(f"expected {n} deltas, got shape {deltas.shape}")
    if np.any(deltas < 0):
        raise ValueError("deltas must be nonnegative")
    budget = cfg.placement_budget
    total = float(np.sum(deltas))
    if total > budget * (1 + 1e-9):
        raise ValueError(f"deltas sum {total} exceeds placement budget {budget}")

    d = cfg.waveguide_half_length
    guard = cfg.guard_distance
    x = np.empty(n)
    x[0] = deltas[0] - d
    for i in range(1, n):
        step = deltas[i] + guard
        xi = x[i - 1] + step
        while xi - x[i - 1] < step:
            xi = np.nextafter(xi, math.inf)
        x[i] = xi
    return AntennaPlacement(x)
