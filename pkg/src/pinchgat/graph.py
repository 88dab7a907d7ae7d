"""Complete bipartite graph built from one system instance.

User nodes carry normalized coordinates, antenna nodes carry the normalized
(slack interval, power) pair, and every user-antenna edge carries the
normalized distance between the two. Graphs are plain value objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .projection import positions_from_deltas, scale_to_budget
from .system import (
    AntennaPlacement,
    PowerAllocation,
    Solution,
    SystemConfig,
    UserLayout,
    antenna_positions,
)


@dataclass(frozen=True)
class BipartiteGraph:
    """Feature matrices of the user/antenna graph.

    norm_scales holds the (length, power) divisors used to normalize the
    features; raw meters and watts are recovered by multiplying back.
    """

    user_features: np.ndarray     # (M, 2) coordinates / length scale
    antenna_features: np.ndarray  # (N, 2) interval / length, power / power scale
    edge_features: np.ndarray     # (M, N) distance / length scale
    norm_scales: tuple[float, float]

    def __post_init__(self):
        m, n = self.edge_features.shape
        if self.user_features.shape != (m, 2):
            raise ValueError("user feature shape inconsistent with edges")
        if self.antenna_features.shape != (n, 2):
            raise ValueError("antenna feature shape inconsistent with edges")
        if np.any(self.edge_features < 0):
            raise ValueError("edge features must be nonnegative")

    @property
    def n_users(self) -> int:
        return self.user_features.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.antenna_features.shape[0]

    def to_json(self) -> str:
        """Debug dump of the feature matrices and scales."""
        return json.dumps({
            "user_features": self.user_features.tolist(),
            "antenna_features": self.antenna_features.tolist(),
            "edge_features": self.edge_features.tolist(),
            "norm_scales": list(self.norm_scales),
        })


def edge_distances(cfg: SystemConfig, layout: UserLayout,
                   placement: AntennaPlacement) -> np.ndarray:
    """Raw user-antenna distances in meters, shape (M, N)."""
    psi = antenna_positions(cfg, placement)
    diff = layout.positions[:, None, :] - psi[None, :, :]
    return np.linalg.norm(diff, axis=2)


def initial_deltas(cfg: SystemConfig) -> np.ndarray:
    """Slack intervals before budget scaling: budget/(N-1) for every antenna.

    The literal init overshoots the budget by N/(N-1); the budget projection
    brings it back to a uniform budget/N array. N = 1 starts at the full
    budget.
    """
    n = cfg.n_antennas
    budget = cfg.placement_budget
    if n == 1:
        return np.array([budget])
    return np.full(n, budget / (n - 1))


def build_graph(cfg: SystemConfig, layout: UserLayout,
                normalized: bool = True) -> tuple[BipartiteGraph, Solution]:
    """Initial graph and the solution implied by the default initialization.

    Powers start uniform at budget/N; intervals start at the literal
    budget/(N-1) and pass through the budget projection before positions are
    derived. Features are divided by (half_range, power_budget) when
    ``normalized`` (the default); norm_scales are (1, 1) otherwise.
    """
    if layout.n_users < 1:
        raise ValueError("a graph needs at least one user")
    if not layout.check_bounds(cfg):
        raise ValueError("user positions outside the configured range")

    deltas = scale_to_budget(initial_deltas(cfg), cfg.placement_budget)
    placement = positions_from_deltas(deltas, cfg)
    powers = np.full(cfg.n_antennas, cfg.power_budget / cfg.n_antennas)
    sol = Solution(placement, PowerAllocation(powers))

    scales = (cfg.half_range, cfg.power_budget) if normalized else (1.0, 1.0)
    graph = BipartiteGraph(
        user_features=layout.positions[:, :2] / scales[0],
        antenna_features=np.column_stack([deltas / scales[0],
                                          powers / scales[1]]),
        edge_features=edge_distances(cfg, layout, placement) / scales[0],
        norm_scales=scales,
    )
    return graph, sol


def update_edge_features(graph: BipartiteGraph, cfg: SystemConfig,
                         layout: UserLayout,
                         placement: AntennaPlacement) -> BipartiteGraph:
    """Recompute every edge feature from the current antenna positions."""
    return BipartiteGraph(
        user_features=graph.user_features,
        antenna_features=graph.antenna_features,
        edge_features=edge_distances(cfg, layout, placement) / graph.norm_scales[0],
        norm_scales=graph.norm_scales,
    )
