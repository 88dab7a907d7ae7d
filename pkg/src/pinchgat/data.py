"""Layout datasets: uniform user positions, reproducible from (seed, count)."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .system import SystemConfig, UserLayout


@dataclass(frozen=True)
class Dataset:
    """A stack of user layouts drawn for one system configuration."""

    users_xy: np.ndarray   # (count, M, 2)
    seed: int
    config: SystemConfig

    @property
    def count(self) -> int:
        return self.users_xy.shape[0]

    @property
    def n_users(self) -> int:
        return self.users_xy.shape[1]

    def layout(self, i: int) -> UserLayout:
        return UserLayout.from_xy(self.users_xy[i])

    def layouts(self):
        return (self.layout(i) for i in range(self.count))

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.users_xy[idx], self.seed, self.config)

    def save(self, path: str):
        np.savez(path, users_xy=self.users_xy, seed=self.seed,
                 config_json=self.config.to_json())

    @classmethod
    def load(cls, path: str) -> "Dataset":
        with np.load(path, allow_pickle=False) as archive:
            return cls(
                users_xy=np.asarray(archive["users_xy"], dtype=np.float64),
                seed=int(archive["seed"]),
                config=SystemConfig.from_json(str(archive["config_json"])),
            )


def gen_dataset(cfg: SystemConfig, count: int, seed: int) -> Dataset:
    """Draw i.i.d. user coordinates from U(-L, L) per axis."""
    if count < 1:
        raise ValueError("dataset needs at least one sample")
    rng = np.random.default_rng(seed)
    l = cfg.half_range
    users = rng.uniform(-l, l, size=(count, cfg.n_users, 2))
    return Dataset(users_xy=users, seed=seed, config=cfg)
