"""Exact evaluation of solvers on layout datasets, plus the comparison table.

Every reported EE is recomputed by the exact physical model from the
solution a solver emits; model-internal values are never trusted.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Protocol

import numpy as np

from .data import Dataset
from .graph import build_graph
from .system import (
    Solution,
    SystemConfig,
    UserLayout,
    check_feasible,
    energy_efficiency,
)


class Solver(Protocol):
    def solve(self, layout: UserLayout) -> Solution: ...


class NotApplicableError(ValueError):
    """A solver cannot handle the requested problem size."""


def batched_ee(cfg: SystemConfig, users_xy: np.ndarray, x: np.ndarray,
               p: np.ndarray) -> np.ndarray:
    """Vectorized exact EE for a batch of solutions (complex arithmetic).

    Matches the per-sample exact model; used where per-layout python calls
    would dominate (validation inside the training loop).
    """
    users_xy = np.asarray(users_xy, dtype=np.float64)
    dx = x[..., None, :] - users_xy[..., 0:1]
    dist = np.sqrt(dx * dx + users_xy[..., 1:2] ** 2 + cfg.height ** 2)
    amp = np.sqrt(p)[..., None, :] * math.sqrt(cfg.path_gain) / dist
    phase = (2.0 * math.pi / cfg.wavelength) * dist + (
        (2.0 * math.pi / cfg.guided_wavelength)
        * (x + cfg.waveguide_half_length))[..., None, :]
    signal = np.sum(amp * np.exp(-1j * phase), axis=-1)
    rates = np.log2(1.0 + np.abs(signal) ** 2 / cfg.noise_power)
    return (cfg.slot_length * rates.sum(axis=-1)
            / (p.sum(axis=-1) + cfg.static_power))


@dataclass
class EvalReport:
    model_id: str
    n_antennas: int
    m_train: int | None
    m_test: int
    n_samples: int
    mean_ee: float
    per_sample_ee: list[float]
    feasibility_rate: float
    latency_median_s: float
    latency_mean_s: float
    latency_p90_s: float
    graph_build_median_s: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def evaluate(solver: Solver, cfg: SystemConfig, dataset: Dataset,
             tol: float = 1e-9, model_id: str = "model",
             m_train: int | None = None, warmup: int = 10,
             time_graph_build: bool = False) -> EvalReport:
    """Exact EE, feasibility rate, and per-sample latency over a dataset.

    The first layout is solved ``warmup`` extra times before timing starts.
    Raises NotApplicableError when the solver rejects the problem size.
    """
    from .bgat import ShapeMismatchError

    first = dataset.layout(0)
    try:
        for _ in range(warmup):
            solver.solve(first)
    except ShapeMismatchError as exc:
        raise NotApplicableError(str(exc)) from exc

    ees, times, feasible = [], [], 0
    for layout in dataset.layouts():
        t0 = time.perf_counter()
        sol = solver.solve(layout)
        times.append(time.perf_counter() - t0)
        if check_feasible(cfg, sol, tol=tol).ok:
            feasible += 1
        ees.append(energy_efficiency(cfg, layout, sol))

    build_median = None
    if time_graph_build:
        build_times = []
        for i in range(min(dataset.count, 200)):
            layout = dataset.layout(i)
            t0 = time.perf_counter()
            build_graph(cfg, layout)
            build_times.append(time.perf_counter() - t0)
        build_median = float(np.median(build_times))

    times_arr = np.asarray(times)
    return EvalReport(
        model_id=model_id,
        n_antennas=cfg.n_antennas,
        m_train=m_train,
        m_test=dataset.n_users,
        n_samples=dataset.count,
        mean_ee=float(np.mean(ees)),
        per_sample_ee=[float(v) for v in ees],
        feasibility_rate=feasible / dataset.count,
        latency_median_s=float(np.median(times_arr)),
        latency_mean_s=float(np.mean(times_arr)),
        latency_p90_s=float(np.percentile(times_arr, 90)),
        graph_build_median_s=build_median,
    )


def measure_latency(solve: Callable[[UserLayout], Solution],
                    dataset: Dataset, n: int = 200,
                    warmup: int = 10) -> dict[str, float]:
    """Median/mean/p90 single-sample solve time over n cycled layouts."""
    for i in range(warmup):
        solve(dataset.layout(i % dataset.count))
    times = []
    for i in range(n):
        layout = dataset.layout(i % dataset.count)
        t0 = time.perf_counter()
        solve(layout)
        times.append(time.perf_counter() - t0)
    arr = np.asarray(times)
    return {"median_s": float(np.median(arr)), "mean_s": float(np.mean(arr)),
            "p90_s": float(np.percentile(arr, 90))}


# ---------------------------------------------------------------------------
# comparison table
# ---------------------------------------------------------------------------

# Reference EE values [bit/Hz/J] from the original full-scale study, keyed by
# (n_antennas, m_train, m_test). Context metadata only; never asserted.
REFERENCE_EE = {
    (4, 2, 2): {"fixed": 28.17, "mlp": 26.35, "gat": 30.59, "bgat": 37.10},
    (4, 2, 3): {"fixed": 42.06, "mlp": None, "gat": 46.71, "bgat": 53.65},
    (4, 2, 4): {"fixed": 56.07, "mlp": None, "gat": 63.04, "bgat": 70.71},
    (4, 4, 3): {"fixed": 42.06, "mlp": None, "gat": 51.71, "bgat": 54.53},
    (4, 4, 4): {"fixed": 56.07, "mlp": 50.12, "gat": 51.71, "bgat": 71.95},
    (4, 4, 5): {"fixed": 70.45, "mlp": None, "gat": 64.82, "bgat": 89.37},
    (8, 4, 3): {"fixed": 39.47, "mlp": None, "gat": 45.43, "bgat": 53.91},
    (8, 4, 4): {"fixed": 52.76, "mlp": 52.85, "gat": 61.55, "bgat": 71.36},
    (8, 4, 5): {"fixed": 65.36, "mlp": None, "gat": 77.77, "bgat": 88.36},
}

TABLE_COLUMNS = ("fixed", "mlp", "gat", "bgat")
NOT_APPLICABLE = "x"


@dataclass
class TableRow:
    n_antennas: int
    m_train: int
    m_test: int
    cells: dict[str, float | None] = field(default_factory=dict)


def compare_table(rows: list[TableRow], latencies: dict[str, dict],
                  csv_path: str | None = None,
                  json_path: str | None = None) -> dict:
    """Assemble the EE comparison with per-model inference-time rows.

    ``rows`` hold exact mean EE per (N, M_train, M_test) cell, with None for
    not-applicable combinations. ``latencies`` maps model column to the
    latency stats dict of that model.
    """
    doc = {
        "columns": list(TABLE_COLUMNS),
        "rows": [
            {
                "n_antennas": r.n_antennas,
                "m_train": r.m_train,
                "m_test": r.m_test,
                "ee": {c: r.cells.get(c) for c in TABLE_COLUMNS},
                "reference_ee": REFERENCE_EE.get(
                    (r.n_antennas, r.m_train, r.m_test)),
            }
            for r in rows
        ],
        "inference_time_s": latencies,
    }
    if json_path:
        with open(json_path, "w") as fh:
            json.dump(doc, fh, indent=2)
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n_antennas", "m_train", "m_test",
                             *TABLE_COLUMNS])
            for r in rows:
                writer.writerow([
                    r.n_antennas, r.m_train, r.m_test,
                    *[(f"{r.cells[c]:.4f}" if r.cells.get(c) is not None
                       else NOT_APPLICABLE) for c in TABLE_COLUMNS],
                ])
            writer.writerow([
                "inference_time_s", "", "",
                *[(f"{latencies[c]['median_s']:.6f}" if latencies.get(c)
                   else NOT_APPLICABLE) for c in TABLE_COLUMNS],
            ])
    return doc
