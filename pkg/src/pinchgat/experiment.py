"""One-config experiment driver: datasets, training, baselines, and the
comparison table, all derived from a single JSON document."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .bgat import Model
from .data import Dataset, gen_dataset
from .evaluation import (
    NotApplicableError,
    TableRow,
    compare_table,
    evaluate,
    measure_latency,
)
from .sca import sca_solve
from .system import Solution, SystemConfig, UserLayout, default_config
from .training import TrainConfig, train


@dataclass
class ExperimentConfig:
    """Everything one run needs; serializable to/from JSON."""

    system: SystemConfig
    train_count: int = 10000
    test_count: int = 200
    test_users: tuple[int, ...] = (2, 3)
    models: tuple[str, ...] = ("bgat", "mlp", "gat_pool")
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    latency_samples: int = 200
    sca_latency_samples: int = 20

    def to_json(self) -> str:
        doc = {
            "system": json.loads(self.system.to_json()),
            "train_count": self.train_count,
            "test_count": self.test_count,
            "test_users": list(self.test_users),
            "models": list(self.models),
            "train": {
                "learning_rate": self.train.learning_rate,
                "batch_size": self.train.batch_size,
                "max_epochs": self.train.max_epochs,
                "patience": self.train.patience,
                "val_fraction": self.train.val_fraction,
                "seed": self.train.seed,
            },
            "seed": self.seed,
            "latency_samples": self.latency_samples,
            "sca_latency_samples": self.sca_latency_samples,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        return cls(
            system=SystemConfig.from_json(json.dumps(doc["system"])),
            train_count=doc.get("train_count", 10000),
            test_count=doc.get("test_count", 200),
            test_users=tuple(doc.get("test_users", (2, 3))),
            models=tuple(doc.get("models", ("bgat", "mlp", "gat_pool"))),
            train=TrainConfig(**doc.get("train", {})),
            seed=doc.get("seed", 0),
            latency_samples=doc.get("latency_samples", 200),
            sca_latency_samples=doc.get("sca_latency_samples", 20),
        )


def desk_experiment_config(seed: int = 0) -> ExperimentConfig:
    """Small-budget defaults: N=4 trained at M=2, tested at M in {2, 3}."""
    return ExperimentConfig(
        system=default_config(n_antennas=4, n_users=2),
        train=TrainConfig(batch_size=256, max_epochs=100, seed=seed),
        seed=seed,
    )


class ScaSolver:
    """Adapter exposing the fixed-antenna optimizer as a solver."""

    def __init__(self, cfg: SystemConfig, tol: float = 1e-6,
                 max_iter: int = 100):
        self.cfg = cfg
        self.tol = tol
        self.max_iter = max_iter
        self.last_trace: list[dict] | None = None

    def solve(self, layout: UserLayout):
        result = sca_solve(self.cfg, layout, tol=self.tol,
                           max_iter=self.max_iter)
        self.last_trace = result.trace
        return Solution(result.placement, result.power)


MODEL_COLUMN = {"bgat": "bgat", "mlp": "mlp", "gat_pool": "gat"}


def run_experiment(exp: ExperimentConfig, out_dir: str,
                   log=print) -> dict:
    """Train every requested model, benchmark against the fixed-antenna
    optimizer at each test size, and write the table plus artifacts."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = exp.system
    m_train = cfg.n_users

    log(f"generating datasets (train {exp.train_count}, "
        f"test {exp.test_count} per size)")
    train_set = gen_dataset(cfg, exp.train_count, seed=exp.seed)
    test_sets = {}
    for m in exp.test_users:
        test_cfg = SystemConfig.from_json(cfg.to_json())
        test_cfg = _with_users(test_cfg, m)
        test_sets[m] = gen_dataset(test_cfg, exp.test_count,
                                   seed=exp.seed + 1000 + m)

    models: dict[str, Model] = {}
    histories = {}
    for kind in exp.models:
        log(f"training {kind} ...")
        model, history = train(kind, cfg, train_set, exp.train)
        models[kind] = model
        histories[kind] = history
        model.save(os.path.join(out_dir, f"{kind}.model.json"),
                   seed=exp.train.seed)
        log(f"  best val EE {history.best_val_ee:.3f} "
            f"at epoch {history.best_epoch}")

    rows: list[TableRow] = []
    reports = {}
    latencies: dict[str, dict] = {}
    for m, test_set in sorted(test_sets.items()):
        test_cfg = test_set.config
        row = TableRow(n_antennas=cfg.n_antennas, m_train=m_train, m_test=m)

        log(f"fixed-antenna baseline at M={m} ...")
        sca = ScaSolver(test_cfg)
        fixed_report = evaluate(sca, test_cfg, test_set, model_id="fixed",
                                warmup=1)
        row.cells["fixed"] = fixed_report.mean_ee
        reports[f"fixed_m{m}"] = fixed_report
        latencies.setdefault("fixed", {
            "median_s": fixed_report.latency_median_s,
            "mean_s": fixed_report.latency_mean_s,
            "p90_s": fixed_report.latency_p90_s,
        })

        for kind, model in models.items():
            col = MODEL_COLUMN[kind]
            try:
                report = evaluate(model, test_cfg, test_set, model_id=kind,
                                  m_train=m_train,
                                  time_graph_build=(kind == "bgat"))
                row.cells[col] = report.mean_ee
                reports[f"{kind}_m{m}"] = report
                if col not in latencies:
                    stats = measure_latency(model.solve, test_set,
                                            n=exp.latency_samples)
                    latencies[col] = stats
            except NotApplicableError:
                row.cells[col] = None
        rows.append(row)

    table = compare_table(rows, latencies,
                          csv_path=os.path.join(out_dir, "comparison.csv"),
                          json_path=os.path.join(out_dir, "comparison.json"))
    with open(os.path.join(out_dir, "reports.json"), "w") as fh:
        json.dump({k: json.loads(r.to_json()) for k, r in reports.items()},
                  fh, indent=2)
    log(f"wrote {out_dir}/comparison.csv")
    return table


def _with_users(cfg: SystemConfig, m: int) -> SystemConfig:
    doc = json.loads(cfg.to_json())
    doc["n_users"] = m
    return SystemConfig.from_json(json.dumps(doc))
