"""Command-line interface.

Subcommands: gen-data, train, eval, baseline-sca, gradcheck, report.
Every command takes --seed; `report` is driven by one experiment JSON.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .bgat import (
    BgatArchitecture,
    Model,
    bgat_forward_batch,
    create_model,
    objective_t,
)
from .data import Dataset, gen_dataset
from .diffkit import finite_difference_check
from .evaluation import NotApplicableError, evaluate
from .experiment import (
    ExperimentConfig,
    ScaSolver,
    desk_experiment_config,
    run_experiment,
)
from .sca import sca_solve
from .system import SystemConfig, default_config
from .training import TrainConfig, train


def _load_system(path: str | None) -> SystemConfig:
    if path is None:
        return default_config()
    with open(path) as fh:
        return SystemConfig.from_json(fh.read())


def _cmd_gen_data(args) -> int:
    cfg = _load_system(args.config)
    ds = gen_dataset(cfg, args.count, seed=args.seed)
    ds.save(args.out)
    print(f"wrote {ds.count} layouts ({ds.n_users} users each) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    ds = Dataset.load(args.data)
    cfg = ds.config if args.config is None else _load_system(args.config)
    tc = TrainConfig(
        learning_rate=args.lr, batch_size=args.batch_size,
        max_epochs=args.epochs, patience=args.patience, seed=args.seed)
    model, history = train(args.model, cfg, ds, tc)
    model.save(args.out, seed=args.seed)
    print(f"best validation EE {history.best_val_ee:.4f} "
          f"(epoch {history.best_epoch}, "
          f"{'early stop' if history.stopped_early else 'full run'})")
    if args.history_out:
        with open(args.history_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_ee", "best_so_far"])
            for r in history.records:
                writer.writerow([r.epoch, r.train_loss, r.val_ee, r.best_so_far])
    print(f"wrote model to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    ds = Dataset.load(args.data)
    cfg = ds.config if args.config is None else _load_system(args.config)
    model = Model.load(args.model_file, expected_cfg=cfg)
    try:
        report = evaluate(model, cfg, ds, model_id=model.kind,
                          m_train=model.n_users_train,
                          time_graph_build=(model.kind == "bgat"))
    except NotApplicableError as exc:
        doc = {"not_applicable": True, "reason": str(exc)}
        print(f"not applicable: {exc}")
        if args.out:
            with open(args.out, "w") as fh:
                json.dump(doc, fh, indent=2)
        return 1
    print(f"mean EE {report.mean_ee:.4f} bit/Hz/J over {report.n_samples} "
          f"samples; feasibility rate {report.feasibility_rate:.3f}; "
          f"median latency {report.latency_median_s * 1e3:.2f} ms")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_json())
    return 0


def _cmd_baseline_sca(args) -> int:
    ds = Dataset.load(args.data)
    cfg = ds.config if args.config is None else _load_system(args.config)
    solver = ScaSolver(cfg, tol=args.tol, max_iter=args.max_iter)
    report = evaluate(solver, cfg, ds, model_id="fixed", warmup=1)
    print(f"fixed-antenna mean EE {report.mean_ee:.4f} bit/Hz/J; "
          f"median solve {report.latency_median_s * 1e3:.1f} ms")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_json())
    if args.trace_out and solver.last_trace:
        with open(args.trace_out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(solver.last_trace[0]))
            writer.writeheader()
            writer.writerows(solver.last_trace)
        print(f"wrote last-layout convergence trace to {args.trace_out}")
    return 0


def _cmd_gradcheck(args) -> int:
    cfg = default_config(n_antennas=args.antennas, n_users=args.users)
    arch = BgatArchitecture(n_blocks=args.blocks, n_heads=args.heads)
    model = create_model("bgat", cfg, seed=args.seed, arch=arch)
    rng = np.random.default_rng(args.seed)
    users = rng.uniform(-cfg.half_range, cfg.half_range,
                        size=(1, cfg.n_users, 2))

    def loss_fn(params):
        x, p, _ = bgat_forward_batch(params, arch, cfg, users)
        return -objective_t(cfg, users, x, p).mean()

    result = finite_difference_check(loss_fn, model.params,
                                     n_coords=args.coords, seed=args.seed)
    status = "PASS" if result.ok else "FAIL"
    print(f"{status}: max relative error {result.max_rel_error:.3e} over "
          f"{result.n_checked} coordinates (worst: {result.worst_coord})")
    return 0 if result.ok else 1


def _cmd_report(args) -> int:
    if args.experiment:
        with open(args.experiment) as fh:
            exp = ExperimentConfig.from_json(fh.read())
    else:
        exp = desk_experiment_config(seed=args.seed)
    run_experiment(exp, args.out_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pinchgat",
        description="Pinching-antenna placement/power toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="draw a layout dataset")
    p.add_argument("--config", help="system config JSON")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--model", choices=("bgat", "mlp", "gat_pool"),
                   default="bgat")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="system config JSON (default: dataset's)")
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--history-out")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a stored model on a dataset")
    p.add_argument("--model-file", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("baseline-sca", help="run the fixed-antenna optimizer")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--trace-out", help="CSV convergence trace (last layout)")
    p.set_defaults(func=_cmd_baseline_sca)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of the model gradient")
    p.add_argument("--antennas", type=int, default=3)
    p.add_argument("--users", type=int, default=2)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--coords", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("report", help="run a full experiment and emit tables")
    p.add_argument("--experiment", help="experiment config JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="reports")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
