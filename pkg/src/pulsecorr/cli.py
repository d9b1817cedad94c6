"""Command-line entry point: ``pulsecorr {gen-data,train,eval,scan}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, load_config, normalized_system
from .dataset import assign_splits, build_dataset, read_dataset, select, split, write_dataset
from .lstm import OUTLIER_THRESHOLD, evaluate, evaluate_pulses, train

logger = logging.getLogger("pulsecorr")


class CliError(Exception):
    pass


def _overrides(args) -> dict:
    return {
        "output": args.out,
        "threads": args.threads,
        "dataset.seed": args.seed_data,
        "training.seed": args.seed_train,
        "system.drift": args.drift,
        "system.gamma": args.gamma,
        "analysis.eps": getattr(args, "eps", None),
    }


def _write_json(path: Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.json", cfg.to_dict())
    except OSError as exc:
        raise CliError(f"cannot write to output directory {out}: {exc}") from exc
    return out


def _quantiles(values) -> dict:
    qs = np.quantile(np.asarray(values, dtype=float), [0.0, 0.05, 0.5, 0.95, 1.0])
    return dict(zip(["min", "q05", "median", "q95", "max"], (float(q) for q in qs)))


def cmd_gen_data(cfg: ExperimentConfig) -> dict:
    out = _prepare_out(cfg)
    sys_drift = cfg.system.build()
    total = cfg.dataset.train + cfg.dataset.test
    manifest, records = build_dataset(
        total,
        sys_drift,
        cfg.data_seed(),
        cfg.dataset.with_dcp,
        system_block=normalized_system(cfg.to_dict()["system"]),
        ncp_cfg=cfg.optimizer.ncp_config(),
        dcp_cfg=cfg.optimizer.dcp_config(),
        workers=cfg.threads or os.cpu_count() or 1,
    )
    train_set, test_set = split(records, cfg.dataset.train / total, cfg.split_seed())
    assign_splits(manifest, train_set, test_set)
    write_dataset(out, manifest, records)
    summary = {
        "admitted": len(records),
        "skipped": len(manifest.skipped),
        "counts": manifest.counts,
        "ncp_fidelity": _quantiles([r.ncp_fidelity for r in records]),
    }
    if cfg.dataset.with_dcp:
        summary["dcp_fidelity"] = _quantiles([r.dcp_fidelity for r in records])
    return summary


def _load_split(path, name: str):
    try:
        manifest, records = read_dataset(path)
    except FileNotFoundError as exc:
        raise CliError(f"dataset not found: {exc.filename}") from exc
    if name not in manifest.splits:
        raise CliError(f"dataset has no {name!r} split (available: {sorted(manifest.splits)})")
    return manifest, select(records, manifest.splits[name])


def cmd_train(cfg: ExperimentConfig, data: Path) -> dict:
    manifest, train_set = _load_split(data, "train")
    _, test_set = _load_split(data, "test")
    system = normalized_system(cfg.to_dict()["system"])
    if manifest.system != system:
        raise CliError(
            "dataset was generated for a different system:\n"
            f"  dataset: {json.dumps(manifest.system, sort_keys=True)}\n"
            f"  config:  {json.dumps(system, sort_keys=True)}"
        )
    if not train_set or not test_set:
        raise CliError("training and test splits must be nonempty")
    out = _prepare_out(cfg)
    params, history = train(train_set, test_set, cfg.train_config(), cfg.init_seed())
    save_checkpoint(out / "checkpoint.json", params, cfg.to_dict()["training"], system, manifest.digest())
    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_fidelity_error", "test_mean_fidelity"])
        for k, (e, f) in enumerate(zip(history.train_error, history.test_fidelity)):
            w.writerow([k, repr(e), repr(f)])
    with open(out / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "seconds"])
        for k, t in enumerate(history.wall_time):
            w.writerow([k, f"{t:.3f}"])
    return {
        "epochs": len(history),
        "best_epoch": history.best_epoch,
        "final_test_fidelity": history.test_fidelity[-1] if len(history) else None,
        "checkpoint": str(out / "checkpoint.json"),
    }


def _checkpoint_and_data(cfg: ExperimentConfig, checkpoint: Path, data: Path, split_name: str, explicit_system: bool):
    try:
        params, meta = load_checkpoint(checkpoint)
    except FileNotFoundError as exc:
        raise CliError(f"checkpoint not found: {checkpoint}") from exc
    manifest, records = _load_split(data, split_name)
    if manifest.system != meta["system"]:
        raise CliError("checkpoint and dataset were made for different systems")
    if explicit_system and normalized_system(cfg.to_dict()["system"]) != meta["system"]:
        raise CliError("config system does not match the checkpoint")
    if not records:
        raise CliError(f"the {split_name!r} split is empty")
    # evaluation always happens in the system the checkpoint was trained for
    cfg.system = type(cfg.system)(**meta["system"])
    return params, records


def cmd_eval(cfg: ExperimentConfig, checkpoint: Path, data: Path, split_name: str, replay_dcp: bool, explicit_system: bool) -> dict:
    params, records = _checkpoint_and_data(cfg, checkpoint, data, split_name, explicit_system)
    sys_drift = cfg.system.build()
    out = _prepare_out(cfg)
    if replay_dcp:
        if any(r.dcp is None for r in records):
            raise CliError("--replay-dcp needs a dataset generated with DCPs")
        result = evaluate_pulses([r.dcp for r in records], records, sys_drift)
    else:
        result = evaluate(params, records, sys_drift)
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", "fidelity", "outlier"])
        for r, f in zip(records, result.fidelities):
            w.writerow([r.id, repr(float(f)), int(f < OUTLIER_THRESHOLD)])
    summary = {
        "source": "replay-dcp" if replay_dcp else "network",
        "count": len(records),
        "mean_fidelity": result.mean_fidelity,
        "outliers": result.outliers,
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_scan(cfg: ExperimentConfig, checkpoint: Path, data: Path, split_name: str, explicit_system: bool) -> dict:
    params, records = _checkpoint_and_data(cfg, checkpoint, data, split_name, explicit_system)
    sys_drift = cfg.system.build()
    out = _prepare_out(cfg)
    scan = analysis.sensitivity_scan(params, records, sys_drift, cfg.analysis.eps, cfg.analysis.threshold)
    matrix = analysis.pvalue_matrix(scan.distributions, sys_drift.slots)
    analysis.write_distributions_csv(out / "distributions.csv", scan)
    analysis.write_matrix_csv(out / "pvalues.csv", matrix, sys_drift.slots)
    analysis.write_histograms_csv(out / "histograms.csv", scan, cfg.analysis.bins)
    summary = {
        "eps": cfg.analysis.eps,
        "records_used": len(records) - len(scan.skipped_records),
        "records_skipped": len(scan.skipped_records),
        "perturbations_skipped": scan.skipped_perturbations,
        "empty_distributions": sum(1 for v in scan.distributions.values() if not v),
        "matrix_size": list(matrix.shape),
    }
    _write_json(out / "scan_summary.json", summary)
    return summary


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--out", help="output directory (overrides config 'output')")
    common.add_argument("--seed-data", type=int, help="dataset seed")
    common.add_argument("--seed-train", type=int, help="training seed")
    common.add_argument("--threads", type=int, help="max worker processes")
    common.add_argument("--drift", help="drift expression, e.g. 'sy' or '0.8sx+0.2sy'")
    common.add_argument("--gamma", type=float, help="drift strength")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="pulsecorr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="generate an NCP/DCP dataset")
    p = sub.add_parser("train", parents=[common], help="train the network on a dataset")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    for name, help_ in (("eval", "evaluate a checkpoint"), ("scan", "perturbation sensitivity scan")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--checkpoint", type=Path, required=True)
        p.add_argument("--data", type=Path, required=True, help="dataset directory")
        p.add_argument("--split", default="test", help="dataset split to use (default: test)")
        if name == "eval":
            p.add_argument("--replay-dcp", action="store_true", help="score the stored DCPs instead of the network")
        else:
            p.add_argument("--eps", type=float, help="perturbation size")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    explicit_system = args.config is not None or args.drift is not None or args.gamma is not None
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "gen-data":
            summary = cmd_gen_data(cfg)
        elif args.command == "train":
            summary = cmd_train(cfg, args.data)
        elif args.command == "eval":
            summary = cmd_eval(cfg, args.checkpoint, args.data, args.split, args.replay_dcp, explicit_system)
        else:
            summary = cmd_scan(cfg, args.checkpoint, args.data, args.split, explicit_system)
    except (ConfigError, CliError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
