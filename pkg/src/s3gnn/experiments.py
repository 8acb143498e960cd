"""Experiment drivers shared by the command-line harness and the test suite:
single training runs with their file artifacts, multi-seed aggregation,
weight-mode ablations, and parameter-count matching between model kinds.
"""

from __future__ import annotations

import json
import hashlib
import os
from dataclasses import replace

import numpy as np

from .config import model_config_from_resolved, save_config, train_config_from_resolved
from .datasets import Dataset
from .models import ModelConfig, build_model, param_count, save_checkpoint
from .sensitivity import fmt, write_alpha_csv
from .training import TrainReport, log10_mse, train


def task_heads(dataset: Dataset) -> tuple[int, int, str]:
    """(d_in, d_out, pool) implied by the dataset's task."""
    pool = "mean" if dataset.task == "diameter" else "none"
    return dataset.d_in, 1, pool


def count_params(config: ModelConfig) -> int:
    return param_count(build_model(config, k=1, seed=0))


def matched_config(reference: ModelConfig, template: ModelConfig,
                   tolerance: float = 0.01,
                   d_range=range(2, 257)) -> ModelConfig:
    """Adjust template's width and decoder width to match reference's count.

    Walks hidden widths from the largest that still fits and tops up with
    decoder units (each contributes d + d_out + 1 scalars), so the matched
    model keeps as much capacity as possible in its dynamics.  Raises if
    nothing lands within the relative tolerance.
    """
    target = count_params(reference)
    for d in sorted(d_range, reverse=True):
        base_cfg = replace(template, d=d, dec_hidden=1)
        base = count_params(base_cfg)
        if base > target:
            continue
        per_unit = d + template.d_out + 1
        h = max(1, round((target - base) / per_unit) + 1)
        for hh in (h, h - 1, h + 1):
            if hh < 1:
                continue
            cfg = replace(template, d=d, dec_hidden=hh)
            if abs(count_params(cfg) - target) <= tolerance * target:
                return cfg
    raise ValueError(
        f"could not match parameter count {target} within {tolerance:.0%}")


def write_train_csv(report: TrainReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for epoch, (tr, va) in enumerate(zip(report.train_losses, report.val_losses)):
            fh.write(f"{epoch},{fmt(tr)},{fmt(va)}\n")


def write_summary(report: TrainReport, model_kind: str, dataset: Dataset, path) -> None:
    doc = {
        "task": dataset.task,
        "model": model_kind,
        "seed": report.seed,
        "params": report.params,
        "test_metric": report.test_mse,
        "test_log10_mse": _json_float(report.test_log10_mse),
        "epochs": len(report.train_losses) - 1,
        "best_epoch": report.best_epoch,
        "wall_clock_s": report.wall_clock_s,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_run_manifest(out_dir, exclude=("outputs.json",)) -> None:
    names = sorted(f for f in os.listdir(out_dir)
                   if os.path.isfile(os.path.join(out_dir, f)) and f not in exclude)
    doc = {}
    for name in names:
        h = hashlib.sha256()
        with open(os.path.join(out_dir, name), "rb") as fh:
            h.update(fh.read())
        doc[name] = h.hexdigest()
    with open(os.path.join(out_dir, "outputs.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def run_training(resolved: dict, dataset: Dataset, out_dir,
                 seed: int | None = None,
                 model_config: ModelConfig | None = None) -> TrainReport:
    """One seeded training run; writes train.csv, summary, checkpoint, alpha.csv."""
    os.makedirs(out_dir, exist_ok=True)
    d_in, d_out, pool = task_heads(dataset)
    cfg = model_config if model_config is not None else \
        model_config_from_resolved(resolved, d_in=d_in, d_out=d_out, pool=pool)
    tcfg = train_config_from_resolved(resolved, cfg, seed=seed)
    report, stack = train(tcfg, dataset)

    # echo the configuration that actually ran (an explicit model config
    # overrides the resolved dimensions)
    effective = {**resolved, "seed": tcfg.seed, "model": cfg.kind,
                 "mode": cfg.mode, "layers": cfg.n_layers, "hidden": cfg.d,
                 "dec_hidden": cfg.dec_hidden, "cheb_order": cfg.cheb_order,
                 "epsilon": cfg.epsilon, "gamma": cfg.gamma}
    save_config(effective, os.path.join(out_dir, "config.json"))
    write_train_csv(report, os.path.join(out_dir, "train.csv"))
    write_summary(report, cfg.kind, dataset, os.path.join(out_dir, "summary.json"))
    save_checkpoint(stack, os.path.join(out_dir, "checkpoint.json"))
    if cfg.kind == "s3gnn":
        write_alpha_csv(stack, os.path.join(out_dir, "alpha.csv"))
    write_run_manifest(out_dir)
    return report


def run_seeds(resolved: dict, dataset: Dataset, seeds, out_dir,
              model_config: ModelConfig | None = None) -> list[TrainReport]:
    """Independent runs per seed plus an aggregate of the test metrics."""
    os.makedirs(out_dir, exist_ok=True)
    reports = []
    for seed in seeds:
        reports.append(run_training(resolved, dataset,
                                    os.path.join(out_dir, f"seed{seed}"),
                                    seed=seed, model_config=model_config))
    mses = np.array([r.test_mse for r in reports])
    logs = np.array([r.test_log10_mse for r in reports])
    agg = {
        "seeds": list(seeds),
        "test_mse": [float(v) for v in mses],
        "test_mse_mean": float(mses.mean()),
        "test_mse_median": float(np.median(mses)),
        "test_log10_mse": [_json_float(v) for v in logs],
        "test_log10_mse_mean": _json_float(logs.mean()),
        "test_log10_mse_std": _json_float(logs.std()),
    }
    with open(os.path.join(out_dir, "aggregate.json"), "w", encoding="utf-8") as fh:
        json.dump(agg, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return reports


def _json_float(v):
    v = float(v)
    if np.isfinite(v):
        return v
    return "-inf" if v < 0 else ("inf" if v > 0 else "nan")


def run_ablation(resolved: dict, dataset: Dataset, modes, seeds, out_dir) -> dict:
    """One training run per weight mode per seed; emits a comparison table."""
    os.makedirs(out_dir, exist_ok=True)
    table: dict[str, list[TrainReport]] = {}
    for mode in modes:
        mode_resolved = {**resolved, "mode": mode}
        table[mode] = run_seeds(mode_resolved, dataset, seeds,
                                os.path.join(out_dir, mode))
    with open(os.path.join(out_dir, "ablate.csv"), "w", encoding="utf-8") as fh:
        fh.write("mode,seed,test_mse,test_log10_mse\n")
        for mode in modes:
            for r in table[mode]:
                fh.write(f"{mode},{r.seed},{fmt(r.test_mse)},{fmt(r.test_log10_mse)}\n")
    return table
