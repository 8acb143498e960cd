"""Run configuration: documented key set, defaults, file/flag resolution.

A run config is a flat JSON object.  Unknown keys are rejected, missing
keys fall back to the defaults below, command-line flags override file
values, and the fully-resolved document is echoed into the output
directory as ``config.json``.
"""

from __future__ import annotations

import json

from .models import MODEL_KINDS, WEIGHT_MODES, ModelConfig
from .training import TrainConfig

# paper-reported reference settings: step size 0.1, initial alpha 1.0,
# learning rate 1e-3, Adam (0.9, 0.999, 1e-8)
DEFAULTS: dict = {
    "task": "sssp",
    "data": None,
    "out": "run",
    "model": "s3gnn",
    "mode": "antisymmetric",
    "layers": 4,
    "hidden": 64,
    "dec_hidden": 64,
    "cheb_order": 10,
    "epsilon": 0.1,
    "gamma": 0.0,
    "alpha_init": 1.0,
    "c_init": 1.0,
    "shares_weights": True,
    "residual": True,
    "spatial_term": True,
    "tie_alpha": False,
    "self_loops": False,
    "cheb_basis": "normalized",
    "lr": 0.001,
    "beta1": 0.9,
    "beta2": 0.999,
    "adam_eps": 1e-8,
    "weight_decay": 0.0,
    "epochs": 200,
    "accum": 16,
    "seed": 0,
}


def resolve_config(file_values: dict | None = None,
                   overrides: dict | None = None) -> dict:
    """defaults <- file <- flags; rejects keys outside the documented set."""
    resolved = dict(DEFAULTS)
    for source, name in ((file_values, "config file"), (overrides, "flag")):
        if not source:
            continue
        for key, value in source.items():
            if key not in DEFAULTS:
                raise ValueError(f"unknown {name} key {key!r}; known keys: "
                                 + ", ".join(sorted(DEFAULTS)))
            if value is not None:
                resolved[key] = value
    if resolved["model"] not in MODEL_KINDS:
        raise ValueError(f"unknown model {resolved['model']!r}")
    if resolved["mode"] not in WEIGHT_MODES:
        raise ValueError(f"unknown weight mode {resolved['mode']!r}")
    return resolved


def load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return doc


def save_config(resolved: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(resolved, fh, sort_keys=True, indent=1)
        fh.write("\n")


def model_config_from_resolved(resolved: dict, d_in: int, d_out: int = 1,
                               pool: str = "none") -> ModelConfig:
    return ModelConfig(
        kind=resolved["model"],
        mode=resolved["mode"],
        n_layers=int(resolved["layers"]),
        d=int(resolved["hidden"]),
        d_in=d_in,
        d_out=d_out,
        dec_hidden=int(resolved["dec_hidden"]),
        cheb_order=int(resolved["cheb_order"]),
        epsilon=float(resolved["epsilon"]),
        gamma=float(resolved["gamma"]),
        shares_weights=bool(resolved["shares_weights"]),
        residual=bool(resolved["residual"]),
        spatial_term=bool(resolved["spatial_term"]),
        alpha_init=float(resolved["alpha_init"]),
        c_init=float(resolved["c_init"]),
        tie_alpha=bool(resolved["tie_alpha"]),
        self_loops=bool(resolved["self_loops"]),
        cheb_basis=resolved["cheb_basis"],
        pool=pool,
    )


def train_config_from_resolved(resolved: dict, model: ModelConfig,
                               seed: int | None = None) -> TrainConfig:
    return TrainConfig(
        model=model,
        lr=float(resolved["lr"]),
        beta1=float(resolved["beta1"]),
        beta2=float(resolved["beta2"]),
        adam_eps=float(resolved["adam_eps"]),
        weight_decay=float(resolved["weight_decay"]),
        epochs=int(resolved["epochs"]),
        accum=int(resolved["accum"]),
        seed=int(resolved["seed"] if seed is None else seed),
    )
