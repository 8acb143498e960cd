"""Command-line harness: dataset generation, training, and analysis reports.

Subcommands
-----------
``gen``       write a dataset cache (edge lists, targets, manifest)
``train``     run seeded training; emits train.csv, summary.json,
              checkpoint.json, alpha.csv, config.json, outputs.json
``analyze``   jacobian | influence | ablate | gradcheck

Exit codes: 0 success, 2 usage or configuration error, 3 numerical abort.
Every command is deterministic given its flags and seed.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import DEFAULTS, load_config_file, resolve_config
from .datasets import TASKS, load_dataset, make_dataset, save_dataset
from .graphs import connected_components, read_edge_list, path_graph
from .models import (MODEL_KINDS, WEIGHT_MODES, ModelConfig, build_model,
                     load_checkpoint)
from .sensitivity import (INFLUENCE_NORMS, influence_distribution,
                          jacobian_energy, write_influence_csv,
                          write_jacobian_csv, verify_prop2)
from .training import NumericalAbort, gradient_check
from .experiments import run_ablation, run_seeds, run_training, write_run_manifest

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="s3gnn",
        description="global-mixing graph dynamics: datasets, training, analysis")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a dataset cache")
    gen.add_argument("--task", required=True, choices=TASKS)
    gen.add_argument("--count", type=int, default=100)
    gen.add_argument("--min-n", type=int, default=25)
    gen.add_argument("--max-n", type=int, default=35)
    gen.add_argument("--families", type=str,
                     default="erdos_renyi,barabasi_albert,caterpillar")
    gen.add_argument("--m", type=int, default=23, help="barbell clique size")
    gen.add_argument("--p", type=int, default=4, help="barbell bridge length")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=cmd_gen)

    tr = sub.add_parser("train", help="train a model on a dataset cache")
    tr.add_argument("--config", type=str, default=None, help="JSON run config")
    tr.add_argument("--data", type=str, default=None, help="dataset cache directory")
    tr.add_argument("--seed", type=str, default=None,
                    help="seed, or an inclusive range like 0..3")
    tr.add_argument("--out", type=str, default=None)
    for key in ("model", "mode", "cheb_basis"):
        tr.add_argument(f"--{key.replace('_', '-')}", type=str, default=None)
    for key in ("layers", "hidden", "dec_hidden", "cheb_order", "epochs", "accum"):
        tr.add_argument(f"--{key.replace('_', '-')}", type=int, default=None)
    for key in ("epsilon", "gamma", "alpha_init", "c_init", "lr", "weight_decay"):
        tr.add_argument(f"--{key.replace('_', '-')}", type=float, default=None)
    tr.set_defaults(handler=cmd_train)

    an = sub.add_parser("analyze", help="jacobian / influence / ablate / gradcheck")
    an_sub = an.add_subparsers(dest="analysis", required=True)

    ja = an_sub.add_parser("jacobian", help="per-layer energies and identity residuals")
    _add_stack_source(ja)
    ja.add_argument("--graph", required=True, help="edge-list file")
    ja.add_argument("--tol", type=float, default=1e-10)
    ja.add_argument("--out", required=True)
    ja.set_defaults(handler=cmd_analyze_jacobian)

    inf = an_sub.add_parser("influence", help="all-pairs influence with bounds")
    _add_stack_source(inf)
    inf.add_argument("--graph", required=True, help="edge-list file")
    inf.add_argument("--ell", type=int, default=None, help="layer (default: depth)")
    inf.add_argument("--norm", choices=INFLUENCE_NORMS, default="fro")
    inf.add_argument("--out", required=True)
    inf.set_defaults(handler=cmd_analyze_influence)

    ab = an_sub.add_parser("ablate", help="train per weight mode and compare")
    ab.add_argument("--config", type=str, default=None)
    ab.add_argument("--data", type=str, default=None, required=True)
    ab.add_argument("--modes", type=str, default="free,antisymmetric,cayley")
    ab.add_argument("--seeds", type=str, default="0..3")
    ab.add_argument("--epochs", type=int, default=None)
    ab.add_argument("--out", required=True)
    ab.set_defaults(handler=cmd_analyze_ablate)

    gc = an_sub.add_parser("gradcheck", help="finite-difference gradient check")
    gc.add_argument("--kind", choices=MODEL_KINDS, default="s3gnn")
    gc.add_argument("--mode", choices=WEIGHT_MODES, default="antisymmetric")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--threshold", type=float, default=1e-5)
    gc.set_defaults(handler=cmd_analyze_gradcheck)
    return parser


def _add_stack_source(sp) -> None:
    sp.add_argument("--checkpoint", type=str, default=None,
                    help="model checkpoint; omit for a fresh-initialized stack")
    sp.add_argument("--model", type=str, default="s3gnn",
                    help="fresh-init kind (accepts 'diag' for diag_filter)")
    sp.add_argument("--mode", choices=WEIGHT_MODES, default="antisymmetric")
    sp.add_argument("--layers", type=int, default=2)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--epsilon", type=float, default=0.1)
    sp.add_argument("--gamma", type=float, default=0.0)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--C", type=float, default=1.0, help="diag filter coefficient")
    sp.add_argument("--seed", type=int, default=0)


def _say(args, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(message)


def cmd_gen(args) -> int:
    families = tuple(f for f in args.families.split(",") if f)
    kw = {"min_n": args.min_n, "max_n": args.max_n, "families": families,
          "m": args.m, "p": args.p}
    ds = make_dataset(args.task, seed=args.seed, count=args.count, **kw)
    manifest_hash = save_dataset(ds, args.out)
    sizes = sorted({s.graph.n for s in ds.samples})
    _say(args, f"wrote {len(ds.samples)} {args.task} samples to {args.out} "
               f"(n range {sizes[0]}..{sizes[-1]})")
    print(f"manifest sha256 {manifest_hash}")
    return EXIT_OK


def _parse_seeds(text: str | None, fallback: int) -> list[int]:
    if text is None:
        return [fallback]
    if ".." in text:
        lo, hi = text.split("..", maxsplit=1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",") if s]


def cmd_train(args) -> int:
    file_values = load_config_file(args.config) if args.config else None
    override_keys = [k for k in DEFAULTS if k not in ("seed",)]
    overrides = {k: getattr(args, k) for k in override_keys if hasattr(args, k)}
    resolved = resolve_config(file_values, overrides)
    if resolved["data"] is None:
        raise ValueError("no dataset: pass --data or set 'data' in the config")
    out_dir = resolved["out"]
    dataset = load_dataset(resolved["data"])
    seeds = _parse_seeds(args.seed, int(resolved["seed"]))
    if len(seeds) == 1:
        resolved = {**resolved, "seed": seeds[0]}
        report = run_training(resolved, dataset, out_dir, seed=seeds[0])
        _say(args, f"test mse {report.test_mse:.6g} "
                   f"(log10 {report.test_log10_mse:.4g}), params {report.params}")
    else:
        reports = run_seeds(resolved, dataset, seeds, out_dir)
        logs = [r.test_log10_mse for r in reports]
        _say(args, f"seeds {seeds}: mean test log10(mse) {np.mean(logs):.4g} "
                   f"+- {np.std(logs):.4g}")
    return EXIT_OK


def _stack_for_graph(args, k: int):
    if args.checkpoint:
        stack = load_checkpoint(args.checkpoint)
        if stack.k != k:
            raise ValueError(f"checkpoint was built for {stack.k} components, graph has {k}")
        return stack
    kind = {"diag": "diag_filter"}.get(args.model, args.model)
    cfg = ModelConfig(kind=kind, mode=args.mode, n_layers=args.layers,
                      d=args.d, d_in=args.d, epsilon=args.epsilon,
                      gamma=args.gamma, alpha_init=args.alpha, c_init=args.C,
                      encoder=False, decoder=False)
    return build_model(cfg, k=k, seed=args.seed)


def cmd_analyze_jacobian(args) -> int:
    g = read_edge_list(args.graph)
    comps = connected_components(g)
    stack = _stack_for_graph(args, comps.k)
    os.makedirs(args.out, exist_ok=True)
    entries = [jacobian_energy(stack, g, comps, i)
               for i in range(stack.config.n_layers)]
    write_jacobian_csv(entries, os.path.join(args.out, "jacobian.csv"))
    write_run_manifest(args.out)
    for e in entries:
        _say(args, f"layer {e.layer}: energy {e.energy_closed_form:.12g} "
                   f"(power {e.energy_power_iter:.12g}) residual {e.prop2_residual:.3g}")
    cfg = stack.config
    if cfg.kind == "s3gnn" and cfg.mode == "antisymmetric" and cfg.gamma == 0.0 \
            and cfg.residual:
        worst = max(verify_prop2(stack, g, comps, i, tol=args.tol)
                    for i in range(cfg.n_layers))
        print(f"identity residual max {worst:.3e} "
              f"({'PASS' if worst <= args.tol else 'FAIL'} at tol {args.tol:g})")
    return EXIT_OK


def cmd_analyze_influence(args) -> int:
    g = read_edge_list(args.graph)
    comps = connected_components(g)
    stack = _stack_for_graph(args, comps.k)
    ell = args.ell if args.ell is not None else stack.config.n_layers
    report = influence_distribution(stack, g, comps, ell, norm=args.norm)
    os.makedirs(args.out, exist_ok=True)
    write_influence_csv(report, os.path.join(args.out, "influence.csv"))
    write_run_manifest(args.out)
    summary = report.summary()
    _say(args, f"{summary['pairs']} pairs ({summary['same_component_pairs']} same-component); "
               f"fraction >= prop1 bound: {summary['frac_at_or_above_prop1']:.4g}; "
               f"fraction >= eq8 bound: {summary['frac_at_or_above_eq8']:.4g}")
    return EXIT_OK


def cmd_analyze_ablate(args) -> int:
    file_values = load_config_file(args.config) if args.config else None
    overrides = {"data": args.data}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    resolved = resolve_config(file_values, overrides)
    dataset = load_dataset(resolved["data"])
    modes = [m for m in args.modes.split(",") if m]
    seeds = _parse_seeds(args.seeds, int(resolved["seed"]))
    table = run_ablation(resolved, dataset, modes, seeds, args.out)
    _say(args, "mode          median test mse")
    for mode in modes:
        med = np.median([r.test_mse for r in table[mode]])
        _say(args, f"{mode:<13} {med:.6g}")
    return EXIT_OK


def cmd_analyze_gradcheck(args) -> int:
    from .datasets import Sample
    from .models import build_context
    from .rng import Rng

    g = path_graph(6)
    comps = connected_components(g)
    rng = Rng(args.seed)
    x = rng.uniform_matrix(g.n, 3, -1.0, 1.0)
    y = rng.uniform_array(g.n, -1.0, 1.0)
    cfg = ModelConfig(kind=args.kind, mode=args.mode, n_layers=2, d=4, d_in=3,
                      d_out=1, dec_hidden=5, cheb_order=3, epsilon=0.1)
    stack = build_model(cfg, k=comps.k, seed=args.seed)
    ctx = build_context(cfg, g, comps)
    sample = Sample(g, comps, x, y, None, None)
    worst, where = gradient_check(stack, ctx, sample, h=1e-5)
    print(f"worst relative gradient error {worst:.3e} at {where}")
    return EXIT_OK if worst <= args.threshold else 1


if __name__ == "__main__":
    sys.exit(main())
