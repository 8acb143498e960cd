"""Losses, Adam, the deterministic training loop, and gradient checking.

A training run is a pure function of (config, dataset): float64 end to end,
fixed iteration order, no hidden randomness beyond the seeded weight init.
Rerunning with the same seed reproduces the loss curves byte for byte.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset, Sample
from .models import (GraphContext, ModelConfig, ModelStack, build_context,
                     build_model, model_apply, model_backward, param_count,
                     zero_grads)

NEG_INF = float("-inf")


class NumericalAbort(RuntimeError):
    """Training hit a non-finite loss; carries epoch and parameter norms."""

    def __init__(self, epoch: int, param_norms: dict[str, float]):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch
        self.param_norms = param_norms


def mse_loss(pred: np.ndarray, target: np.ndarray,
             mask: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean squared error over masked entries; returns (loss, dLoss/dPred)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64).reshape(pred.shape)
    if mask is None:
        mask = np.ones(pred.shape[0], dtype=bool)
    count = int(mask.sum()) * pred.shape[1]
    if count == 0:
        raise ValueError("empty supervision mask")
    diff = np.where(mask[:, None], pred - target, 0.0)
    loss = float(np.sum(diff * diff) / count)
    return loss, 2.0 * diff / count


def loss(pred, target, mask=None, kind: str = "mse") -> float:
    """Scalar loss; 'log10_mse' is a reporting transform of the mse."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim == 1:
        pred = pred[:, None]
    value, _ = mse_loss(pred, target, mask)
    if kind == "mse":
        return value
    if kind == "log10_mse":
        return log10_mse(value)
    raise ValueError(f"unknown loss kind {kind!r}")


def log10_mse(value: float) -> float:
    return float(np.log10(value)) if value > 0.0 else NEG_INF


class Adam:
    """Bias-corrected Adam over a flat parameter dict, deterministic order."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name in params:
            g = grads[name]
            if self.weight_decay:
                g = g + self.weight_decay * params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(state: Adam, params: dict, grads: dict) -> Adam:
    state.step(params, grads)
    return state


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    epochs: int = 200
    accum: int = 16          # graphs per optimizer step
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.accum < 1:
            raise ValueError(f"accumulation size must be >= 1, got {self.accum}")


@dataclass
class TrainReport:
    train_losses: list[float]
    val_losses: list[float]
    test_mse: float
    test_log10_mse: float
    params: int
    best_epoch: int
    alpha_trace: list[list[float]]     # per recorded layer, best-checkpoint alphas
    wall_clock_s: float
    seed: int


def _sample_target(sample: Sample):
    if sample.y_graph is not None:
        return np.array([[sample.y_graph]]), None
    return sample.y_node[:, None], sample.mask


def _eval_split(stack: ModelStack, contexts, samples) -> float:
    total = 0.0
    for ctx, sample in zip(contexts, samples):
        trace = model_apply(stack, ctx, sample.x)
        target, mask = _sample_target(sample)
        value, _ = mse_loss(trace.pred, target, mask)
        total += value
    return total / len(samples)


def _alpha_values(stack: ModelStack) -> list[list[float]]:
    if stack.config.kind != "s3gnn":
        return []
    return [[float(a) for a in stack.alpha(i)] for i in range(stack.config.n_layers)]


def train(config: TrainConfig, dataset: Dataset) -> tuple[TrainReport, ModelStack]:
    """Full-batch-per-graph training with sequential gradient accumulation.

    Gradients are averaged over each accumulation chunk, one Adam step per
    chunk; the returned model carries the best-validation parameters (ties
    broken by the earliest epoch).
    """
    t0 = time.perf_counter()
    cfg = config.model
    k = dataset.samples[0].comps.k
    stack = build_model(cfg, k=k, seed=config.seed)
    opt = Adam(config.lr, config.beta1, config.beta2, config.adam_eps,
               config.weight_decay)

    contexts = {name: [build_context(cfg, s.graph, s.comps) for s in dataset.split(name)]
                for name in ("train", "val", "test")}
    splits = {name: dataset.split(name) for name in ("train", "val", "test")}

    train_losses: list[float] = []
    val_losses: list[float] = []
    best_val = float("inf")
    best_epoch = -1
    best_params = {name: p.copy() for name, p in stack.params.items()}

    initial_train = _eval_split(stack, contexts["train"], splits["train"])
    initial_val = _eval_split(stack, contexts["val"], splits["val"])
    train_losses.append(initial_train)
    val_losses.append(initial_val)
    best_val = initial_val
    best_epoch = 0
    for epoch in range(1, config.epochs + 1):
        epoch_loss = 0.0
        pending = zero_grads(stack)
        pending_count = 0
        for ctx, sample in zip(contexts["train"], splits["train"]):
            trace = model_apply(stack, ctx, sample.x)
            target, mask = _sample_target(sample)
            value, d_pred = mse_loss(trace.pred, target, mask)
            epoch_loss += value
            grads = model_backward(stack, ctx, trace, d_pred)
            for name in pending:
                pending[name] += grads[name]
            pending_count += 1
            if pending_count == config.accum:
                _apply_chunk(opt, stack, pending, pending_count)
                pending = zero_grads(stack)
                pending_count = 0
        if pending_count:
            _apply_chunk(opt, stack, pending, pending_count)

        epoch_loss /= len(splits["train"])
        if not np.isfinite(epoch_loss):
            norms = {name: float(np.linalg.norm(p)) for name, p in stack.params.items()}
            raise NumericalAbort(epoch, norms)
        val_loss = _eval_split(stack, contexts["val"], splits["val"])
        train_losses.append(epoch_loss)
        val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {name: p.copy() for name, p in stack.params.items()}

    stack.params = best_params
    test_mse = _eval_split(stack, contexts["test"], splits["test"])
    report = TrainReport(
        train_losses=train_losses, val_losses=val_losses,
        test_mse=test_mse, test_log10_mse=log10_mse(test_mse),
        params=param_count(stack), best_epoch=best_epoch,
        alpha_trace=_alpha_values(stack),
        wall_clock_s=time.perf_counter() - t0, seed=config.seed)
    return report, stack


def _apply_chunk(opt: Adam, stack: ModelStack, pending: dict, count: int) -> None:
    for name in pending:
        pending[name] /= count
    opt.step(stack.params, pending)


# ---------------------------------------------------------------------------
# finite-difference gradient checking


def gradient_check(stack: ModelStack, ctx: GraphContext, sample: Sample,
                   h: float = 1e-5) -> tuple[float, str]:
    """Worst relative error of analytic gradients vs central differences.

    Relative error per scalar is |a - n| / max(|a|, |n|, 1e-3); the floor
    keeps finite-difference roundoff (about 1e-10 here) from dominating
    near-zero gradient entries.
    """
    target, mask = _sample_target(sample)

    def loss_now() -> float:
        trace = model_apply(stack, ctx, sample.x)
        value, _ = mse_loss(trace.pred, target, mask)
        return value

    trace = model_apply(stack, ctx, sample.x)
    _, d_pred = mse_loss(trace.pred, target, mask)
    analytic = model_backward(stack, ctx, trace, d_pred)

    worst = 0.0
    worst_at = ""
    for name in sorted(stack.params):
        p = stack.params[name]
        flat = p.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for idx in range(flat.size):
            keep = flat[idx]
            flat[idx] = keep + h
            up = loss_now()
            flat[idx] = keep - h
            down = loss_now()
            flat[idx] = keep
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(a_flat[idx]), abs(numeric), 1e-3)
            err = abs(a_flat[idx] - numeric) / denom
            if err > worst:
                worst = err
                worst_at = f"{name}[{idx}]"
    return worst, worst_at
