"""Model stacks: five propagation dynamics with hand-derived reverse mode.

Kinds
-----
``s3gnn``
    H(l+1) = H(l) + eps * (P_alpha H(l) + A_hat H(l)) W(l), where P_alpha is
    the per-component scaled mean (global mixing) and W(l) the mode-mapped
    feature transform.  ``residual=False`` switches to the bare operator form
    H(l+1) = eps * (P_alpha + A_hat) H(l) W(l) used by the influence bound
    analyses; ``spatial_term=False`` drops the A_hat pathway (mixing only).
``gcn``
    H(l+1) = tanh(A_hat H(l) W(l)); optional self-loops in A_hat.
``chebnet``
    H(l+1) = sum_p T_p(Ltil) H(l) W_p(l), Chebyshev recurrence on the
    rescaled Laplacian.
``stable_chebnet``
    H(l+1) = H(l) + eps * sum_p T_p(Ltil) H(l) W_p(l).
``diag_filter``
    H(l+1) = C P_0 H(l): only the component-mean channel survives, with
    positive per-component coefficients C = exp(c_raw).

All dynamics except the GCN are linear in H; nonlinearity lives in the
encoder/decoder heads (one tanh hidden layer in the decoder).  Weight modes
map the stored raw matrix to the effective transform: ``free`` uses it as
is, ``antisymmetric`` uses W - W^T, ``cayley`` the orthogonal
(I - S)(I + S)^-1 of the antisymmetrized raw weight.  A dissipation
``gamma`` shifts every effective weight by -gamma * I.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sp

from .graphs import (ComponentStructure, Graph, component_means, component_sums,
                     connected_components, global_mix_apply, operators)
from .linalg import power_iteration_sym
from .rng import Rng

MODEL_KINDS = ("s3gnn", "gcn", "chebnet", "stable_chebnet", "diag_filter")
WEIGHT_MODES = ("free", "antisymmetric", "cayley")
CHECKPOINT_FORMAT = "s3gnn-checkpoint-v1"


def antisymmetrize(w_raw: np.ndarray) -> np.ndarray:
    """W_raw - W_raw^T; surjective onto antisymmetric matrices."""
    w_raw = np.asarray(w_raw, dtype=np.float64)
    if w_raw.ndim != 2 or w_raw.shape[0] != w_raw.shape[1]:
        raise ValueError(f"antisymmetrize needs a square matrix, got {w_raw.shape}")
    return w_raw - w_raw.T


def cayley_orthogonal(s: np.ndarray) -> np.ndarray:
    """Orthogonal Q = (I - S)(I + S)^-1 for antisymmetric S."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"cayley transform needs a square matrix, got {s.shape}")
    asym = float(np.max(np.abs(s + s.T))) if s.size else 0.0
    if asym > 1e-12:
        raise ValueError(f"cayley input not antisymmetric (defect {asym:.3e})")
    eye = np.eye(s.shape[0])
    return np.linalg.solve((eye + s).T, (eye - s).T).T


def effective_weight(w_raw: np.ndarray, mode: str, gamma: float = 0.0) -> np.ndarray:
    if mode == "free":
        w = np.asarray(w_raw, dtype=np.float64)
    elif mode == "antisymmetric":
        w = antisymmetrize(w_raw)
    elif mode == "cayley":
        w = cayley_orthogonal(antisymmetrize(w_raw))
    else:
        raise ValueError(f"unknown weight mode {mode!r}; choose from {WEIGHT_MODES}")
    if gamma != 0.0:
        w = w - gamma * np.eye(w.shape[0])
    return w


@dataclass
class ModelConfig:
    kind: str = "s3gnn"
    mode: str = "antisymmetric"
    n_layers: int = 4
    d: int = 64
    d_in: int = 1
    d_out: int = 1
    dec_hidden: int = 64
    cheb_order: int = 10
    epsilon: float = 0.1
    gamma: float = 0.0
    shares_weights: bool = True
    residual: bool = True
    spatial_term: bool = True
    alpha_init: float = 1.0
    c_init: float = 1.0
    tie_alpha: bool = False
    self_loops: bool = False
    cheb_basis: str = "normalized"
    pool: str = "none"
    encoder: bool = True
    decoder: bool = True

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; choose from {MODEL_KINDS}")
        if self.mode not in WEIGHT_MODES:
            raise ValueError(f"unknown weight mode {self.mode!r}; choose from {WEIGHT_MODES}")
        if self.epsilon < 0:
            raise ValueError(f"step size must be >= 0, got {self.epsilon}")
        if self.gamma < 0:
            raise ValueError(f"dissipation must be >= 0, got {self.gamma}")
        if self.n_layers < 0:
            raise ValueError(f"layer count must be >= 0, got {self.n_layers}")
        if self.cheb_order < 0:
            raise ValueError(f"Chebyshev order must be >= 0, got {self.cheb_order}")
        if self.cheb_basis not in ("normalized", "unnormalized"):
            raise ValueError(f"cheb_basis must be normalized|unnormalized, got {self.cheb_basis!r}")
        if self.pool not in ("none", "mean"):
            raise ValueError(f"pool must be none|mean, got {self.pool!r}")
        if self.c_init <= 0:
            raise ValueError(f"diag filter coefficient must be positive, got {self.c_init}")
        if self.kind == "diag_filter":
            self.residual = False
        if self.kind == "s3gnn" and self.mode == "antisymmetric" and self.d % 2 == 1:
            warnings.warn(
                f"odd width d={self.d} with antisymmetric weights forces a zero "
                "smallest singular value; the product influence bound degenerates",
                stacklevel=2,
            )


def layer_weight_names(config: ModelConfig) -> list[str]:
    if config.kind == "s3gnn":
        return ["w0"] if config.shares_weights else ["w0", "w1"]
    if config.kind == "gcn":
        return ["w0"]
    if config.kind in ("chebnet", "stable_chebnet"):
        return [f"w{p}" for p in range(config.cheb_order + 1)]
    return []


@dataclass
class ModelStack:
    """Static configuration plus the flat dict of trainable tensors."""

    config: ModelConfig
    k: int
    params: dict[str, np.ndarray]

    def copy(self) -> "ModelStack":
        return ModelStack(self.config, self.k,
                          {name: p.copy() for name, p in self.params.items()})

    def alpha(self, layer: int) -> np.ndarray:
        a = self.params[f"layer{layer}.alpha"]
        return np.broadcast_to(a, (self.k,)) if a.size == 1 else a

    def diag_coeff(self, layer: int) -> np.ndarray:
        return np.exp(self.params[f"layer{layer}.c_raw"])

    def effective_weights(self, layer: int) -> list[np.ndarray]:
        cfg = self.config
        return [effective_weight(self.params[f"layer{layer}.{name}"], cfg.mode, cfg.gamma)
                for name in layer_weight_names(cfg)]


def build_model(config: ModelConfig, k: int = 1, seed: int = 0) -> ModelStack:
    """Initialize all tensors from the seeded generator in a fixed order.

    Matrices get entries uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)),
    biases start at zero, mixing coefficients at ``alpha_init``.
    """
    rng = Rng(seed)
    params: dict[str, np.ndarray] = {}

    def init_matrix(rows, cols):
        bound = 1.0 / np.sqrt(rows)
        return rng.uniform_matrix(rows, cols, -bound, bound)

    if config.encoder:
        params["enc.w"] = init_matrix(config.d_in, config.d)
        params["enc.b"] = np.zeros(config.d)
    elif config.d_in != config.d:
        raise ValueError("encoder disabled requires d_in == d")

    for i in range(config.n_layers):
        for name in layer_weight_names(config):
            params[f"layer{i}.{name}"] = init_matrix(config.d, config.d)
        if config.kind == "s3gnn":
            size = 1 if config.tie_alpha else k
            params[f"layer{i}.alpha"] = np.full(size, float(config.alpha_init))
        elif config.kind == "diag_filter":
            params[f"layer{i}.c_raw"] = np.full(k, float(np.log(config.c_init)))

    if config.decoder:
        params["dec.w1"] = init_matrix(config.d, config.dec_hidden)
        params["dec.b1"] = np.zeros(config.dec_hidden)
        params["dec.w2"] = init_matrix(config.dec_hidden, config.d_out)
        params["dec.b2"] = np.zeros(config.d_out)

    return ModelStack(config=config, k=k, params=params)


def param_count(stack: ModelStack) -> int:
    """Exact count of trainable scalars (raw weights counted as stored)."""
    return int(sum(p.size for p in stack.params.values()))


# ---------------------------------------------------------------------------
# graph context: the sparse operators a model kind needs, built once per graph


DENSE_CONTEXT_MAX_N = 128


@dataclass
class GraphContext:
    """Propagation operators for one graph.

    Operators are kept dense below DENSE_CONTEXT_MAX_N nodes (matmul beats
    CSR overhead at that scale) and CSR above; both support ``op @ H``.
    """

    graph: Graph
    comps: ComponentStructure
    a_hat: object
    ltil: object | None = None
    lambda_max: float | None = None


def to_dense_operator(op) -> np.ndarray:
    return op if isinstance(op, np.ndarray) else op.toarray()


def build_context(config: ModelConfig, g: Graph,
                  comps: ComponentStructure | None = None) -> GraphContext:
    comps = comps if comps is not None else connected_components(g)
    self_loops = config.self_loops and config.kind == "gcn"
    dense = g.n <= DENSE_CONTEXT_MAX_N
    ops = operators(g, normalized=False, self_loops=self_loops)
    a_hat = ops.norm_adj.toarray() if dense else ops.norm_adj
    ctx = GraphContext(graph=g, comps=comps, a_hat=a_hat)
    if config.kind in ("chebnet", "stable_chebnet"):
        if config.cheb_basis == "normalized":
            # lambda_max of the normalized Laplacian is bounded by 2, so the
            # rescaled operator collapses to L_hat - I = -A_hat
            ctx.lambda_max = 2.0
            norm_adj = operators(g, normalized=True).norm_adj
            ltil = -norm_adj
        else:
            lap = operators(g, normalized=False).laplacian
            lam = power_iteration_sym(lap.toarray(), tol=1e-10, max_iter=10000)
            ctx.lambda_max = 1.01 * max(lam, 1e-12)
            ltil = (2.0 / ctx.lambda_max) * lap - sp.eye_array(g.n, format="csr")
        ctx.ltil = ltil.toarray() if dense else ltil.tocsr()
    return ctx


# ---------------------------------------------------------------------------
# forward


@dataclass
class ForwardTrace:
    """Per-layer features H(0..L) plus the caches the backward pass needs."""

    hs: list[np.ndarray]
    caches: list[dict]
    x: np.ndarray | None = None
    pred: np.ndarray | None = None
    dec_cache: dict | None = None


def encode(stack: ModelStack, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not stack.config.encoder:
        if x.shape[1] != stack.config.d:
            raise ValueError(f"no encoder: input width {x.shape[1]} must equal d={stack.config.d}")
        return x.copy()
    if x.shape[1] != stack.config.d_in:
        raise ValueError(f"input width {x.shape[1]} != d_in={stack.config.d_in}")
    return x @ stack.params["enc.w"] + stack.params["enc.b"]


def layer_forward(stack: ModelStack, ctx: GraphContext, layer: int,
                  h: np.ndarray) -> tuple[np.ndarray, dict]:
    cfg = stack.config
    eps = cfg.epsilon
    if cfg.kind == "s3gnn":
        weights = stack.effective_weights(layer)
        alpha = stack.alpha(layer)
        mix = global_mix_apply(ctx.comps, alpha, h)
        spat = ctx.a_hat @ h if cfg.spatial_term else None
        if cfg.shares_weights:
            s = mix if spat is None else mix + spat
            update = s @ weights[0]
            cache = {"weights": weights, "mix_plus_spat": s}
        else:
            update = mix @ weights[0]
            if spat is not None:
                update = update + spat @ weights[1]
            cache = {"weights": weights, "mix": mix, "spat": spat}
        hn = h + eps * update if cfg.residual else eps * update
        return hn, cache
    if cfg.kind == "gcn":
        weights = stack.effective_weights(layer)
        ah = ctx.a_hat @ h
        hn = np.tanh(ah @ weights[0])
        return hn, {"weights": weights, "ah": ah, "out": hn}
    if cfg.kind in ("chebnet", "stable_chebnet"):
        weights = stack.effective_weights(layer)
        ts = cheb_basis_apply(ctx.ltil, h, cfg.cheb_order)
        update = sum(t @ w for t, w in zip(ts, weights))
        hn = h + eps * update if cfg.kind == "stable_chebnet" else update
        return hn, {"weights": weights, "ts": ts}
    if cfg.kind == "diag_filter":
        c = stack.diag_coeff(layer)
        hn = global_mix_apply(ctx.comps, c, h)
        return hn, {"c": c}
    raise ValueError(f"unknown model kind {cfg.kind!r}")


def cheb_basis_apply(ltil, h: np.ndarray, order: int) -> list[np.ndarray]:
    """[T_0(Ltil) h, ..., T_order(Ltil) h] by the three-term recurrence."""
    ts = [h]
    if order >= 1:
        ts.append(ltil @ h)
    for _ in range(2, order + 1):
        ts.append(2.0 * (ltil @ ts[-1]) - ts[-2])
    return ts


def cheb_adjoint_sum(ltil, gs: list[np.ndarray]) -> np.ndarray:
    """sum_p T_p(Ltil) G_p via the Clenshaw backward recurrence."""
    order = len(gs) - 1
    b1 = np.zeros_like(gs[0])
    b2 = np.zeros_like(gs[0])
    for j in range(order, 0, -1):
        b1, b2 = gs[j] + 2.0 * (ltil @ b1) - b2, b1
    return gs[0] + (ltil @ b1) - b2


def dynamics_forward(stack: ModelStack, ctx: GraphContext, h0: np.ndarray) -> ForwardTrace:
    hs = [h0]
    caches = []
    for i in range(stack.config.n_layers):
        h, cache = layer_forward(stack, ctx, i, hs[-1])
        hs.append(h)
        caches.append(cache)
    return ForwardTrace(hs=hs, caches=caches)


def decode(stack: ModelStack, h: np.ndarray) -> tuple[np.ndarray, dict]:
    cfg = stack.config
    pooled = h.mean(axis=0, keepdims=True) if cfg.pool == "mean" else h
    if not cfg.decoder:
        return pooled, {"pooled_rows": h.shape[0]}
    z = np.tanh(pooled @ stack.params["dec.w1"] + stack.params["dec.b1"])
    pred = z @ stack.params["dec.w2"] + stack.params["dec.b2"]
    return pred, {"pooled": pooled, "z": z, "pooled_rows": h.shape[0]}


def model_apply(stack: ModelStack, ctx: GraphContext, x: np.ndarray) -> ForwardTrace:
    """Encoder -> dynamics -> decoder; returns the full trace with pred."""
    if x.shape[0] != ctx.graph.n:
        raise ValueError(f"feature rows ({x.shape[0]}) != node count ({ctx.graph.n})")
    h0 = encode(stack, x)
    trace = dynamics_forward(stack, ctx, h0)
    trace.x = np.asarray(x, dtype=np.float64)
    trace.pred, trace.dec_cache = decode(stack, trace.hs[-1])
    return trace


def s3_forward(stack: ModelStack, g: Graph, comps: ComponentStructure,
               x: np.ndarray) -> ForwardTrace:
    if stack.config.kind != "s3gnn":
        raise ValueError(f"s3_forward called on kind {stack.config.kind!r}")
    return model_apply(stack, build_context(stack.config, g, comps), x)


def baseline_forward(stack: ModelStack, g: Graph, comps: ComponentStructure,
                     x: np.ndarray) -> ForwardTrace:
    if stack.config.kind == "s3gnn":
        raise ValueError("baseline_forward called on kind 's3gnn'")
    return model_apply(stack, build_context(stack.config, g, comps), x)


# ---------------------------------------------------------------------------
# backward


def zero_grads(stack: ModelStack) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(p) for name, p in stack.params.items()}


def raw_weight_grad(stack: ModelStack, layer: int, name: str,
                    d_eff: np.ndarray) -> np.ndarray:
    """Chain the effective-weight gradient back through the mode map."""
    mode = stack.config.mode
    if mode == "free":
        return d_eff
    if mode == "antisymmetric":
        return d_eff - d_eff.T
    # cayley: Q = (I - S)(I + S)^-1 with S = antisymmetrize(raw);
    # dL/dS = -(I + Q)^T dL/dQ (I - S)^-1, then antisymmetrize the result
    raw = stack.params[f"layer{layer}.{name}"]
    s = antisymmetrize(raw)
    eye = np.eye(s.shape[0])
    q = cayley_orthogonal(s)
    g_s = -(eye + q).T @ d_eff @ np.linalg.inv(eye - s)
    return g_s - g_s.T


def layer_backward(stack: ModelStack, ctx: GraphContext, layer: int,
                   h: np.ndarray, cache: dict, d_hn: np.ndarray,
                   grads: dict[str, np.ndarray]) -> np.ndarray:
    """Accumulate this layer's parameter grads; return dLoss/dH(layer)."""
    cfg = stack.config
    eps = cfg.epsilon
    comps = ctx.comps
    if cfg.kind == "s3gnn":
        weights = cache["weights"]
        alpha = stack.alpha(layer)
        if cfg.shares_weights:
            s = cache["mix_plus_spat"]
            d_eff = eps * (s.T @ d_hn)
            grads[f"layer{layer}.w0"] += raw_weight_grad(stack, layer, "w0", d_eff)
            ds = eps * (d_hn @ weights[0].T)
            dh = global_mix_apply(comps, alpha, ds)
            if cfg.spatial_term:
                dh = dh + ctx.a_hat @ ds
            d_alpha = _mix_coeff_grad(comps, ds, h)
        else:
            d_eff0 = eps * (cache["mix"].T @ d_hn)
            grads[f"layer{layer}.w0"] += raw_weight_grad(stack, layer, "w0", d_eff0)
            g0 = eps * (d_hn @ weights[0].T)
            dh = global_mix_apply(comps, alpha, g0)
            if cfg.spatial_term:
                d_eff1 = eps * (cache["spat"].T @ d_hn)
                grads[f"layer{layer}.w1"] += raw_weight_grad(stack, layer, "w1", d_eff1)
                dh = dh + ctx.a_hat @ (eps * (d_hn @ weights[1].T))
            d_alpha = _mix_coeff_grad(comps, g0, h)
        if cfg.tie_alpha:
            grads[f"layer{layer}.alpha"] += d_alpha.sum()
        else:
            grads[f"layer{layer}.alpha"] += d_alpha
        if cfg.residual:
            dh = dh + d_hn
        return dh
    if cfg.kind == "gcn":
        weights = cache["weights"]
        dz = d_hn * (1.0 - cache["out"] ** 2)
        d_eff = cache["ah"].T @ dz
        grads[f"layer{layer}.w0"] += raw_weight_grad(stack, layer, "w0", d_eff)
        return ctx.a_hat @ (dz @ weights[0].T)
    if cfg.kind in ("chebnet", "stable_chebnet"):
        weights = cache["weights"]
        ts = cache["ts"]
        scale = eps if cfg.kind == "stable_chebnet" else 1.0
        gs = []
        for p, (t, w) in enumerate(zip(ts, weights)):
            d_eff = scale * (t.T @ d_hn)
            grads[f"layer{layer}.w{p}"] += raw_weight_grad(stack, layer, f"w{p}", d_eff)
            gs.append(scale * (d_hn @ w.T))
        dh = cheb_adjoint_sum(ctx.ltil, gs)
        if cfg.kind == "stable_chebnet":
            dh = dh + d_hn
        return dh
    if cfg.kind == "diag_filter":
        c = cache["c"]
        dh = global_mix_apply(comps, c, d_hn)
        d_c = _mix_coeff_grad(comps, d_hn, h)
        grads[f"layer{layer}.c_raw"] += d_c * c
        return dh
    raise ValueError(f"unknown model kind {cfg.kind!r}")


def _mix_coeff_grad(comps: ComponentStructure, upstream: np.ndarray,
                    h: np.ndarray) -> np.ndarray:
    """d/d(alpha_r) of <upstream, P_alpha h>: colsum_r(upstream) . mean_r(h)."""
    return np.sum(component_sums(comps, upstream) * component_means(comps, h), axis=1)


def decode_backward(stack: ModelStack, dec_cache: dict,
                    d_pred: np.ndarray, grads: dict[str, np.ndarray]) -> np.ndarray:
    cfg = stack.config
    if not cfg.decoder:
        d_pooled = d_pred
    else:
        z = dec_cache["z"]
        pooled = dec_cache["pooled"]
        grads["dec.w2"] += z.T @ d_pred
        grads["dec.b2"] += d_pred.sum(axis=0)
        du = (d_pred @ stack.params["dec.w2"].T) * (1.0 - z ** 2)
        grads["dec.w1"] += pooled.T @ du
        grads["dec.b1"] += du.sum(axis=0)
        d_pooled = du @ stack.params["dec.w1"].T
    if cfg.pool == "mean":
        n = dec_cache["pooled_rows"]
        return np.repeat(d_pooled / n, n, axis=0)
    return d_pooled


def dynamics_backward(stack: ModelStack, ctx: GraphContext, trace: ForwardTrace,
                      d_hl: np.ndarray,
                      grads: dict[str, np.ndarray] | None = None):
    grads = zero_grads(stack) if grads is None else grads
    dh = d_hl
    for i in range(stack.config.n_layers - 1, -1, -1):
        dh = layer_backward(stack, ctx, i, trace.hs[i], trace.caches[i], dh, grads)
    return grads, dh


def model_backward(stack: ModelStack, ctx: GraphContext, trace: ForwardTrace,
                   d_pred: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients for every trainable tensor given dLoss/dPred."""
    if trace.dec_cache is None:
        raise ValueError("trace has no head caches; run model_apply first")
    grads = zero_grads(stack)
    d_hl = decode_backward(stack, trace.dec_cache, d_pred, grads)
    _, dh0 = dynamics_backward(stack, ctx, trace, d_hl, grads)
    if stack.config.encoder:
        grads["enc.w"] += trace.x.T @ dh0
        grads["enc.b"] += dh0.sum(axis=0)
    return grads


def backward(trace: ForwardTrace, stack: ModelStack, g: Graph,
             comps: ComponentStructure, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    """Spec-level reverse pass from dLoss/dPred over a model_apply trace."""
    ctx = build_context(stack.config, g, comps)
    return model_backward(stack, ctx, trace, grad_out)


# ---------------------------------------------------------------------------
# checkpoint file: JSON, full-precision floats, bit-identical round trip


def save_checkpoint(stack: ModelStack, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(stack.config),
        "k": stack.k,
        "params": {
            name: {"shape": list(p.shape), "data": [float(v) for v in p.ravel()]}
            for name, p in stack.params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> ModelStack:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    config = ModelConfig(**doc["config"])
    params = {
        name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in doc["params"].items()
    }
    return ModelStack(config=config, k=int(doc["k"]), params=params)
