"""Jacobian energies, pairwise influence, and the lower-bound calculators.

For the linear dynamics the layer map in vectorized form (columns stacked)
is ``vec(H') = J vec(H)`` with, for the globally-mixed model,
``J = I + eps * A_tot`` and ``A_tot = W_eff^T (x) (P_alpha + A_hat)``.
With antisymmetric weights and zero dissipation ``A_tot`` is antisymmetric,
so ``J^T J = I + eps^2 A_tot^T A_tot`` holds exactly; ``verify_prop2``
measures the Frobenius residual of that identity and ``jacobian_energy``
compares the closed-form layer energy ``sqrt(1 + eps^2 lambda_max)``
against an independent power-iteration estimate.

Influence is measured on the dynamics with heads bypassed: the d x d block
``J_is(l) = d h_i(l) / d h_s(0)`` is assembled by propagating unit inputs
through the linear forward, and compared against

* the per-component product bound
  ``prod_p eps * alpha_r(p)/n_r * sigma_min(W(p))``  (``prop1_bound``), and
* the diagonal-filter constants ``C^l / (2 |E_r|)`` (``eq8_bound``) and
  ``C^l * |I_d| / n``  (``diag_closed_form``).

The bound of ``prop1_bound`` is exact for the non-residual operator form;
for the residual dynamics it is reported as a reference line and violations
are counted, never asserted.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .graphs import (ComponentStructure, Graph, all_pairs_distances,
                     global_mix_apply)
from .linalg import (DENSE_CAP, JACOBI_CAP, entrywise_l1, frobenius, kron,
                     power_iteration_sym_robust, sigma_min, spectral_norm,
                     sym_eig)
from .models import (GraphContext, ModelStack, build_context, cheb_basis_apply,
                     dynamics_forward, to_dense_operator)

INFLUENCE_NORMS = ("fro", "l1", "spectral")

LINEAR_KINDS = ("s3gnn", "chebnet", "stable_chebnet", "diag_filter")


def _require_linear(stack: ModelStack, what: str) -> None:
    if stack.config.kind not in LINEAR_KINDS:
        raise ValueError(f"{what} requires a linear dynamics kind, got {stack.config.kind!r}")


def matrix_norm(block: np.ndarray, norm: str) -> float:
    if norm == "fro":
        return frobenius(block)
    if norm == "l1":
        return entrywise_l1(block)
    if norm == "spectral":
        return spectral_norm(block, tol=1e-13, max_iter=100000)
    raise ValueError(f"unknown norm {norm!r}; choose from {INFLUENCE_NORMS}")


def identity_norm(d: int, norm: str) -> float:
    if norm == "fro":
        return float(np.sqrt(d))
    if norm == "l1":
        return float(d)
    if norm == "spectral":
        return 1.0
    raise ValueError(f"unknown norm {norm!r}; choose from {INFLUENCE_NORMS}")


def mixing_dense(comps: ComponentStructure, alphas) -> np.ndarray:
    """Dense P_alpha from the block-constant formula (alpha_r / n_r per block)."""
    alphas = np.broadcast_to(np.atleast_1d(np.asarray(alphas, dtype=np.float64)),
                             (comps.k,))
    n = comps.component_of.size
    p = np.zeros((n, n))
    for r in range(comps.k):
        nodes = comps.nodes_of(r)
        p[np.ix_(nodes, nodes)] = alphas[r] / comps.sizes[r]
    return p


def a_tot_dense(stack: ModelStack, g: Graph, comps: ComponentStructure,
                layer: int, ctx: GraphContext | None = None) -> np.ndarray:
    """Dense nonidentity part of the vectorized layer map (without eps)."""
    _require_linear(stack, "a_tot_dense")
    cfg = stack.config
    ctx = ctx if ctx is not None else build_context(cfg, g, comps)
    n, d = g.n, cfg.d
    if n * d > DENSE_CAP:
        raise ValueError(f"dense operator size {n * d} exceeds cap {DENSE_CAP}; "
                         "use the implicit matvec path")
    if cfg.kind == "s3gnn":
        weights = stack.effective_weights(layer)
        p = mixing_dense(comps, stack.alpha(layer))
        a_hat = to_dense_operator(ctx.a_hat)
        if cfg.shares_weights:
            m = p + a_hat if cfg.spatial_term else p
            return kron(weights[0].T, m, cap=DENSE_CAP)
        out = kron(weights[0].T, p, cap=DENSE_CAP)
        if cfg.spatial_term:
            out = out + kron(weights[1].T, a_hat, cap=DENSE_CAP)
        return out
    if cfg.kind in ("chebnet", "stable_chebnet"):
        weights = stack.effective_weights(layer)
        ts = cheb_basis_apply(ctx.ltil, np.eye(n), cfg.cheb_order)
        out = np.zeros((n * d, n * d))
        for t, w in zip(ts, weights):
            out += kron(w.T, t, cap=DENSE_CAP)
        return out
    # diag_filter: vec(P_C H) = (I_d (x) P_C) vec(H)
    p = mixing_dense(comps, stack.diag_coeff(layer))
    return kron(np.eye(d), p, cap=DENSE_CAP)


def layer_jacobian_dense(stack: ModelStack, g: Graph, comps: ComponentStructure,
                         layer: int, ctx: GraphContext | None = None) -> np.ndarray:
    """Explicit (n d) x (n d) Jacobian of one layer in vec convention."""
    _require_linear(stack, "layer_jacobian_dense")
    cfg = stack.config
    a = a_tot_dense(stack, g, comps, layer, ctx=ctx)
    eye = np.eye(a.shape[0])
    if cfg.kind == "s3gnn":
        return eye + cfg.epsilon * a if cfg.residual else cfg.epsilon * a
    if cfg.kind == "stable_chebnet":
        return eye + cfg.epsilon * a
    # chebnet and diag_filter replace the state outright
    return a


@dataclass
class JacobianEntry:
    layer: int
    lambda_max: float
    energy_closed_form: float
    energy_power_iter: float
    prop2_residual: float


def jacobian_energy(stack: ModelStack, g: Graph, comps: ComponentStructure,
                    layer: int, ctx: GraphContext | None = None) -> JacobianEntry:
    """Closed-form and power-iteration layer energies, plus the identity residual.

    The closed form is sqrt(1 + eps^2 lambda_max(A_tot^T A_tot)) with
    lambda_max from the Jacobi eigensolve (power iteration past the Jacobi
    cap).  The independent estimate power-iterates J^T J - I, whose
    eigenvectors are those of J^T J but whose spectral gap does not collapse
    as eps -> 0; for non-antisymmetric or dissipative stacks that shifted
    matrix can be indefinite, so the iteration falls back to J^T J itself.
    The residual field is NaN whenever the exact identity does not apply.
    """
    if stack.config.kind != "s3gnn":
        raise ValueError(f"jacobian_energy is defined for the s3gnn dynamics, got {stack.config.kind!r}")
    cfg = stack.config
    ctx = ctx if ctx is not None else build_context(cfg, g, comps)
    eps = cfg.epsilon
    a = a_tot_dense(stack, g, comps, layer, ctx=ctx)
    gram = a.T @ a
    if gram.shape[0] <= JACOBI_CAP:
        w, _ = sym_eig(gram)
        lam = float(w[-1])
    else:
        lam = power_iteration_sym_robust(gram)
    closed = float(np.sqrt(1.0 + eps * eps * lam))

    j = layer_jacobian_dense(stack, g, comps, layer, ctx=ctx)
    jtj = j.T @ j
    exact_identity = cfg.mode == "antisymmetric" and cfg.gamma == 0.0 and cfg.residual
    if exact_identity:
        nu = power_iteration_sym_robust(jtj - np.eye(jtj.shape[0]))
        power = float(np.sqrt(1.0 + max(nu, 0.0)))
    else:
        power = float(np.sqrt(max(power_iteration_sym_robust(jtj), 0.0)))

    residual = float(np.linalg.norm(jtj - np.eye(jtj.shape[0]) - eps * eps * gram)) \
        if exact_identity else float("nan")
    return JacobianEntry(layer=layer, lambda_max=lam, energy_closed_form=closed,
                         energy_power_iter=power, prop2_residual=residual)


def verify_prop2(stack: ModelStack, g: Graph, comps: ComponentStructure,
                 layer: int, tol: float = 1e-10,
                 ctx: GraphContext | None = None) -> float:
    """Frobenius residual of J^T J = I + eps^2 A_tot^T A_tot.

    Only applicable with antisymmetric weights, zero dissipation, and the
    residual layer form; anywhere else the linear cross term survives and a
    ValueError is raised instead of reporting a meaningless residual.
    """
    cfg = stack.config
    if cfg.kind != "s3gnn":
        raise ValueError(f"exact energy identity applies to the s3gnn dynamics, got {cfg.kind!r}")
    if cfg.mode != "antisymmetric" or cfg.gamma != 0.0 or not cfg.residual:
        raise ValueError(
            "identity not applicable: requires antisymmetric mode, gamma=0, "
            f"residual form (got mode={cfg.mode!r}, gamma={cfg.gamma}, residual={cfg.residual})")
    ctx = ctx if ctx is not None else build_context(cfg, g, comps)
    a = a_tot_dense(stack, g, comps, layer, ctx=ctx)
    j = layer_jacobian_dense(stack, g, comps, layer, ctx=ctx)
    eps = cfg.epsilon
    residual = float(np.linalg.norm(j.T @ j - np.eye(j.shape[0]) - eps * eps * (a.T @ a)))
    return residual


def a_tot_matvec(stack: ModelStack, ctx: GraphContext, layer: int,
                 h: np.ndarray, transpose: bool = False) -> np.ndarray:
    """Apply A_tot (or its transpose) to an H-shaped block without forming it.

    P_alpha and A_hat are symmetric, so transposing only swaps the weight
    factors for their transposes.
    """
    cfg = stack.config
    if cfg.kind != "s3gnn":
        raise ValueError("implicit operator path is provided for the s3gnn dynamics")
    weights = stack.effective_weights(layer)
    alpha = stack.alpha(layer)
    if cfg.shares_weights:
        w = weights[0].T if transpose else weights[0]
        s = global_mix_apply(ctx.comps, alpha, h)
        if cfg.spatial_term:
            s = s + ctx.a_hat @ h
        return s @ w
    w0 = weights[0].T if transpose else weights[0]
    s = global_mix_apply(ctx.comps, alpha, h) @ w0
    if cfg.spatial_term:
        w1 = weights[1].T if transpose else weights[1]
        s = s + (ctx.a_hat @ h) @ w1
    return s


def jacobian_energy_implicit(stack: ModelStack, g: Graph, comps: ComponentStructure,
                             layer: int, tol: float = 1e-12,
                             max_iter: int = 200000) -> float:
    """Closed-form energy via power iteration on the implicit A_tot^T A_tot."""
    cfg = stack.config
    ctx = build_context(cfg, g, comps)
    n, d = g.n, cfg.d
    v = np.full((n, d), 1.0 / np.sqrt(n * d))
    lam = 0.0
    for _ in range(max_iter):
        w = a_tot_matvec(stack, ctx, layer,
                         a_tot_matvec(stack, ctx, layer, v), transpose=True)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            lam = 0.0
            break
        v = w / norm
        lam_new = float(np.sum(v * a_tot_matvec(
            stack, ctx, layer, a_tot_matvec(stack, ctx, layer, v), transpose=True)))
        if abs(lam_new - lam) < tol:
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(1.0 + cfg.epsilon ** 2 * max(lam, 0.0)))


# ---------------------------------------------------------------------------
# pairwise influence


def influence_blocks_from_source(stack: ModelStack, ctx: GraphContext,
                                 s: int, ell: int) -> np.ndarray:
    """All blocks d h_i(ell) / d h_s(0), shape (n, d, d), by unit-input forwards."""
    _require_linear(stack, "influence")
    cfg = stack.config
    if ell > cfg.n_layers:
        raise ValueError(f"layer {ell} exceeds stack depth {cfg.n_layers}")
    n, d = ctx.graph.n, cfg.d
    blocks = np.zeros((n, d, d))
    sub = stack if ell == cfg.n_layers else \
        ModelStack(replace(cfg, n_layers=ell), stack.k, stack.params)
    for a in range(d):
        h0 = np.zeros((n, d))
        h0[s, a] = 1.0
        trace = dynamics_forward(sub, ctx, h0)
        blocks[:, :, a] = trace.hs[ell]
    return blocks


def influence(stack: ModelStack, g: Graph, comps: ComponentStructure,
              i: int, s: int, ell: int, norm: str = "fro",
              ctx: GraphContext | None = None) -> float:
    """Norm of the block Jacobian of node i's layer-ell features w.r.t. node s."""
    n = g.n
    if not (0 <= i < n and 0 <= s < n):
        raise ValueError(f"node indices ({i}, {s}) out of range for n={n}")
    if ell == 0:
        return identity_norm(stack.config.d, norm) if i == s else 0.0
    ctx = ctx if ctx is not None else build_context(stack.config, g, comps)
    blocks = influence_blocks_from_source(stack, ctx, s, ell)
    return matrix_norm(blocks[i], norm)


def influence_end_to_end(stack: ModelStack, g: Graph, comps: ComponentStructure,
                         x: np.ndarray, i: int, s: int,
                         norm: str = "fro") -> float:
    """Influence of node s's layer-0 features on node i's decoder output.

    Report-only variant: the decoder's tanh makes this depend on the
    linearization point, so the Jacobian is chained through the decoder at
    the features produced by ``x``.  Bounds are never checked against it.
    """
    cfg = stack.config
    if not cfg.decoder or cfg.pool != "none":
        raise ValueError("end-to-end influence needs a per-node decoder head")
    ctx = build_context(cfg, g, comps)
    from .models import encode
    h0 = encode(stack, x)
    trace = dynamics_forward(stack, ctx, h0)
    blocks = influence_blocks_from_source(stack, ctx, s, cfg.n_layers)
    z_i = np.tanh(trace.hs[-1][i] @ stack.params["dec.w1"] + stack.params["dec.b1"])
    # rows of d pred_i / d h_i(L): (d,) -> (d_out,)
    dec_jac = (stack.params["dec.w1"] * (1.0 - z_i ** 2)) @ stack.params["dec.w2"]
    return matrix_norm(dec_jac.T @ blocks[i], norm)


def prop1_bound(stack: ModelStack, comps: ComponentStructure, r: int,
                ell: int) -> float:
    """Product lower bound prod_p eps * alpha_r(p)/n_r * sigma_min(W(p)).

    Uses the effective mixing-pathway weight of each layer.  Zero is a valid
    value (degenerate weights, e.g. antisymmetric matrices of odd width).
    """
    if stack.config.kind != "s3gnn":
        raise ValueError(f"product influence bound applies to the s3gnn dynamics, got {stack.config.kind!r}")
    if not (0 <= r < comps.k):
        raise ValueError(f"component {r} out of range for k={comps.k}")
    n_r = float(comps.sizes[r])
    eps = stack.config.epsilon
    bound = 1.0
    for p in range(ell):
        alpha_r = float(stack.alpha(p)[r])
        smin = sigma_min(stack.effective_weights(p)[0])
        bound *= eps * (alpha_r / n_r) * smin
    return bound


def eq8_bound(c_theta: float, ell: int, edges_in_component: int) -> float:
    """Literal bound C^ell / (2 |E_C|) for the diagonal-filter dynamics."""
    if c_theta <= 0:
        raise ValueError(f"filter coefficient must be positive, got {c_theta}")
    if edges_in_component < 1:
        raise ValueError(f"component must have at least one edge, got {edges_in_component}")
    return float(c_theta ** ell / (2.0 * edges_in_component))


def diag_closed_form(c_theta: float, ell: int, n: int, d: int,
                     norm: str = "fro") -> float:
    """Exact influence of the connected diagonal-filter dynamics: C^ell |I_d| / n."""
    if c_theta <= 0:
        raise ValueError(f"filter coefficient must be positive, got {c_theta}")
    return float(c_theta ** ell) * identity_norm(d, norm) / float(n)


def component_edge_counts(g: Graph, comps: ComponentStructure) -> np.ndarray:
    counts = np.zeros(comps.k, dtype=np.int64)
    for u, v in g.edges():
        counts[comps.component_of[u]] += 1
    return counts


@dataclass
class InfluenceReport:
    """All ordered pairs with measured influence, hop distance, and both bounds."""

    kind: str
    norm: str
    ell: int
    i: np.ndarray
    s: np.ndarray
    distance: np.ndarray
    measured: np.ndarray
    bound_prop1: np.ndarray
    bound_eq8: np.ndarray

    def summary(self) -> dict:
        same = self.distance >= 0
        out = {"pairs": int(self.i.size), "same_component_pairs": int(same.sum())}
        with np.errstate(invalid="ignore"):
            p1 = same & np.isfinite(self.bound_prop1)
            out["frac_at_or_above_prop1"] = _frac(self.measured[p1] >= self.bound_prop1[p1] - 1e-15)
            e8 = same & np.isfinite(self.bound_eq8)
            out["frac_at_or_above_eq8"] = _frac(self.measured[e8] >= self.bound_eq8[e8] - 1e-15)
        return out


def _frac(mask: np.ndarray) -> float:
    return float(mask.mean()) if mask.size else float("nan")


def influence_distribution(stack: ModelStack, g: Graph, comps: ComponentStructure,
                           ell: int, norm: str = "fro",
                           cap: int = 512) -> InfluenceReport:
    """Measured influence for every ordered pair (i, s), tagged with bounds.

    Distances come from BFS; cross-component pairs carry the UNREACHABLE
    sentinel and a zero product bound.  The eq8 column is populated for the
    diagonal-filter dynamics (per-component edge counts) and NaN otherwise.
    """
    if g.n > cap:
        raise ValueError(f"all-pairs influence capped at n={cap}, got {g.n}")
    cfg = stack.config
    ctx = build_context(cfg, g, comps)
    dist = all_pairs_distances(g)
    edge_counts = component_edge_counts(g, comps)

    if cfg.kind == "s3gnn":
        p1_by_comp = np.array([prop1_bound(stack, comps, r, ell) for r in range(comps.k)])
    else:
        p1_by_comp = np.full(comps.k, np.nan)
    if cfg.kind == "diag_filter":
        c_prod = np.ones(comps.k)
        for p in range(ell):
            c_prod *= stack.diag_coeff(p)
        with np.errstate(divide="ignore"):
            e8_by_comp = np.where(edge_counts >= 1,
                                  c_prod / (2.0 * np.maximum(edge_counts, 1)), np.nan)
    else:
        e8_by_comp = np.full(comps.k, np.nan)

    n = g.n
    rows_i, rows_s, rows_d, rows_m, rows_p1, rows_e8 = [], [], [], [], [], []
    for s in range(n):
        blocks = influence_blocks_from_source(stack, ctx, s, ell) if ell > 0 else None
        for i in range(n):
            if ell == 0:
                measured = identity_norm(cfg.d, norm) if i == s else 0.0
            else:
                measured = matrix_norm(blocks[i], norm)
            same = comps.component_of[i] == comps.component_of[s]
            r = comps.component_of[s]
            rows_i.append(i)
            rows_s.append(s)
            rows_d.append(int(dist[s, i]))
            rows_m.append(measured)
            rows_p1.append(float(p1_by_comp[r]) if same else 0.0)
            rows_e8.append(float(e8_by_comp[r]) if same else float("nan"))
    return InfluenceReport(
        kind=cfg.kind, norm=norm, ell=ell,
        i=np.asarray(rows_i), s=np.asarray(rows_s),
        distance=np.asarray(rows_d), measured=np.asarray(rows_m),
        bound_prop1=np.asarray(rows_p1), bound_eq8=np.asarray(rows_e8))


# ---------------------------------------------------------------------------
# CSV emission (17 significant digits, caller-independent formatting)


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_jacobian_csv(entries: list[JacobianEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("layer,lambda_max,energy_closed_form,energy_power_iter,prop2_residual\n")
        for e in entries:
            fh.write(",".join([str(e.layer), fmt(e.lambda_max), fmt(e.energy_closed_form),
                               fmt(e.energy_power_iter), fmt(e.prop2_residual)]) + "\n")


def write_influence_csv(report: InfluenceReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("i,s,distance,measured,bound_prop1,bound_eq8\n")
        for idx in range(report.i.size):
            fh.write(",".join([
                str(int(report.i[idx])), str(int(report.s[idx])),
                str(int(report.distance[idx])), fmt(report.measured[idx]),
                fmt(report.bound_prop1[idx]), fmt(report.bound_eq8[idx])]) + "\n")


def write_alpha_csv(stack: ModelStack, path) -> None:
    if stack.config.kind != "s3gnn":
        raise ValueError("alpha trace exists only for the s3gnn dynamics")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("layer,alpha\n")
        for i in range(stack.config.n_layers):
            for a in np.atleast_1d(stack.alpha(i)):
                fh.write(f"{i},{fmt(a)}\n")
