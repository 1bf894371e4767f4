"""Property and oracle check suites behind ``stmix check`` and ``stmix gradcheck``.

Each module invariant maps to exactly one registered check; ``INVENTORY``
lists them in order. A check returns measured values and tolerances so the
report shows how close each property came.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import attention as A
from . import reference as R
from .complexity import affine_fit_residual, analytic_flops, compare_variants, counted_flops
from .gradcheck import grad_check
from .model import (
    ModelConfig,
    class_tokens,
    forward,
    init_params,
    loss_fn,
    preset,
    run_layers,
    tokenize,
)
from .rng import Rng
from .synthetic import SyntheticSpec, gen_synthetic
from .tensor import (
    Tensor,
    add,
    concat,
    cross_entropy,
    gelu,
    getitem,
    layer_norm,
    matmul,
    mul,
    shift_array,
    softmax_lastdim,
    sorted_mean,
    temporal_shift,
)
from .tokenization import EmbeddingParams, embed, patchify

ORACLE_TOL = 1e-9
DEGENERATE_TOL = 1e-12
PRIMITIVE_TOL = 1e-6
END_TO_END_TOL = 1e-4


@dataclass
class CheckResult:
    id: str
    passed: bool
    measured: dict = field(default_factory=dict)
    tolerance: dict = field(default_factory=dict)
    detail: str = ""

    def to_dict(self) -> dict:
        return {"id": self.id, "passed": bool(self.passed), "measured": self.measured,
                "tolerance": self.tolerance, "detail": self.detail}


@dataclass
class CheckContext:
    seed: int = 0
    boundary: str = "zero"  # "wrap" injects the skipped-zero-fill fault
    oracle_instances: int = 12
    gradcheck_coords: int = 16


def rel_err(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.abs(b).max(initial=0.0), 1e-300)
    return float(np.abs(a - b).max(initial=0.0) / scale)


# ---------------------------------------------------------------------------
# random attention instances

@dataclass
class Instance:
    T: int
    S: int
    h: int
    d_h: int
    t_w: int
    rho: float
    x: np.ndarray
    p: A.AttentionParams
    p2: A.AttentionParams

    @property
    def d(self) -> int:
        return self.h * self.d_h

    def arrays(self, p: A.AttentionParams) -> dict:
        return {k: v.data for k, v in p.tensors().items()}


def random_instance(rng: Rng, T=None, S=None, d_h=None, t_w=None, rho=None) -> Instance:
    """T in 1..4, S in {1,4,9}, d_h in {4,8,16}, t_w in {0,1,2}, rho in {0,.25,.5}; d = h*d_h <= 16.

    Invalid mixing combinations (rho > 0 with t_w = 0, or d_h < 2*t_w + 1) are redrawn.
    """
    pick = lambda opts, v: v if v is not None else opts[rng.integers(0, len(opts))]
    while True:
        T_, S_, dh_ = pick([1, 2, 3, 4], T), pick([1, 4, 9], S), pick([4, 8, 16], d_h)
        tw_, rho_ = pick([0, 1, 2], t_w), pick([0.0, 0.25, 0.5], rho)
        if rho_ > 0 and (tw_ == 0 or dh_ < 2 * tw_ + 1):
            if T is not None and S is not None and d_h is not None and t_w is not None and rho is not None:
                raise ValueError("requested an invalid mixing instance")
            continue
        break
    h = 1 if dh_ == 16 else pick([1, 2], None)
    d = h * dh_
    x = rng.normal((T_, S_ + 1, d))
    return Instance(T_, S_, h, dh_, tw_, rho_, x,
                    A.AttentionParams.init(d, h, dh_, rng, std=0.5),
                    A.AttentionParams.init(d, h, dh_, rng, std=0.5))


def oracle_errors(inst: Instance) -> dict[str, float]:
    """Relative error of every variant against its loop oracle on one instance."""
    x, X, h = inst.x, Tensor(inst.x), inst.h
    P, P2 = inst.arrays(inst.p), inst.arrays(inst.p2)
    alloc = A.mix_allocation(inst.d_h, inst.t_w, inst.rho)
    in_alloc = A.mix_allocation(inst.d, inst.t_w, inst.rho)
    cls = x[:, 0, :][None]  # class tokens as one frame of T tokens
    return {
        A.FULL: rel_err(A.full_space_time_attention(X, inst.p).data, R.full(x, P, h)),
        A.SPATIAL: rel_err(A.spatial_attention(X, inst.p).data, R.spatial(x, P, h)),
        A.FACTORIZED: rel_err(A.factorized_attention(X, inst.p2, inst.p).data, R.factorized(x, P2, P, h)),
        A.LOCAL: rel_err(A.local_window_attention(X, inst.p, inst.t_w).data, R.local_window(x, P, h, inst.t_w)),
        A.MIXING: rel_err(A.space_time_mixing_attention(X, inst.p, alloc).data, R.mixing(x, P, h, alloc.budget)),
        "mixing_input": rel_err(
            A.space_time_mixing_attention(X, inst.p, alloc, mix_key=False, mix_value=False, mix_input=True,
                                          input_alloc=in_alloc).data,
            R.mixing(x, P, h, alloc.budget, mix_key=False, mix_value=False, mix_input=True,
                     input_budget=in_alloc.budget)),
        "summary": rel_err(A.space_time_mixing_attention(X, inst.p, alloc, summary=True).data,
                           R.mixing(x, P, h, alloc.budget, summary=True)),
        A.TEMPORAL_CLS: rel_err(A.temporal_class_attention(Tensor(x[:, 0, :]), inst.p).data,
                                R.spatial(np.swapaxes(cls, 0, 0), P, h)[0]),
    }


# ---------------------------------------------------------------------------
# tensor_core

def check_determinism(ctx: CheckContext) -> CheckResult:
    cfg = preset("desk")
    clip = Rng(ctx.seed).normal((2, 8, 32, 32, 3))
    a = forward(clip, cfg, init_params(cfg, ctx.seed)).data
    b = forward(clip, cfg, init_params(cfg, ctx.seed)).data
    return CheckResult("tensor.determinism", bool(np.array_equal(a, b)),
                       {"max_abs_diff": float(np.abs(a - b).max())}, {"max_abs_diff": 0.0})


def check_softmax_rows(ctx: CheckContext) -> CheckResult:
    rng = Rng(ctx.seed + 1)
    worst_sum, lo, hi = 0.0, 1.0, 0.0
    for scale in (1e-3, 1.0, 30.0, 1e3):
        s = softmax_lastdim(Tensor(rng.normal((64, 17), std=scale))).data
        worst_sum = max(worst_sum, float(np.abs(s.sum(-1) - 1).max()))
        lo, hi = min(lo, float(s.min())), max(hi, float(s.max()))
    ok = worst_sum < 1e-12 and lo >= 0.0 and hi <= 1.0
    return CheckResult("tensor.softmax_rows", ok, {"row_sum_error": worst_sum, "min": lo, "max": hi},
                       {"row_sum_error": 1e-12, "range": [0.0, 1.0]})


def primitive_gradchecks(seed: int = 0) -> dict[str, float]:
    """Finite-difference errors for every primitive's backward pass (h=1e-5)."""
    rng = Rng(seed)
    T = lambda *s, std=1.0: Tensor(rng.normal(s, std=std), requires_grad=True)
    w = rng.normal((3, 2))
    out = {}

    def run(name, f, inputs):
        out[name] = grad_check(f, inputs, h=1e-5, tol=PRIMITIVE_TOL).max_rel_error

    a, b = T(3, 4), T(4, 2)
    run("matmul", lambda: mul(matmul(a, b), w).sum(), [a, b])
    a3, b3 = T(2, 3, 4), T(2, 4, 5)
    w3 = rng.normal((2, 3, 5))
    run("matmul_batched", lambda: mul(matmul(a3, b3), w3).sum(), [a3, b3])
    x, ws = T(4, 6), rng.normal((4, 6))
    run("softmax", lambda: mul(softmax_lastdim(x), ws).sum(), [x])
    xl, g, be = T(5, 8), T(8), T(8)
    wl = rng.normal((5, 8))
    run("layer_norm", lambda: mul(layer_norm(xl, g, be), wl).sum(), [xl, g, be])
    xg, wg = T(4, 5, std=2.0), rng.normal((4, 5))
    run("gelu", lambda: mul(gelu(xg), wg).sum(), [xg])
    p, q = T(3, 1, 4), T(2, 4)
    wpq = rng.normal((3, 2, 4))
    run("add_mul_broadcast", lambda: mul(mul(add(p, q), q), wpq).sum(), [p, q])
    c1, c2 = T(2, 3), T(2, 2)
    wc = rng.normal((2, 5))
    run("concat_getitem", lambda: mul(getitem(concat([c1, c2], axis=1), (slice(None), slice(1, 5))), wc[:, 1:]).sum(), [c1, c2])
    rt = T(2, 3, 4)
    wr = rng.normal((4, 3, 2))
    run("reshape_transpose", lambda: mul(rt.transpose(2, 1, 0), wr).sum(), [rt])
    sm = T(5, 3)
    wm = rng.normal(3)
    run("sorted_mean", lambda: mul(sorted_mean(sm, 0), wm).sum(), [sm])
    logits = T(4, 3)
    run("cross_entropy", lambda: cross_entropy(logits, [0, 2, 1, 2]), [logits])
    sh = T(4, 3, 6)
    offs = np.array([-1, -1, 0, 0, 1, 2])
    wsh = rng.normal((4, 3, 6))
    run("temporal_shift", lambda: mul(temporal_shift(sh, offs, 0), wsh).sum(), [sh])
    return out


def check_primitive_gradients(ctx: CheckContext) -> CheckResult:
    errs = primitive_gradchecks(ctx.seed)
    return CheckResult("tensor.primitive_gradients", max(errs.values()) < PRIMITIVE_TOL, errs,
                       {"rel_error": PRIMITIVE_TOL})


def check_layer_norm_moments(ctx: CheckContext) -> CheckResult:
    rng = Rng(ctx.seed + 2)
    x = rng.normal((32, 16), std=3.0) + 5.0
    y = layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16))).data
    var_in = x.var(axis=-1)
    mu_err = float(np.abs(y.mean(axis=-1)).max())
    var_err = float(np.abs(y.var(axis=-1) - var_in / (var_in + 1e-6)).max())
    return CheckResult("tensor.layer_norm_moments", mu_err < 1e-10 and var_err < 1e-6,
                       {"mean_abs": mu_err, "var_error": var_err}, {"mean_abs": 1e-10, "var_error": 1e-6})


# ---------------------------------------------------------------------------
# tokenization

def _embedding(rng: Rng, T: int, S: int, K: int, d: int) -> EmbeddingParams:
    p = EmbeddingParams.init(3 * K * K, S, T, d, rng)
    p.pos_time = Tensor(rng.normal((T, 1, d), std=0.02))
    return p


def check_embed_linearity(ctx: CheckContext) -> CheckResult:
    rng = Rng(ctx.seed + 3)
    T, K, d = 3, 4, 8
    params = _embedding(rng, T, 4, K, d)
    c1, c2 = rng.normal((T, 8, 8, 3)), rng.normal((T, 8, 8, 3))
    a, b = 0.7, -1.3
    e = lambda c: embed(patchify(c, K), params).data
    lhs = e(a * c1 + b * c2)
    rhs = a * e(c1) + b * e(c2) + (1 - a - b) * e(np.zeros_like(c1))
    err = rel_err(lhs, rhs)
    return CheckResult("tokenization.linearity", err < 1e-12, {"rel_error": err}, {"rel_error": 1e-12})


def check_embed_equivariance(ctx: CheckContext) -> CheckResult:
    rng = Rng(ctx.seed + 4)
    T, K, d = 5, 4, 8
    params = EmbeddingParams.init(3 * K * K, 4, T, d, rng)  # pos_time = 0
    clip = rng.normal((T, 8, 8, 3))
    perm = rng.permutation(T)
    a = embed(patchify(clip[perm], K), params).data
    b = embed(patchify(clip, K), params).data[perm]
    return CheckResult("tokenization.frame_equivariance", bool(np.array_equal(a, b)),
                       {"max_abs_diff": float(np.abs(a - b).max())}, {"max_abs_diff": 0.0})


# ---------------------------------------------------------------------------
# attention

def check_degenerate(ctx: CheckContext) -> CheckResult:
    rng = Rng(ctx.seed + 5)
    measured = {}
    ok = True
    for _ in range(6):
        inst = random_instance(rng, t_w=1, rho=0.0, d_h=8)
        X = Tensor(inst.x)
        sp = A.spatial_attention(X, inst.p).data
        mix0 = A.space_time_mixing_attention(X, inst.p, A.mix_allocation(inst.d_h, 1, 0.0)).data
        lw0 = A.local_window_attention(X, inst.p, 0).data
        full = A.full_space_time_attention(X, inst.p).data
        lwT = A.local_window_attention(X, inst.p, max(inst.T - 1, 0)).data
        errs = {
            "mixing_rho0_vs_spatial_bitwise": 0.0 if np.array_equal(mix0, sp) else rel_err(mix0, sp),
            "local_tw0_vs_spatial": rel_err(lw0, sp),
            "local_full_window_vs_full": rel_err(lwT, full),
        }
        if inst.T == 1:
            errs["T1_full_vs_spatial"] = rel_err(full, sp)
        for k, v in errs.items():
            measured[k] = max(measured.get(k, 0.0), v)
    ok = measured["mixing_rho0_vs_spatial_bitwise"] == 0.0 and all(
        v < DEGENERATE_TOL for k, v in measured.items())
    # T = 1 collapse, forced
    inst = random_instance(rng, T=1, d_h=8, t_w=1, rho=0.0)
    X = Tensor(inst.x)
    sp = A.spatial_attention(X, inst.p).data
    collapse = max(rel_err(A.full_space_time_attention(X, inst.p).data, sp),
                   rel_err(A.local_window_attention(X, inst.p, 1).data, sp))
    measured["T1_collapse"] = collapse
    ok = ok and collapse < DEGENERATE_TOL
    return CheckResult("attention.degenerate_equivalences", ok, measured,
                       {"bitwise": 0.0, "rel_error": DEGENERATE_TOL})


def check_oracle(ctx: CheckContext) -> CheckResult:
    rng = Rng(ctx.seed + 6)
    worst: dict[str, float] = {}
    for _ in range(ctx.oracle_instances):
        for k, v in oracle_errors(random_instance(rng)).items():
            worst[k] = max(worst.get(k, 0.0), v)
    return CheckResult("attention.oracle_equivalence", max(worst.values()) < ORACLE_TOL, worst,
                       {"rel_error": ORACLE_TOL}, f"{ctx.oracle_instances} random instances")


def mixing_locality(t_w: int, T: int, seed: int, boundary: str = "zero") -> dict:
    """Which frames of a single mixing layer's output react to a perturbation of each input frame."""
    rng = Rng(seed)
    d_h, h, S = 8, 2, 4
    p = A.AttentionParams.init(h * d_h, h, d_h, rng, std=0.5)
    alloc = A.mix_allocation(d_h, t_w, 0.5)
    x = rng.normal((T, S + 1, h * d_h))
    base = A.space_time_mixing_attention(Tensor(x), p, alloc, boundary=boundary).data
    violations = []
    for tp in range(T):
        xp = x.copy()
        xp[tp] += rng.normal(xp[tp].shape)
        out = A.space_time_mixing_attention(Tensor(xp), p, alloc, boundary=boundary).data
        for t in range(T):
            changed = not np.array_equal(out[t], base[t])
            if changed != (abs(t - tp) <= t_w):
                violations.append((tp, t))
    return {"violations": violations}


def check_locality(ctx: CheckContext) -> CheckResult:
    viol = []
    for t_w in (1, 2):
        viol += [(t_w, *v) for v in mixing_locality(t_w, 6, ctx.seed + 7, ctx.boundary)["violations"]]
    return CheckResult("attention.locality", not viol, {"violations": len(viol)}, {"violations": 0},
                       "" if not viol else f"first (t_w, perturbed, output) violations: {viol[:4]}")


def check_row_stochastic(ctx: CheckContext) -> CheckResult:
    rng = Rng(ctx.seed + 8)
    worst, lo, hi = 0.0, 1.0, 0.0
    for _ in range(4):
        inst = random_instance(rng, t_w=1, rho=0.5, d_h=8)
        X = Tensor(inst.x)
        ws: list = []
        alloc = A.mix_allocation(inst.d_h, 1, 0.5)
        A.full_space_time_attention(X, inst.p, weights=ws)
        A.spatial_attention(X, inst.p, weights=ws)
        A.factorized_attention(X, inst.p2, inst.p, weights=ws)
        A.local_window_attention(X, inst.p, 1, weights=ws)
        A.space_time_mixing_attention(X, inst.p, alloc, weights=ws)
        A.space_time_mixing_attention(X, inst.p, alloc, summary=True, weights=ws)
        for w in ws:
            worst = max(worst, float(np.abs(w.sum(-1) - 1).max()))
            lo, hi = min(lo, float(w.min())), max(hi, float(w.max()))
    ok = worst < 1e-12 and lo >= 0 and hi <= 1
    return CheckResult("attention.row_stochastic", ok, {"row_sum_error": worst, "min": lo, "max": hi},
                       {"row_sum_error": 1e-12})


def check_zero_flop_shift(ctx: CheckContext) -> CheckResult:
    cfg = preset("desk")
    sp = counted_flops(cfg.with_variant(A.AttentionVariant(A.SPATIAL)))
    mix = counted_flops(cfg.with_variant(A.AttentionVariant(A.MIXING, t_w=1, rho=0.5)))
    mix2 = counted_flops(cfg.with_variant(A.AttentionVariant(A.MIXING, t_w=2, rho=1.0)))
    ok = sp.term_totals() == mix.term_totals() == mix2.term_totals()
    return CheckResult("attention.zero_flop_shift", ok,
                       {"spatial": sp.total, "mixing": mix.total, "mixing_tw2_rho1": mix2.total},
                       {"equality": "exact"})


def check_shift_inverse(ctx: CheckContext) -> CheckResult:
    rng = Rng(ctx.seed + 9)
    bad = 0
    for t_w, rho, T in itertools.product((1, 2), (0.25, 0.5, 1.0), (1, 3, 6)):
        alloc = A.mix_allocation(8, t_w, rho)
        offs = alloc.channel_offsets()
        x = rng.normal((T, 5, 8))
        y = A.temporal_channel_shift(x, alloc)
        back = shift_array(y, -offs, 0)
        tt = np.arange(T)[:, None]
        valid = ((tt - offs[None, :]) >= 0) & ((tt - offs[None, :]) < T)  # [T, C]
        mask = np.broadcast_to(valid[:, None, :], x.shape)
        bad += int(np.count_nonzero(back[mask] != x[mask]))
        bad += int(np.count_nonzero(back[~mask]))
    return CheckResult("attention.shift_inverse", bad == 0, {"mismatches": bad}, {"mismatches": 0})


# ---------------------------------------------------------------------------
# model

def check_permutation_invariance(ctx: CheckContext) -> CheckResult:
    cfg = preset("desk", variant=A.AttentionVariant(A.SPATIAL), aggregation="average")
    params = init_params(cfg, ctx.seed)
    rng = Rng(ctx.seed + 10)
    clip = rng.normal((8, 32, 32, 3))
    base = forward(clip, cfg, params).data
    worst = 0.0
    for perm in [np.arange(8)[::-1], rng.permutation(8), rng.permutation(8)]:
        out = forward(clip[perm], cfg, params).data
        worst = max(worst, float(np.abs(out - base).max()))
    return CheckResult("model.frame_permutation_invariance", worst == 0.0,
                       {"max_abs_diff": worst}, {"max_abs_diff": 0.0})


def receptive_field(k: int, t_w: int, T: int = 8, seed: int = 0, boundary: str = "zero") -> dict:
    """Perturb each input frame of a k-layer mixing stack; report frames whose class token changed."""
    cfg = ModelConfig(num_layers=k, num_heads=2, embed_dim=16, head_dim=8, patch_size=8,
                      num_frames=T, image_size=16, variant=A.AttentionVariant(A.MIXING, t_w=t_w, rho=0.5),
                      aggregation="average", init_std=0.3)
    params = init_params(cfg, seed)
    rng = Rng(seed + 1)
    grid = rng.normal((T, cfg.tokens_per_frame, cfg.embed_dim))
    base = class_tokens(run_layers(Tensor(grid), cfg, params, boundary=boundary)).data
    reach, violations = {}, []
    for tp in range(T):
        g = grid.copy()
        g[tp] += rng.normal(g[tp].shape)
        out = class_tokens(run_layers(Tensor(g), cfg, params, boundary=boundary)).data
        changed = [t for t in range(T) if not np.array_equal(out[t], base[t])]
        reach[tp] = changed
        expected = [t for t in range(T) if abs(t - tp) <= k * t_w]
        if changed != expected:
            violations.append(tp)
    return {"reach": reach, "violations": violations}


def check_receptive_field(ctx: CheckContext) -> CheckResult:
    failures = []
    for k, t_w in itertools.product((1, 2, 3, 4), (1, 2)):
        res = receptive_field(k, t_w, 8, ctx.seed + 11, ctx.boundary)
        if res["violations"]:
            failures.append((k, t_w))
    return CheckResult("model.receptive_field", not failures, {"failing_(k,t_w)": failures},
                       {"rule": "changed iff |t - t'| <= k * t_w"})


def end_to_end_gradcheck(seed: int = 0, config: ModelConfig | None = None,
                         max_coords: int | None = None) -> float:
    cfg = config or preset("tiny")
    rng = Rng(seed)
    params = init_params(cfg, rng.fork())
    for t in params.values():  # move off the near-symmetric init
        t.data = t.data + rng.normal(t.shape, std=0.2)
    clips = rng.normal((2, cfg.num_frames, cfg.image_size, cfg.image_size, 3))
    labels = np.arange(2) % cfg.num_classes
    rep = grad_check(lambda: loss_fn(clips, labels, cfg, params), list(params.values()),
                     tol=END_TO_END_TOL, max_coords=max_coords, rng=rng.fork(), names=list(params))
    return rep.max_rel_error


def check_end_to_end_gradient(ctx: CheckContext) -> CheckResult:
    err = end_to_end_gradcheck(ctx.seed, max_coords=ctx.gradcheck_coords)
    return CheckResult("model.end_to_end_gradient", err < END_TO_END_TOL, {"rel_error": err},
                       {"rel_error": END_TO_END_TOL},
                       f"tiny preset, {ctx.gradcheck_coords} sampled coordinates per tensor")


def check_forward_deterministic(ctx: CheckContext) -> CheckResult:
    cfg = preset("desk", variant=A.AttentionVariant(A.MIXING, summary=True))
    clip = Rng(ctx.seed + 12).normal((1, 8, 32, 32, 3))
    outs = [forward(clip, cfg, init_params(cfg, ctx.seed)).data for _ in range(2)]
    return CheckResult("model.forward_deterministic", bool(np.array_equal(*outs)),
                       {"max_abs_diff": float(np.abs(outs[0] - outs[1]).max())}, {"max_abs_diff": 0.0})


# ---------------------------------------------------------------------------
# complexity

def all_variants(t_w: int = 1, rho: float = 0.5) -> list[A.AttentionVariant]:
    return [
        A.AttentionVariant(A.FULL), A.AttentionVariant(A.SPATIAL), A.AttentionVariant(A.FACTORIZED),
        A.AttentionVariant(A.LOCAL, t_w=t_w), A.AttentionVariant(A.MIXING, t_w=t_w, rho=rho),
        A.AttentionVariant(A.MIXING, t_w=t_w, rho=rho, mix_key=False, mix_value=False, mix_input=True),
        A.AttentionVariant(A.MIXING, t_w=t_w, rho=rho, summary=True),
        A.AttentionVariant(A.TEMPORAL_CLS),
    ]


def check_analytic_equals_counted(ctx: CheckContext) -> CheckResult:
    mismatches = []
    for name in ("desk", "tiny"):
        for agg in ("attention", "average"):
            for v in all_variants():
                cfg = preset(name, variant=v, aggregation=agg)
                a, c = analytic_flops(cfg), counted_flops(cfg)
                if a.layers != c.layers or a.term_totals() != c.term_totals():
                    mismatches.append(f"{name}/{agg}/{v.label}")
    return CheckResult("complexity.analytic_equals_counted", not mismatches,
                       {"mismatches": len(mismatches)}, {"mismatches": 0}, "; ".join(mismatches))


def check_mixing_independent(ctx: CheckContext) -> CheckResult:
    cfg = preset("desk")
    totals = {}
    for t_w, rho in itertools.product((0, 1, 2, 3), (0.0, 0.25, 0.5, 1.0)):
        if rho > 0 and t_w == 0:
            continue
        totals[f"t_w={t_w},rho={rho}"] = analytic_flops(cfg.with_variant(A.AttentionVariant(A.MIXING, t_w=t_w, rho=rho))).total
    return CheckResult("complexity.mixing_independent_of_window", len(set(totals.values())) == 1,
                       {"distinct_totals": len(set(totals.values()))}, {"distinct_totals": 1})


def check_affine_in_T(ctx: CheckContext) -> CheckResult:
    Ts = (2, 4, 8, 16)
    totals = [analytic_flops(preset("desk", num_frames=T)).total for T in Ts]
    res = affine_fit_residual(Ts, totals)
    return CheckResult("complexity.affine_in_T", res < 1e-9, {"rel_residual": res, "totals": totals},
                       {"rel_residual": 1e-9})


# ---------------------------------------------------------------------------
# harness

def check_seeded_determinism(ctx: CheckContext) -> CheckResult:
    spec = SyntheticSpec(num_samples=8, seed=ctx.seed)
    (x1, y1), (x2, y2) = gen_synthetic(spec), gen_synthetic(spec)
    t1 = compare_variants(preset("desk"), all_variants())
    t2 = compare_variants(preset("desk"), all_variants())
    ok = np.array_equal(x1, x2) and np.array_equal(y1, y2) and t1 == t2
    return CheckResult("harness.seeded_determinism", bool(ok), {"identical": bool(ok)}, {"identical": True})


REGISTRY: list[tuple[str, Callable[[CheckContext], CheckResult]]] = [
    ("tensor.determinism", check_determinism),
    ("tensor.softmax_rows", check_softmax_rows),
    ("tensor.primitive_gradients", check_primitive_gradients),
    ("tensor.layer_norm_moments", check_layer_norm_moments),
    ("tokenization.linearity", check_embed_linearity),
    ("tokenization.frame_equivariance", check_embed_equivariance),
    ("attention.degenerate_equivalences", check_degenerate),
    ("attention.oracle_equivalence", check_oracle),
    ("attention.locality", check_locality),
    ("attention.row_stochastic", check_row_stochastic),
    ("attention.zero_flop_shift", check_zero_flop_shift),
    ("attention.shift_inverse", check_shift_inverse),
    ("model.frame_permutation_invariance", check_permutation_invariance),
    ("model.receptive_field", check_receptive_field),
    ("model.end_to_end_gradient", check_end_to_end_gradient),
    ("model.forward_deterministic", check_forward_deterministic),
    ("complexity.analytic_equals_counted", check_analytic_equals_counted),
    ("complexity.mixing_independent_of_window", check_mixing_independent),
    ("complexity.affine_in_T", check_affine_in_T),
    ("harness.seeded_determinism", check_seeded_determinism),
]
INVENTORY = tuple(name for name, _ in REGISTRY)


def run_checks(ctx: CheckContext, only: set[str] | None = None) -> list[CheckResult]:
    results = []
    for name, fn in REGISTRY:
        if only and name not in only:
            continue
        try:
            res = fn(ctx)
        except Exception as exc:  # a crashing check is a failing check
            res = CheckResult(name, False, detail=f"{type(exc).__name__}: {exc}")
        results.append(res)
    return results


def gradcheck_suite(seed: int = 0, tiny_coords: int = 24, desk_coords: int = 4) -> list[CheckResult]:
    """Primitive, end-to-end and shift-adjoint gradient checks."""
    prims = primitive_gradchecks(seed)
    results = [CheckResult(f"primitive.{k}", v < PRIMITIVE_TOL, {"rel_error": v}, {"rel_error": PRIMITIVE_TOL})
               for k, v in prims.items()]
    err = end_to_end_gradcheck(seed, max_coords=tiny_coords)
    results.append(CheckResult("end_to_end.tiny", err < END_TO_END_TOL, {"rel_error": err},
                               {"rel_error": END_TO_END_TOL}, f"{tiny_coords} sampled coordinates per tensor"))
    err = end_to_end_gradcheck(seed, preset("desk"), max_coords=desk_coords)
    results.append(CheckResult("end_to_end.desk", err < END_TO_END_TOL, {"rel_error": err},
                               {"rel_error": END_TO_END_TOL}, f"{desk_coords} sampled coordinates per tensor"))
    # shift backward must be exactly the inverse shift of the upstream gradient
    rng = Rng(seed + 20)
    offs = A.mix_allocation(8, 2, 0.5).channel_offsets()
    x = Tensor(rng.normal((5, 3, 8)), requires_grad=True)
    g = rng.normal((5, 3, 8))
    temporal_shift(x, offs, 0).backward(g)
    exact = bool(np.array_equal(x.grad, shift_array(g, -offs, 0)))
    results.append(CheckResult("shift.adjoint", exact, {"exact": exact}, {"exact": True}))
    return results
