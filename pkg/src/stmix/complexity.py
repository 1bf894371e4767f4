"""Multiply-accumulate cost model.

Convention: one FLOP is one multiply-accumulate (MAC). Only matrix products
are counted; softmax, layer norm, GELU, bias adds and residual adds are not.
The analytic model below mirrors, term by term, the products the model code
issues, and :func:`counted_flops` tallies those products from an actual
instrumented forward pass, so the two must agree exactly.

Token accounting: by default each frame contributes ``S + 1`` tokens (patches
plus its class token) and the patch embedding is included. With
``class_token=False, embedding=False`` the count reduces to the per-layer
decomposition over ``T*S`` patch tokens (qkv, attention, head projection,
MLP) plus aggregation and classifier, which is the accounting behind the
published video-transformer GFLOP figures.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .attention import FACTORIZED, FULL, LOCAL, MIXING, SPATIAL, TEMPORAL_CLS, AttentionVariant
from .model import ModelConfig, forward, init_params, preset
from .rng import Rng
from .tensor import count_macs

LAYER_TERMS = ("qkv_proj", "attention_scores", "attention_apply", "head_proj", "mlp", "summary")
MODEL_TERMS = ("patch_embed", "aggregation", "classifier")


@dataclass
class FlopReport:
    layers: list[dict[str, int]]
    patch_embed: int = 0
    aggregation: int = 0
    classifier: int = 0
    views: int = 1
    label: str = ""
    notes: list[str] = field(default_factory=list)

    def term_totals(self) -> dict[str, int]:
        """Per-view totals by term, summed over layers."""
        out = {t: sum(layer.get(t, 0) for layer in self.layers) for t in LAYER_TERMS}
        out.update(patch_embed=self.patch_embed, aggregation=self.aggregation, classifier=self.classifier)
        return out

    @property
    def layer_total(self) -> int:
        return sum(sum(layer.values()) for layer in self.layers)

    @property
    def per_view(self) -> int:
        return self.layer_total + self.patch_embed + self.aggregation + self.classifier

    @property
    def total(self) -> int:
        return self.per_view * self.views

    def gmacs(self) -> float:
        return self.total / 1e9


def _layer_terms(config: ModelConfig, variant: AttentionVariant, N: int) -> dict[str, int]:
    T, d, h, dh = config.num_frames, config.embed_dim, config.num_heads, config.head_dim
    hd = h * dh
    stages = 2 if variant.kind == FACTORIZED else 1
    terms = dict.fromkeys(LAYER_TERMS, 0)
    terms["qkv_proj"] = stages * 3 * T * N * d * hd
    terms["head_proj"] = stages * T * N * hd * d
    terms["mlp"] = 2 * T * N * d * config.mlp_ratio * d
    if variant.kind == FULL:
        scores = h * (T * N) ** 2 * dh
    elif variant.kind in (SPATIAL, MIXING, TEMPORAL_CLS):
        scores = h * T * N * N * dh
    elif variant.kind == LOCAL:
        widths = sum(min(T - 1, t + variant.t_w) - max(0, t - variant.t_w) + 1 for t in range(T))
        scores = h * N * N * dh * widths
    else:  # factorized: temporal stage per slot, then spatial stage per frame
        scores = h * N * T * T * dh + h * T * N * N * dh
    terms["attention_scores"] = terms["attention_apply"] = scores
    if variant.summary:
        terms["summary"] = 2 * h * T * N * T * dh
    return terms


def _block_on_tokens(n_query: int, n_kv: int, config: ModelConfig) -> int:
    """One transformer block where ``n_query`` queries attend ``n_kv`` tokens (queries not among keys)."""
    d, h, dh = config.embed_dim, config.num_heads, config.head_dim
    hd = h * dh
    return (n_query * d * hd + 2 * n_kv * d * hd + 2 * h * n_query * n_kv * dh
            + n_query * hd * d + 2 * n_query * d * config.mlp_ratio * d)


def analytic_flops(config: ModelConfig, *, views: int = 1, class_token: bool = True,
                   embedding: bool = True) -> FlopReport:
    T, d, S = config.num_frames, config.embed_dim, config.num_patches
    N = S + 1 if class_token else S
    layers = [_layer_terms(config, config.layer_variant(i), N) for i in range(config.num_layers)]
    patch_embed = T * S * config.channels * config.patch_size ** 2 * d if embedding else 0
    aggregation = 0
    if config.variant.kind == TEMPORAL_CLS:
        # self-attention among the T class tokens: T queries over T keys
        hd = config.num_heads * config.head_dim
        per = (3 * T * d * hd + 2 * config.num_heads * T * T * config.head_dim
               + T * hd * d + 2 * T * d * config.mlp_ratio * d)
        aggregation += config.temporal_layers * per
    if config.aggregation == "attention":
        aggregation += config.ta_layers * _block_on_tokens(1, T, config)
    return FlopReport(layers, patch_embed, aggregation, d * config.num_classes, views,
                      label=config.variant.label)


def counted_flops(config: ModelConfig, *, views: int = 1, seed: int = 0) -> FlopReport:
    """Run one instrumented forward pass on a random clip and tally the MACs executed."""
    rng = Rng(seed)
    params = init_params(config, rng.fork())
    clip = rng.normal((1, config.num_frames, config.image_size, config.image_size, config.channels))
    with count_macs() as counter:
        forward(clip, config, params)
    layers = [dict.fromkeys(LAYER_TERMS, 0) for _ in range(config.num_layers)]
    report = FlopReport(layers, views=views, label=config.variant.label)
    for tag, n in counter.terms.items():
        head, _, rest = tag.partition("/")
        if head.startswith("layer"):
            layers[int(head[5:])][rest] += n
        elif head in MODEL_TERMS:
            setattr(report, head, getattr(report, head) + n)
        else:
            raise RuntimeError(f"unattributed MACs under scope {tag!r}")
    return report


def compare_variants(config: ModelConfig, variants: Sequence[AttentionVariant], *, views: int = 1,
                     class_token: bool = True, embedding: bool = True) -> list[dict]:
    """One row per variant with term breakdown, total and ratio to the spatial-only baseline."""
    base = analytic_flops(config.with_variant(AttentionVariant(SPATIAL)), views=views,
                          class_token=class_token, embedding=embedding)
    rows = []
    for v in variants:
        rep = analytic_flops(config.with_variant(v), views=views, class_token=class_token, embedding=embedding)
        rows.append(flop_row(rep, config, ratio=rep.total / base.total))
    return rows


def flop_row(rep: FlopReport, config: ModelConfig, ratio: float | None = None) -> dict:
    row = {"variant": rep.label, "T": config.num_frames, "S": config.num_patches,
           "d": config.embed_dim, "h": config.num_heads}
    row.update({k: v * rep.views for k, v in rep.term_totals().items()})
    row["views"] = rep.views
    row["total"] = rep.total
    row["ratio_vs_spatial"] = ratio
    return row


# published X-ViT figures (x1e9 MACs, 1x3 views, 224px, 1 TA layer)
PUBLISHED_FIGURES = [
    ("vitb16", 8, 425.0, 0.05),
    ("vitb16", 16, 850.0, 0.05),
    ("vitb32", 8, 95.0, 0.10),
    ("vitl32", 8, 327.0, 0.10),
]


def published_reproduction(views: int = 3) -> list[dict]:
    """Analytic GMACs for the published configurations under both token accountings."""
    rows = []
    for name, T, published, tol in PUBLISHED_FIGURES + [("vitb16", 32, 1270.0, None)]:
        cfg = preset(name, num_frames=T, variant=AttentionVariant(MIXING), aggregation="attention", ta_layers=1)
        full = analytic_flops(cfg, views=views)
        patch_only = analytic_flops(cfg, views=views, class_token=False, embedding=False)
        rel = patch_only.gmacs() / published - 1.0
        rows.append({
            "preset": name, "T": T, "views": views, "published_gmacs": published,
            "gmacs_patch_tokens": round(patch_only.gmacs(), 3),
            "gmacs_with_cls_and_embed": round(full.gmacs(), 3),
            "rel_error": round(rel, 5), "tolerance": tol,
            "within_tolerance": None if tol is None else abs(rel) <= tol,
        })
    return rows


def affine_fit_residual(Ts: Iterable[int], totals: Iterable[int]) -> float:
    """Max relative residual of a least-squares affine fit ``total = a*T + b``."""
    Ts = np.asarray(list(Ts), dtype=np.float64)
    y = np.asarray(list(totals), dtype=np.float64)
    A = np.stack([Ts, np.ones_like(Ts)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(np.max(np.abs(A @ coef - y) / np.abs(y)))


def write_table(rows: list[dict], out_dir, stem: str) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.json"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    json_path.write_text(json.dumps(rows, indent=1))
    return csv_path, json_path
