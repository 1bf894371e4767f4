import json

import pytest

from stmix.attention import FACTORIZED, FULL, MIXING, SPATIAL, AttentionVariant
from stmix.checks import all_variants
from stmix.complexity import (
    affine_fit_residual,
    analytic_flops,
    compare_variants,
    counted_flops,
    published_reproduction,
    write_table,
)
from stmix.model import preset


@pytest.mark.parametrize("variant", all_variants(), ids=lambda v: v.label)
def test_analytic_equals_counted(variant):
    for name in ("desk", "tiny"):
        cfg = preset(name, variant=variant)
        a, c = analytic_flops(cfg), counted_flops(cfg)
        assert a.layers == c.layers
        assert a.term_totals() == c.term_totals()


def test_report_totals_consistent():
    rep = analytic_flops(preset("desk"), views=3)
    assert rep.total == 3 * (rep.layer_total + rep.patch_embed + rep.aggregation + rep.classifier)
    assert all(isinstance(v, int) and v >= 0 for v in rep.term_totals().values())


def test_mixing_independent_of_window_and_rho():
    totals = {analytic_flops(preset("desk", variant=AttentionVariant(MIXING, t_w=t, rho=r))).total
              for t in (1, 2, 3) for r in (0.0, 0.25, 0.5, 1.0)}
    assert len(totals) == 1


def test_counted_mixing_scales_linearly():
    a = counted_flops(preset("desk", num_frames=4))
    b = counted_flops(preset("desk", num_frames=8))
    assert b.layer_total == 2 * a.layer_total and b.patch_embed == 2 * a.patch_embed


def test_affine_in_T():
    Ts = (2, 4, 8, 16)
    assert affine_fit_residual(Ts, [analytic_flops(preset("desk", num_frames=T)).total for T in Ts]) < 1e-9


def test_full_over_mixing_score_ratio_is_T():
    cfg = preset("desk")
    full = analytic_flops(cfg.with_variant(AttentionVariant(FULL)), class_token=False).term_totals()
    mix = analytic_flops(cfg.with_variant(AttentionVariant(MIXING)), class_token=False).term_totals()
    assert full["attention_scores"] == cfg.num_frames * mix["attention_scores"]


def test_compare_variants_rows():
    rows = compare_variants(preset("desk"), all_variants())
    by = {r["variant"]: r for r in rows}
    assert by[AttentionVariant(MIXING).label]["ratio_vs_spatial"] == 1.0
    assert by[AttentionVariant(FACTORIZED).label]["ratio_vs_spatial"] > 1.0
    assert by[AttentionVariant(FULL).label]["ratio_vs_spatial"] > 1.0


def test_b32_cheaper_than_b16():
    v = AttentionVariant(MIXING)
    assert analytic_flops(preset("vitb32", variant=v)).total < analytic_flops(preset("vitb16", variant=v)).total


def test_published_rows_within_tolerance():
    rows = published_reproduction(views=3)
    for r in rows:
        if r["tolerance"] is not None:
            assert r["within_tolerance"], r
    t32 = [r for r in rows if r["T"] == 32][0]
    assert t32["within_tolerance"] is None and t32["gmacs_patch_tokens"] > 1500


def test_write_table(tmp_path):
    rows = compare_variants(preset("tiny"), [AttentionVariant(SPATIAL), AttentionVariant(MIXING)])
    csv_path, json_path = write_table(rows, tmp_path, "t")
    header = csv_path.read_text().splitlines()[0].split(",")
    assert header[:5] == ["variant", "T", "S", "d", "h"] and "ratio_vs_spatial" in header
    assert json.loads(json_path.read_text()) == rows
