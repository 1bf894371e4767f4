import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stmix import attention as A
from stmix import reference as R
from stmix._validation import ConfigError
from stmix.checks import mixing_locality, oracle_errors, random_instance
from stmix.rng import Rng
from stmix.tensor import Tensor, count_macs

from conftest import rel


def test_mix_allocation_examples():
    assert A.mix_allocation(64, 1, 0.5).budget == {-1: 16, 0: 32, 1: 16}
    assert A.mix_allocation(64, 1, 0.0).budget == {-1: 0, 0: 64, 1: 0}
    assert A.mix_allocation(6, 1, 0.5).budget == {-1: 2, 0: 3, 1: 1}


@pytest.mark.parametrize("args", [(8, 0, 1.0), (8, 0, 0.5), (4, 2, 0.5), (8, 1, 1.5), (8, -1, 0.0)])
def test_mix_allocation_errors(args):
    with pytest.raises(ConfigError):
        A.mix_allocation(*args)


@given(st.integers(1, 64), st.integers(0, 4), st.floats(0, 1))
def test_mix_allocation_invariants(d_h, t_w, rho):
    if rho > 0 and (t_w == 0 or d_h < 2 * t_w + 1):
        if int(np.floor(rho * d_h + 0.5)) > 0 or d_h < 2 * t_w + 1:
            with pytest.raises(ConfigError):
                A.mix_allocation(d_h, t_w, rho)
            return
    alloc = A.mix_allocation(d_h, t_w, rho)
    assert sum(alloc.budget.values()) == d_h
    assert alloc.imported == int(np.floor(rho * d_h + 0.5))
    nonzero = [alloc.budget[o] for o in alloc.budget if o]
    if nonzero:
        assert max(nonzero) - min(nonzero) <= 1
    offs = alloc.channel_offsets()
    assert len(offs) == d_h and np.all(np.diff(offs) >= 0)


def test_temporal_channel_shift_example():
    alloc = A.MixAllocation(1, {-1: 1, 0: 2, 1: 1})
    a, b, c = np.arange(4.0), 10 + np.arange(4.0), 20 + np.arange(4.0)
    x = np.stack([a, b, c])[:, None, :]
    y = A.temporal_channel_shift(x, alloc)[:, 0]
    assert y[1].tolist() == [a[0], b[1], b[2], c[3]]
    assert y[0].tolist() == [0, a[1], a[2], b[3]]
    assert A.temporal_channel_shift(x, A.MixAllocation(1, {0: 4})) is x


def test_variant_names_and_validation():
    assert A.AttentionVariant("SpaceTimeMixing").kind == A.MIXING
    assert A.AttentionVariant("spatial").kind == A.SPATIAL
    with pytest.raises(ConfigError):
        A.AttentionVariant("bogus")
    with pytest.raises(ConfigError):
        A.AttentionVariant(A.MIXING, rho=0.5, mix_key=False, mix_value=False)
    with pytest.raises(ConfigError):
        A.AttentionVariant(A.FULL, summary=True)


def _inst(rng, **kw):
    return random_instance(rng, **kw)


def test_single_token_attends_itself(rng):
    inst = _inst(rng, T=1, S=1, d_h=8, t_w=0, rho=0.0)
    x = inst.x[:, 1:]  # drop the class slot: one token only
    p = inst.p
    out = A.full_space_time_attention(Tensor(x), p).data
    v = x @ p.wv.data
    assert np.allclose(out, v @ p.wo.data + p.bo.data, atol=1e-13)


@pytest.mark.parametrize("seed", range(6))
def test_every_variant_matches_loop_oracle(seed):
    errs = oracle_errors(random_instance(Rng(seed)))
    assert max(errs.values()) < 1e-9, errs


def test_spec_sized_oracle_instances(rng):
    # T=2,S=4 full; T=3,S=4 factorized; T=4,S=4 local and mixing; T=2,S=2 summary
    for kw in (dict(T=2, S=4), dict(T=3, S=4), dict(T=4, S=4, d_h=8, t_w=1, rho=0.5)):
        inst = _inst(rng, d_h=kw.pop("d_h", 8), t_w=kw.pop("t_w", 1), rho=kw.pop("rho", 0.5), **kw)
        assert max(oracle_errors(inst).values()) < 1e-9
    inst = _inst(rng, T=2, S=1, d_h=8, t_w=1, rho=0.5)
    x = np.concatenate([inst.x, inst.x[:, 1:]], axis=1)  # two patch tokens per frame
    P = inst.arrays(inst.p)
    assert rel(A.spatial_attention(Tensor(x), inst.p, summary=True).data, R.spatial_with_summary(x, P, inst.h)) < 1e-9


def test_summary_token_is_patch_mean():
    k = Tensor(np.array([[[[0.0]], [[1.0]], [[3.0]]]]))  # [T=1, N=3 (cls + 2 patches), h=1, d_h=1]
    sk, _ = A.summary_keys_values(k, k, n_cls=1)
    assert sk.data.ravel().tolist() == [2.0]


def test_identical_frames_identical_summaries(rng):
    frame = rng.normal((1, 5, 2, 3))
    k = Tensor(np.repeat(frame, 4, axis=0))  # [T=4, N=5, h=2, d_h=3]
    sk, _ = A.summary_keys_values(k, k)
    assert sk.shape == (2, 1, 4, 3)
    assert np.ptp(sk.data, axis=-2).max() == 0


def test_degenerate_equivalences(rng):
    for _ in range(5):
        inst = _inst(rng, d_h=8, t_w=1, rho=0.0)
        X = Tensor(inst.x)
        sp = A.spatial_attention(X, inst.p).data
        mix0 = A.space_time_mixing_attention(X, inst.p, A.mix_allocation(8, 1, 0.0)).data
        assert np.array_equal(mix0, sp)
        assert rel(A.local_window_attention(X, inst.p, 0).data, sp) < 1e-12
        full = A.full_space_time_attention(X, inst.p).data
        assert rel(A.local_window_attention(X, inst.p, inst.T - 1).data, full) < 1e-12
        assert rel(A.local_window_attention(X, inst.p, inst.T + 3).data, full) < 1e-12


def test_T1_collapse(rng):
    inst = _inst(rng, T=1, d_h=8, t_w=1, rho=0.5)
    X = Tensor(inst.x)
    sp = A.spatial_attention(X, inst.p).data
    assert rel(A.full_space_time_attention(X, inst.p).data, sp) < 1e-12
    assert rel(A.local_window_attention(X, inst.p, 2).data, sp) < 1e-12
    # mixing at T=1 zero-fills imported channels, so it differs unless nothing is imported
    assert np.array_equal(A.space_time_mixing_attention(X, inst.p, A.MixAllocation(1, {0: 8})).data, sp)


def test_factorized_T1_uses_values(rng):
    inst = _inst(rng, T=1, d_h=8, t_w=0, rho=0.0)
    X = Tensor(inst.x)
    ytilde = inst.x @ inst.p2.wv.data @ inst.p2.wo.data + inst.p2.bo.data
    expect = A.spatial_attention(Tensor(ytilde), inst.p).data
    assert rel(A.factorized_attention(X, inst.p2, inst.p).data, expect) < 1e-12


def test_spatial_locality(rng):
    inst = _inst(rng, T=4, d_h=8, t_w=1, rho=0.0)
    base = A.spatial_attention(Tensor(inst.x), inst.p).data
    x = inst.x.copy()
    x[2] += 1.0
    out = A.spatial_attention(Tensor(x), inst.p).data
    assert np.array_equal(out[[0, 1, 3]], base[[0, 1, 3]]) and not np.array_equal(out[2], base[2])


@pytest.mark.parametrize("t_w", [1, 2])
def test_mixing_locality(t_w):
    assert mixing_locality(t_w, 6, seed=3)["violations"] == []


def test_wrap_fault_breaks_locality():
    assert mixing_locality(1, 6, seed=3, boundary="wrap")["violations"]


def test_attention_weights_row_stochastic(rng):
    inst = _inst(rng, d_h=8, t_w=1, rho=0.5)
    ws = []
    X = Tensor(inst.x)
    A.factorized_attention(X, inst.p2, inst.p, weights=ws)
    A.space_time_mixing_attention(X, inst.p, A.mix_allocation(8, 1, 0.5), summary=True, weights=ws)
    A.local_window_attention(X, inst.p, 1, weights=ws)
    for w in ws:
        assert np.abs(w.sum(-1) - 1).max() < 1e-12 and w.min() >= 0


def test_shift_costs_no_macs(rng):
    inst = _inst(rng, T=4, S=4, d_h=8, t_w=1, rho=0.5)
    X = Tensor(inst.x)
    with count_macs() as a:
        A.spatial_attention(X, inst.p)
    with count_macs() as b:
        A.space_time_mixing_attention(X, inst.p, A.mix_allocation(8, 1, 0.5))
    assert a.total == b.total


def test_class_tokens_are_not_shifted(rng):
    inst = _inst(rng, T=3, S=4, d_h=8, t_w=1, rho=0.5)
    k = Tensor(rng.normal((3, 5, 8)))
    out = A.shift_patch_tokens(k, A.mix_allocation(8, 1, 0.5).channel_offsets(), time_axis=0, token_axis=1).data
    assert np.array_equal(out[:, 0], k.data[:, 0])
    assert not np.array_equal(out[:, 1:], k.data[:, 1:])


def test_mixing_sees_neighbour_frames(rng):
    inst = _inst(rng, T=3, S=4, d_h=8, t_w=1, rho=0.5)
    alloc = A.mix_allocation(8, 1, 0.5)
    x = inst.x.copy()
    base = A.space_time_mixing_attention(Tensor(x), inst.p, alloc).data
    x[0, 1:] += 1.0
    out = A.space_time_mixing_attention(Tensor(x), inst.p, alloc).data
    assert not np.array_equal(out[1], base[1]) and np.array_equal(out[2], base[2])
