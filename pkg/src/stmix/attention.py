"""Attention operators over token grids ``[..., T, N, d]`` (N = S patch tokens + class slot).

All operators take the layer-normalised grid and return the projected
multi-head output of the same shape. Heads are stored fused: head ``j`` uses
columns ``j*d_h:(j+1)*d_h`` of ``wq``/``wk``/``wv`` and rows
``j*d_h:(j+1)*d_h`` of ``wo``.

Variants:

* full space-time: every token attends all ``T*N`` tokens.
* spatial-only: attention within each frame.
* factorized: temporal attention at fixed token slot, heads merged and
  projected, then spatial attention on fresh q/k/v of that result.
* local window: each query attends all tokens of frames ``[t-t_w, t+t_w]``
  clipped to the clip.
* space-time mixing: spatial attention whose patch-token keys/values carry
  channel blocks gathered from neighbouring frames (zero MACs for the gather).
* temporal class-only: spatial attention in the backbone; the temporal stage
  is a full attention over the per-frame class tokens (see the model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import ConfigError
from .rng import Rng
from .tensor import (
    Tensor,
    add,
    concat,
    getitem,
    mac_scope,
    matmul,
    mul,
    shift_array,
    softmax_lastdim,
    temporal_shift,
)

FULL = "full_space_time"
SPATIAL = "spatial_only"
FACTORIZED = "factorized"
LOCAL = "local_window"
MIXING = "space_time_mixing"
TEMPORAL_CLS = "temporal_class_only"
KINDS = (FULL, SPATIAL, FACTORIZED, LOCAL, MIXING, TEMPORAL_CLS)

_ALIASES = {
    "FullSpaceTime": FULL, "full": FULL,
    "SpatialOnly": SPATIAL, "spatial": SPATIAL,
    "Factorized": FACTORIZED,
    "LocalWindow": LOCAL, "local": LOCAL,
    "SpaceTimeMixing": MIXING, "mixing": MIXING,
    "TemporalClassOnly": TEMPORAL_CLS, "temporal_cls": TEMPORAL_CLS,
}


def canonical_kind(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ConfigError(f"unknown attention variant {kind!r}; choose from {KINDS}")
    return kind


@dataclass
class MixAllocation:
    """Channel budget per temporal offset; blocks are contiguous, most negative offset first."""

    t_w: int
    budget: dict[int, int]

    @property
    def d_h(self) -> int:
        return sum(self.budget.values())

    @property
    def imported(self) -> int:
        return self.d_h - self.budget.get(0, 0)

    def channel_offsets(self) -> np.ndarray:
        offsets = sorted(self.budget)
        return np.repeat(np.array(offsets, dtype=np.int64), [self.budget[o] for o in offsets])

    def blocks(self) -> dict[int, slice]:
        out, start = {}, 0
        for o in sorted(self.budget):
            out[o] = slice(start, start + self.budget[o])
            start += self.budget[o]
        return out


def mix_allocation(d_h: int, t_w: int, rho: float) -> MixAllocation:
    """Split ``round(rho * d_h)`` imported channels evenly over the ``2*t_w`` non-zero offsets.

    Leftover channels go to offsets in ascending order (most negative first);
    offset 0 keeps the rest.
    """
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"rho must lie in [0, 1], got {rho}")
    if t_w < 0:
        raise ConfigError(f"t_w must be >= 0, got {t_w}")
    imported = int(math.floor(rho * d_h + 0.5))
    if imported and t_w == 0:
        raise ConfigError("rho > 0 with t_w = 0: there are no neighbouring frames to import from")
    if rho > 0 and d_h < 2 * t_w + 1:
        raise ConfigError(f"d_h={d_h} is too small for a window of radius {t_w}")
    budget = {o: 0 for o in range(-t_w, t_w + 1)}
    others = [o for o in budget if o != 0]
    if others:
        base, rem = divmod(imported, len(others))
        for i, o in enumerate(others):
            budget[o] = base + (1 if i < rem else 0)
    budget[0] = d_h - imported
    return MixAllocation(t_w, budget)


@dataclass(frozen=True)
class AttentionVariant:
    kind: str = MIXING
    t_w: int = 1
    rho: float = 0.5
    mix_key: bool = True
    mix_value: bool = True
    mix_input: bool = False
    summary: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        if self.t_w < 0:
            raise ConfigError("t_w must be >= 0")
        if self.kind == MIXING and self.rho > 0 and not (self.mix_key or self.mix_value or self.mix_input):
            raise ConfigError("rho > 0 but mixing is disabled for input, key and value")
        if self.summary and self.kind not in (SPATIAL, MIXING, TEMPORAL_CLS):
            raise ConfigError(f"summary tokens are only defined for per-frame attention, not {self.kind}")

    def to_dict(self) -> dict:
        return dict(kind=self.kind, t_w=self.t_w, rho=self.rho, mix_key=self.mix_key,
                    mix_value=self.mix_value, mix_input=self.mix_input, summary=self.summary)

    @property
    def label(self) -> str:
        tag = self.kind
        if self.kind == LOCAL:
            tag += f"(t_w={self.t_w})"
        elif self.kind == MIXING:
            flags = "".join(c for c, on in (("x", self.mix_input), ("k", self.mix_key), ("v", self.mix_value)) if on)
            tag += f"(t_w={self.t_w},rho={self.rho:g},{flags})"
        return tag + ("+summary" if self.summary else "")


@dataclass
class AttentionParams:
    wq: Tensor  # [d, h*d_h]
    wk: Tensor
    wv: Tensor
    wo: Tensor  # [h*d_h, d]
    bo: Tensor  # [d]
    num_heads: int = field(default=1)

    @classmethod
    def init(cls, d: int, h: int, d_h: int, rng: Rng, std: float = 0.02) -> "AttentionParams":
        def w(*shape):
            return Tensor(rng.normal(shape, std=std), requires_grad=True)

        return cls(w(d, h * d_h), w(d, h * d_h), w(d, h * d_h), w(h * d_h, d),
                   Tensor(np.zeros(d), requires_grad=True), h)

    @property
    def head_dim(self) -> int:
        return self.wq.shape[1] // self.num_heads

    def tensors(self) -> dict[str, Tensor]:
        return {"wq": self.wq, "wk": self.wk, "wv": self.wv, "wo": self.wo, "bo": self.bo}


# ---------------------------------------------------------------------------
# building blocks

def _to_heads(t: Tensor, h: int) -> Tensor:
    """``[..., T, N, h*d_h] -> [..., T, N, h, d_h]``."""
    *lead, T, N, hd = t.shape
    return t.reshape(*lead, T, N, h, hd // h)


def _heads_first(t: Tensor) -> Tensor:
    """``[..., T, N, h, d_h] -> [..., h, T, N, d_h]``."""
    n = t.ndim
    return t.transpose(list(range(n - 4)) + [n - 2, n - 4, n - 3, n - 1])


def _merge_heads(t: Tensor) -> Tensor:
    """``[..., h, T, N, d_h] -> [..., T, N, h*d_h]``."""
    n = t.ndim
    t = t.transpose(list(range(n - 4)) + [n - 3, n - 2, n - 4, n - 1])
    *lead, T, N, h, dh = t.shape
    return t.reshape(*lead, T, N, h * dh)


def _project_qkv(x: Tensor, p: AttentionParams):
    with mac_scope("qkv_proj"):
        return matmul(x, p.wq), matmul(x, p.wk), matmul(x, p.wv)


def _project_out(y: Tensor, p: AttentionParams) -> Tensor:
    with mac_scope("head_proj"):
        return add(matmul(y, p.wo), p.bo)


def attend(q: Tensor, k: Tensor, v: Tensor, weights: list | None) -> Tensor:
    scale = 1.0 / math.sqrt(q.shape[-1])
    with mac_scope("attention_scores"):
        s = matmul(q, k.swapaxes(-1, -2))
    a = softmax_lastdim(mul(s, scale))
    if weights is not None:
        weights.append(a.data)
    with mac_scope("attention_apply"):
        return matmul(a, v)


def _slot_index(ndim: int, token_axis: int, sl: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[token_axis] = sl
    return tuple(idx)


def shift_patch_tokens(t: Tensor, offsets: np.ndarray, *, time_axis: int, token_axis: int,
                       n_cls: int = 1, boundary: str = "zero") -> Tensor:
    """Temporal channel shift of patch tokens only; class slots pass through unshifted."""
    if not np.any(offsets):
        return t
    time_axis %= t.ndim
    token_axis %= t.ndim
    if n_cls == 0:
        return temporal_shift(t, offsets, time_axis, boundary)
    cls = getitem(t, _slot_index(t.ndim, token_axis, slice(0, n_cls)))
    patches = getitem(t, _slot_index(t.ndim, token_axis, slice(n_cls, None)))
    patches = temporal_shift(patches, offsets, time_axis, boundary)
    return concat([cls, patches], axis=token_axis)


def temporal_channel_shift(x, alloc: MixAllocation, boundary: str = "zero"):
    """``out[t, s, c] = x[t + offset(c), s, c]`` for ``x`` shaped ``[..., T, S, d_h]``; zero outside the clip."""
    offsets = alloc.channel_offsets()
    if isinstance(x, Tensor):
        return temporal_shift(x, offsets, x.ndim - 3, boundary)
    x = np.asarray(x, dtype=np.float64)
    return shift_array(x, offsets, x.ndim - 3, boundary)


def summary_keys_values(k: Tensor, v: Tensor, n_cls: int = 1):
    """Per-frame spatial means of patch-token keys/values.

    ``k``/``v`` are ``[..., T, N, h, d_h]``; returns ``[..., h, 1, T, d_h]`` so
    they broadcast as extra keys for every query frame. Because the key/value
    projections are linear, the mean of projected tokens equals the projection
    of the averaged (summary) token.
    """
    def reduce(t):
        patches = getitem(t, _slot_index(t.ndim, t.ndim - 3, slice(n_cls, None)))
        m = patches.mean(axis=t.ndim - 3)  # [..., T, h, d_h]
        n = m.ndim
        m = m.transpose(list(range(n - 3)) + [n - 2, n - 3, n - 1])  # [..., h, T, d_h]
        *lead, h, T, dh = m.shape
        return m.reshape(*lead, h, 1, T, dh)

    return reduce(k), reduce(v)


def _attend_with_summary(q, k, v, sk, sv, weights):
    scale = 1.0 / math.sqrt(q.shape[-1])
    n_own = k.shape[-2]
    with mac_scope("attention_scores"):
        s_own = matmul(q, k.swapaxes(-1, -2))
    with mac_scope("summary"):
        s_sum = matmul(q, sk.swapaxes(-1, -2))
    a = softmax_lastdim(mul(concat([s_own, s_sum], axis=-1), scale))
    if weights is not None:
        weights.append(a.data)
    a_own = getitem(a, (Ellipsis, slice(0, n_own)))
    a_sum = getitem(a, (Ellipsis, slice(n_own, None)))
    with mac_scope("attention_apply"):
        y = matmul(a_own, v)
    with mac_scope("summary"):
        return add(y, matmul(a_sum, sv))


# ---------------------------------------------------------------------------
# variants

def full_space_time_attention(x: Tensor, p: AttentionParams, *, weights: list | None = None) -> Tensor:
    q, k, v = (_heads_first(_to_heads(t, p.num_heads)) for t in _project_qkv(x, p))
    *lead, h, T, N, dh = q.shape
    flat = [t.reshape(*lead, h, T * N, dh) for t in (q, k, v)]
    y = attend(*flat, weights).reshape(*lead, h, T, N, dh)
    return _project_out(_merge_heads(y), p)


def _frame_attention(x: Tensor, p: AttentionParams, *, key_offsets=None, value_offsets=None,
                     input_offsets=None, summary: bool = False, n_cls: int = 1,
                     boundary: str = "zero", weights: list | None = None) -> Tensor:
    if input_offsets is not None:
        x = shift_patch_tokens(x, input_offsets, time_axis=-3, token_axis=-2, n_cls=n_cls, boundary=boundary)
    q, k, v = (_to_heads(t, p.num_heads) for t in _project_qkv(x, p))
    if summary:
        sk, sv = summary_keys_values(k, v, n_cls)
    if key_offsets is not None:
        k = shift_patch_tokens(k, key_offsets, time_axis=-4, token_axis=-3, n_cls=n_cls, boundary=boundary)
    if value_offsets is not None:
        v = shift_patch_tokens(v, value_offsets, time_axis=-4, token_axis=-3, n_cls=n_cls, boundary=boundary)
    q, k, v = _heads_first(q), _heads_first(k), _heads_first(v)
    y = _attend_with_summary(q, k, v, sk, sv, weights) if summary else attend(q, k, v, weights)
    return _project_out(_merge_heads(y), p)


def spatial_attention(x: Tensor, p: AttentionParams, *, summary: bool = False, n_cls: int = 1,
                      weights: list | None = None) -> Tensor:
    return _frame_attention(x, p, summary=summary, n_cls=n_cls, weights=weights)


def space_time_mixing_attention(x: Tensor, p: AttentionParams, alloc: MixAllocation, *,
                                mix_key: bool = True, mix_value: bool = True, mix_input: bool = False,
                                input_alloc: MixAllocation | None = None, summary: bool = False,
                                n_cls: int = 1, boundary: str = "zero",
                                weights: list | None = None) -> Tensor:
    """Spatial attention against temporally mixed keys/values.

    Patch-token keys (and values) are rebuilt channel block by channel block
    from frames ``t + offset``, so each query attends S locations whose
    vectors already blend the local temporal window. ``mix_input`` instead
    shifts the normalised input tokens before all three projections, using
    ``input_alloc`` (defaults to the head allocation rescaled to ``d``).
    """
    if alloc.d_h != p.head_dim:
        raise ConfigError(f"allocation covers {alloc.d_h} channels, heads have {p.head_dim}")
    if alloc.imported and not (mix_key or mix_value or mix_input):
        raise ConfigError("allocation imports channels but no mixing target is enabled")
    offsets = alloc.channel_offsets()
    input_offsets = None
    if mix_input:
        if input_alloc is None:
            d = x.shape[-1]
            input_alloc = mix_allocation(d, alloc.t_w, alloc.imported / alloc.d_h)
        input_offsets = input_alloc.channel_offsets()
    return _frame_attention(
        x, p,
        key_offsets=offsets if mix_key else None,
        value_offsets=offsets if mix_value else None,
        input_offsets=input_offsets,
        summary=summary, n_cls=n_cls, boundary=boundary, weights=weights,
    )


def local_window_attention(x: Tensor, p: AttentionParams, t_w: int, *, weights: list | None = None) -> Tensor:
    if t_w < 0:
        raise ConfigError("t_w must be >= 0")
    q, k, v = (_heads_first(_to_heads(t, p.num_heads)) for t in _project_qkv(x, p))
    *lead, h, T, N, dh = q.shape
    outs = []
    for t in range(T):
        lo, hi = max(0, t - t_w), min(T - 1, t + t_w)
        width = hi - lo + 1
        sl = (Ellipsis, slice(lo, hi + 1), slice(None), slice(None))
        kw = getitem(k, sl).reshape(*lead, h, width * N, dh)
        vw = getitem(v, sl).reshape(*lead, h, width * N, dh)
        qt = getitem(q, (Ellipsis, slice(t, t + 1), slice(None), slice(None))).reshape(*lead, h, N, dh)
        outs.append(attend(qt, kw, vw, weights).reshape(*lead, h, 1, N, dh))
    y = concat(outs, axis=-3) if len(outs) > 1 else outs[0]
    return _project_out(_merge_heads(y), p)


def factorized_attention(x: Tensor, p_time: AttentionParams, p_space: AttentionParams, *,
                         weights: list | None = None) -> Tensor:
    q, k, v = (_heads_first(_to_heads(t, p_time.num_heads)) for t in _project_qkv(x, p_time))
    # temporal stage: per token slot, attend the same slot across frames
    q, k, v = (t.swapaxes(-3, -2) for t in (q, k, v))
    y_time = attend(q, k, v, weights).swapaxes(-3, -2)
    y_time = _project_out(_merge_heads(y_time), p_time)
    return _frame_attention(y_time, p_space, weights=weights)


def temporal_class_attention(c: Tensor, p: AttentionParams, *, weights: list | None = None) -> Tensor:
    """Full self-attention among the T class tokens ``c[..., T, d]``."""
    *lead, T, d = c.shape
    grid = c.reshape(*lead, 1, T, d)
    return _frame_attention(grid, p, n_cls=0, weights=weights).reshape(*lead, T, d)


def apply_attention(x: Tensor, variant: AttentionVariant, p: AttentionParams,
                    p_time: AttentionParams | None = None, *, n_cls: int = 1,
                    boundary: str = "zero", weights: list | None = None) -> Tensor:
    """Dispatch one MSA block for ``variant``."""
    kind = variant.kind
    if kind == FULL:
        return full_space_time_attention(x, p, weights=weights)
    if kind in (SPATIAL, TEMPORAL_CLS):
        return spatial_attention(x, p, summary=variant.summary, n_cls=n_cls, weights=weights)
    if kind == LOCAL:
        return local_window_attention(x, p, variant.t_w, weights=weights)
    if kind == FACTORIZED:
        if p_time is None:
            raise ConfigError("factorized attention needs temporal-stage parameters")
        return factorized_attention(x, p_time, p, weights=weights)
    alloc = mix_allocation(p.head_dim, variant.t_w, variant.rho)
    input_alloc = mix_allocation(x.shape[-1], variant.t_w, variant.rho) if variant.mix_input else None
    return space_time_mixing_attention(
        x, p, alloc, mix_key=variant.mix_key, mix_value=variant.mix_value,
        mix_input=variant.mix_input, input_alloc=input_alloc, summary=variant.summary,
        n_cls=n_cls, boundary=boundary, weights=weights,
    )
