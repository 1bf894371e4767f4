"""Direct loop evaluations of every attention variant.

These are deliberately naive: per-token projections, per-query loops over an
explicitly enumerated key set, and a scalar softmax. They share no code with
:mod:`stmix.attention` and serve as its oracle. Inputs are plain arrays: a grid
``x[T, N, d]`` and a parameter dict with ``wq, wk, wv [d, h*d_h]``,
``wo [h*d_h, d]``, ``bo [d]``.
"""

from __future__ import annotations

import math

import numpy as np


def _softmax(logits: list[float]) -> list[float]:
    m = max(logits)
    e = [math.exp(z - m) for z in logits]
    tot = sum(e)
    return [v / tot for v in e]


def _proj(x, w, head, dh):
    """Per-token projection for one head: dict (t, s) -> vector."""
    T, N, _ = x.shape
    cols = w[:, head * dh:(head + 1) * dh]
    return {(t, s): np.array([np.dot(x[t, s], cols[:, c]) for c in range(dh)])
            for t in range(T) for s in range(N)}


def _attend_one(q, keys, values, dh):
    w = _softmax([float(np.dot(q, k)) / math.sqrt(dh) for k in keys])
    out = np.zeros(dh)
    for wi, v in zip(w, values):
        out = out + wi * v
    return out, w


def _output(heads_out, P, T, N):
    d = P["wo"].shape[1]
    y = np.zeros((T, N, d))
    for t in range(T):
        for s in range(N):
            cat = np.concatenate([ho[(t, s)] for ho in heads_out])
            y[t, s] = np.array([np.dot(cat, P["wo"][:, j]) for j in range(d)]) + P["bo"]
    return y


def _run(x, P, h, key_set, make_kv=None, weights=None):
    """Generic driver. ``key_set(t, s)`` lists the (t', s') keys a query attends."""
    x = np.asarray(x, dtype=np.float64)
    T, N, _ = x.shape
    dh = P["wq"].shape[1] // h
    heads_out = []
    for j in range(h):
        q = _proj(x, P["wq"], j, dh)
        k = _proj(x, P["wk"], j, dh)
        v = _proj(x, P["wv"], j, dh)
        extra_k, extra_v = [], []
        if make_kv is not None:
            k, v, extra_k, extra_v = make_kv(k, v)
        out = {}
        for t in range(T):
            for s in range(N):
                idx = key_set(t, s)
                keys = [k[i] for i in idx] + list(extra_k)
                vals = [v[i] for i in idx] + list(extra_v)
                out[(t, s)], w = _attend_one(q[(t, s)], keys, vals, dh)
                if weights is not None:
                    weights.append(w)
        heads_out.append(out)
    return _output(heads_out, P, T, N)


def full(x, P, h, weights=None):
    T, N, _ = np.shape(x)
    every = [(tt, ss) for tt in range(T) for ss in range(N)]
    return _run(x, P, h, lambda t, s: every, weights=weights)


def spatial(x, P, h, weights=None):
    N = np.shape(x)[1]
    return _run(x, P, h, lambda t, s: [(t, ss) for ss in range(N)], weights=weights)


def local_window(x, P, h, t_w, weights=None):
    T, N, _ = np.shape(x)

    def keys(t, s):
        return [(tt, ss) for tt in range(T) if abs(tt - t) <= t_w for ss in range(N)]

    return _run(x, P, h, keys, weights=weights)


def factorized(x, P_time, P_space, h, weights=None):
    T = np.shape(x)[0]
    y_time = _run(x, P_time, h, lambda t, s: [(tt, s) for tt in range(T)], weights=weights)
    return spatial(y_time, P_space, h, weights=weights)


def gather_shifted(vecs: dict, budget: dict[int, int], T: int, N: int, n_cls: int):
    """Rebuild each patch vector as ``[vec[t-t_w][blk], ..., vec[t+t_w][blk]]``; zeros off-clip."""
    out = {}
    for t in range(T):
        for s in range(N):
            if s < n_cls:
                out[(t, s)] = vecs[(t, s)]
                continue
            parts, start = [], 0
            for o in sorted(budget):
                width = budget[o]
                src = t + o
                if 0 <= src < T:
                    parts.append(vecs[(src, s)][start:start + width])
                else:
                    parts.append(np.zeros(width))
                start += width
            out[(t, s)] = np.concatenate(parts)
    return out


def mixing(x, P, h, budget, *, mix_key=True, mix_value=True, mix_input=False, input_budget=None,
           summary=False, n_cls=1, weights=None):
    x = np.asarray(x, dtype=np.float64)
    T, N, d = x.shape
    if mix_input:
        rows = {(t, s): x[t, s] for t in range(T) for s in range(N)}
        rows = gather_shifted(rows, input_budget, T, N, n_cls)
        x = np.array([[rows[(t, s)] for s in range(N)] for t in range(T)])

    def make_kv(k, v):
        extra_k, extra_v = [], []
        if summary:
            for t in range(T):
                extra_k.append(np.mean([k[(t, s)] for s in range(n_cls, N)], axis=0))
                extra_v.append(np.mean([v[(t, s)] for s in range(n_cls, N)], axis=0))
        if mix_key:
            k = gather_shifted(k, budget, T, N, n_cls)
        if mix_value:
            v = gather_shifted(v, budget, T, N, n_cls)
        return k, v, extra_k, extra_v

    return _run(x, P, h, lambda t, s: [(t, ss) for ss in range(N)], make_kv, weights=weights)


def spatial_with_summary(x, P, h, n_cls=1, weights=None):
    return mixing(x, P, h, {0: P["wq"].shape[1] // h}, mix_key=False, mix_value=False,
                  summary=True, n_cls=n_cls, weights=weights)


def layer_norm(x, g, b, eps=1e-6):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for idx in np.ndindex(*x.shape[:-1]):
        row = x[idx]
        mu = sum(row) / len(row)
        var = sum((r - mu) ** 2 for r in row) / len(row)
        out[idx] = (row - mu) / math.sqrt(var + eps) * g + b
    return out


def gelu(x):
    return np.vectorize(lambda z: 0.5 * z * (1.0 + math.erf(z / math.sqrt(2.0))))(x)


def _block(x, P, prefix, h, attn):
    """Pre-norm residual attention + MLP on a grid ``x[T, N, d]``; ``attn(z, Pa)`` runs the attention."""
    Pa = {k: P[f"{prefix}.attn.{k}"] for k in ("wq", "wk", "wv", "wo", "bo")}
    y = x + attn(layer_norm(x, P[f"{prefix}.ln1.g"], P[f"{prefix}.ln1.b"]), Pa)
    z = layer_norm(y, P[f"{prefix}.ln2.g"], P[f"{prefix}.ln2.b"])
    hidden = gelu(z @ P[f"{prefix}.mlp.w1"] + P[f"{prefix}.mlp.b1"])
    return y + hidden @ P[f"{prefix}.mlp.w2"] + P[f"{prefix}.mlp.b2"]


def model_logits(clip, P, *, num_layers, num_heads, patch_size, budget=None, aggregation="average"):
    """Straight-line forward of one clip ``[T, H, W, C]`` with plain-array parameters ``P``.

    ``budget`` selects key/value mixing with that channel allocation; ``None``
    means spatial-only attention in every layer.
    """
    clip = np.asarray(clip, dtype=np.float64)
    T, H, W, C = clip.shape
    K, h = patch_size, num_heads
    d = P["embed.E"].shape[1]
    rows = []
    for t in range(T):
        frame = [P["embed.cls"] + P["embed.pos_time"][t, 0]]
        s = 0
        for py in range(0, H, K):
            for px in range(0, W, K):
                vec = [clip[t, py + i, px + j, c] for i in range(K) for j in range(K) for c in range(C)]
                frame.append(np.array(vec) @ P["embed.E"] + P["embed.pos_space"][0, s] + P["embed.pos_time"][t, 0])
                s += 1
        rows.append(frame)
    x = np.array(rows)
    if budget is None:
        attn = lambda z, Pa: spatial(z, Pa, h)
    else:
        attn = lambda z, Pa: mixing(z, Pa, h, budget)
    for i in range(num_layers):
        x = _block(x, P, f"layer{i}", h, attn)
    cls = x[:, 0, :]
    if aggregation == "average":
        feat = sum(cls) / T
    else:
        z = sum(cls) / T + P["ta.offset"]
        Pa = {k: P[f"ta0.attn.{k}"] for k in ("wq", "wk", "wv", "wo", "bo")}
        zq = layer_norm(z, P["ta0.ln1.g"], P["ta0.ln1.b"])
        ck = layer_norm(cls, P["ta0.ln1.g"], P["ta0.ln1.b"])
        dh = Pa["wq"].shape[1] // h
        heads = []
        for j in range(h):
            cols = slice(j * dh, (j + 1) * dh)
            q = zq @ Pa["wq"][:, cols]
            out, _ = _attend_one(q, [c @ Pa["wk"][:, cols] for c in ck], [c @ Pa["wv"][:, cols] for c in ck], dh)
            heads.append(out)
        z = z + np.concatenate(heads) @ Pa["wo"] + Pa["bo"]
        hid = gelu(layer_norm(z, P["ta0.ln2.g"], P["ta0.ln2.b"]) @ P["ta0.mlp.w1"] + P["ta0.mlp.b1"])
        feat = z + hid @ P["ta0.mlp.w2"] + P["ta0.mlp.b2"]
    feat = layer_norm(feat, P["norm.g"], P["norm.b"])
    return feat @ P["head.w"] + P["head.b"]
