"""Clip to layer-0 token grid: patches, linear embedding, positional terms, class tokens.

Token grids are shaped ``[..., T, S + 1, d]``; slot 0 of every frame holds that
frame's class token, slots ``1..S`` hold patch tokens in row-major patch order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import ConfigError
from .rng import Rng
from .tensor import ShapeError, Tensor, add, concat, matmul, mac_scope

CLIP_HEADER = np.dtype("<i8")


@dataclass
class Clip:
    data: np.ndarray  # [T, H, W, C]
    frame_rate: float | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 4 or self.data.shape[0] < 1:
            raise ConfigError(f"clip must be [T, H, W, C] with T >= 1, got {self.data.shape}")


@dataclass
class EmbeddingParams:
    E: Tensor          # [3K^2, d]
    pos_space: Tensor  # [1, S, d]
    pos_time: Tensor   # [T, 1, d]
    cls: Tensor        # [d]

    @classmethod
    def init(cls, patch_dim: int, num_patches: int, num_frames: int, d: int,
             rng: Rng, std: float = 0.02) -> "EmbeddingParams":
        # pos_time starts at zero so temporal position has no effect early on
        return cls(
            E=Tensor(rng.normal((patch_dim, d), std=std), requires_grad=True),
            pos_space=Tensor(rng.normal((1, num_patches, d), std=std), requires_grad=True),
            pos_time=Tensor(np.zeros((num_frames, 1, d)), requires_grad=True),
            cls=Tensor(rng.normal(d, std=std), requires_grad=True),
        )


def patchify(clip, K: int) -> np.ndarray:
    """Split frames into KxK patches: ``[..., T, H, W, C] -> [..., T, S, K*K*C]``.

    Patches are ordered row-major over the patch grid. Each patch vector is
    flattened in (row-in-patch, col-in-patch, channel) order, which fixes the
    row layout of the embedding matrix.
    """
    x = clip.data if isinstance(clip, Clip) else np.asarray(clip, dtype=np.float64)
    *lead, T, H, W, C = x.shape
    if H % K or W % K:
        raise ConfigError(f"frame size {H}x{W} not divisible by patch size {K}")
    gh, gw = H // K, W // K
    x = x.reshape(*lead, T, gh, K, gw, K, C)
    n = len(lead)
    x = np.moveaxis(x, n + 3, n + 2)  # [..., T, gh, gw, K, K, C]
    return x.reshape(*lead, T, gh * gw, K * K * C)


def embed(patches, params: EmbeddingParams) -> Tensor:
    """``token(t, s) = patch(t, s) @ E + pos_space[s] + pos_time[t]``; class token ``cls + pos_time[t]``."""
    patches = patches if isinstance(patches, Tensor) else Tensor(patches)
    if patches.shape[-1] != params.E.shape[0]:
        raise ShapeError(f"patch length {patches.shape[-1]} != embedding rows {params.E.shape[0]}")
    *lead, T, S, _ = patches.shape
    d = params.E.shape[1]
    if params.pos_space.shape != (1, S, d) or params.pos_time.shape != (T, 1, d):
        raise ShapeError("positional embeddings do not match the patch grid")
    with mac_scope("patch_embed"):
        tokens = matmul(patches, params.E)
    tokens = add(add(tokens, params.pos_space), params.pos_time)
    cls_tokens = add(params.cls.reshape(1, 1, d), params.pos_time)  # [T, 1, d]
    if lead:
        cls_tokens = add(Tensor(np.zeros((*lead, T, 1, d))), cls_tokens)
    return concat([cls_tokens, tokens], axis=-2)


def write_clip(path, data, K: int):
    """Raw clip file: five little-endian int64 (T, H, W, C, K), then float64 pixels."""
    data = np.asarray(data, dtype="<f8")
    T, H, W, C = data.shape
    with open(path, "wb") as fh:
        fh.write(np.array([T, H, W, C, K], dtype=CLIP_HEADER).tobytes())
        fh.write(data.tobytes(order="C"))


def read_clip(path, K: int | None = None) -> Clip:
    raw = Path(path).read_bytes()
    if len(raw) < 40:
        raise ConfigError(f"{path}: truncated clip header")
    T, H, W, C, k = (int(v) for v in np.frombuffer(raw[:40], dtype=CLIP_HEADER))
    if K is not None and k != K:
        raise ConfigError(f"{path}: clip was written for patch size {k}, expected {K}")
    if C != 3 or H % k or W % k:
        raise ConfigError(f"{path}: bad clip geometry T={T} H={H} W={W} C={C} K={k}")
    body = np.frombuffer(raw[40:], dtype="<f8")
    if body.size != T * H * W * C:
        raise ConfigError(f"{path}: expected {T * H * W * C} values, found {body.size}")
    return Clip(body.reshape(T, H, W, C).astype(np.float64))
