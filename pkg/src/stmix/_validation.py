"""Input validation helpers shared by the estimator, model and CLI."""

from __future__ import annotations

import numpy as np


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def check_clips(X, *, num_frames: int | None = None, image_size: int | None = None,
                patch_size: int | None = None, channels: int = 3) -> np.ndarray:
    """Return ``X`` as a float64 array of shape ``[n, T, H, W, C]``.

    A single clip ``[T, H, W, C]`` is promoted to a batch of one.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 4:
        X = X[None]
    if X.ndim != 5:
        raise ConfigError(f"expected clips shaped [n, T, H, W, C], got {X.shape}")
    _, T, H, W, C = X.shape
    if C != channels:
        raise ConfigError(f"expected {channels} channels, got {C}")
    if T < 1:
        raise ConfigError("clips need at least one frame")
    if num_frames is not None and T != num_frames:
        raise ConfigError(f"model expects {num_frames} frames, clip has {T}")
    if image_size is not None and (H, W) != (image_size, image_size):
        raise ConfigError(f"model expects {image_size}x{image_size} frames, clip is {H}x{W}")
    if patch_size is not None and (H % patch_size or W % patch_size):
        raise ConfigError(f"frame size {H}x{W} not divisible by patch size {patch_size}")
    if not np.all(np.isfinite(X)):
        raise ConfigError("clips contain NaN or Inf")
    return X


def check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n:
        raise ConfigError(f"expected {n} labels, got shape {y.shape}")
    return y
