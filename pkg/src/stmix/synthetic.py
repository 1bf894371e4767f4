"""Seeded synthetic clip tasks.

``reversed_pairs``
    A flat-coloured square grows from ``K/2`` to ``3H/4`` pixels wide around a
    random centre, over a faint static texture. Every content draw is emitted
    twice: forward (label 0) and frame-reversed (label 1). Both clips hold
    the same multiset of frames, so only a model that sees frame order can
    separate them. Growth changes how many patches are covered, which survives
    per-token normalisation far better than a brightness ramp would.

``moving_dot``
    A bright KxK square slides one way across the frame, starting at the
    horizontal centre (label 0 = left, 1 = right). Since the start is fixed,
    per-frame positions already reveal the direction; it is a sanity task,
    not a temporal discriminator.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ._validation import ConfigError
from .rng import Rng

TASKS = ("reversed_pairs", "moving_dot")


@dataclass
class SyntheticSpec:
    task: str = "reversed_pairs"
    T: int = 8
    H: int = 32
    W: int = 32
    noise: float = 0.05
    num_samples: int = 200
    seed: int = 0
    patch_size: int = 8
    speed: int = 1

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {TASKS}")
        if self.T < 1 or self.num_samples < 1:
            raise ConfigError("T and num_samples must be positive")
        K = self.patch_size
        if K > min(self.H, self.W):
            raise ConfigError("square larger than the frame")
        if self.task == "reversed_pairs" and self.num_samples % 2:
            raise ConfigError("reversed_pairs needs an even number of samples")
        if self.task == "moving_dot":
            x0 = (self.W - K) // 2
            travel = (self.T - 1) * self.speed
            if x0 - travel < 0 or x0 + travel > self.W - K:
                raise ConfigError(f"dot path of {travel}px leaves a {self.W}px frame")

    def to_dict(self) -> dict:
        return asdict(self)


def _reversed_pairs(spec: SyntheticSpec, rng: Rng):
    T, H, W, K = spec.T, spec.H, spec.W, spec.patch_size
    sides = np.round(np.linspace(K / 2, 0.75 * min(H, W), T)).astype(int)
    big = sides[-1]
    clips, labels = [], []
    for _ in range(spec.num_samples // 2):
        clip = np.repeat(0.2 * rng.uniform((1, H, W, 3)), T, axis=0)
        cy = rng.integers(big // 2, H - (big - big // 2) + 1)
        cx = rng.integers(big // 2, W - (big - big // 2) + 1)
        colour = rng.uniform(3, 0.5, 1.0)
        for t, s in enumerate(sides):
            top, left = cy - s // 2, cx - s // 2
            clip[t, top:top + s, left:left + s, :] = colour
        if spec.noise:
            clip = clip + rng.normal(clip.shape, std=spec.noise)
        clips += [clip, clip[::-1].copy()]
        labels += [0, 1]
    return np.stack(clips), np.array(labels)


def _moving_dot(spec: SyntheticSpec, rng: Rng):
    T, H, W, K = spec.T, spec.H, spec.W, spec.patch_size
    x0 = (W - K) // 2
    clips = np.zeros((spec.num_samples, T, H, W, 3))
    labels = rng.integers(0, 2, spec.num_samples)
    for i, lab in enumerate(labels):
        y = rng.integers(0, H - K + 1)
        step = spec.speed if lab == 1 else -spec.speed
        for t in range(T):
            x = x0 + t * step
            clips[i, t, y:y + K, x:x + K, :] = 1.0
    if spec.noise:
        clips = clips + rng.normal(clips.shape, std=spec.noise)
    return clips, labels


def gen_synthetic(spec: SyntheticSpec):
    """Return ``(clips[n, T, H, W, 3], labels[n])``."""
    spec.validate()
    rng = Rng(spec.seed)
    if spec.task == "reversed_pairs":
        return _reversed_pairs(spec, rng)
    return _moving_dot(spec, rng)
