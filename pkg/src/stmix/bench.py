"""Shift-overhead microbenchmark: spatial-only vs space-time mixing at equal config."""

from __future__ import annotations

import time

import numpy as np

from .attention import MIXING, SPATIAL, AttentionVariant
from .model import ModelConfig, forward, init_params
from .rng import Rng


def time_forward(clips: np.ndarray, config: ModelConfig, params: dict, *, warmup: int = 5,
                 iters: int = 20) -> tuple[np.ndarray, list[float]]:
    """Return the logits and ``iters`` wall-clock samples taken after ``warmup`` untimed calls."""
    for _ in range(warmup):
        out = forward(clips, config, params).data
    samples = []
    for _ in range(iters):
        t0 = time.perf_counter()
        out = forward(clips, config, params).data
        samples.append(time.perf_counter() - t0)
    return out, samples


def shift_overhead(config: ModelConfig, *, seed: int = 0, batch: int = 4, warmup: int = 5,
                   iters: int = 20) -> dict:
    """Median relative overhead of mixing (and of its rho=0 no-op form) over spatial-only.

    All three models share one parameter set, so the rho=0 logits must equal
    the spatial-only logits bit for bit.
    """
    if warmup < 5 or iters < 20:
        raise ValueError("protocol needs at least 5 warmup and 20 timed iterations")
    rng = Rng(seed)
    spatial = config.with_variant(AttentionVariant(SPATIAL))
    params = init_params(spatial, rng.fork())
    clips = rng.normal((batch, config.num_frames, config.image_size, config.image_size, config.channels))
    mix = config.variant if config.variant.kind == MIXING else AttentionVariant(MIXING)
    runs = {
        "spatial": spatial,
        "mixing": config.with_variant(mix),
        "mixing_rho0": config.with_variant(AttentionVariant(MIXING, t_w=mix.t_w, rho=0.0)),
    }
    medians, outputs = {}, {}
    for name, cfg in runs.items():
        outputs[name], samples = time_forward(clips, cfg, params, warmup=warmup, iters=iters)
        medians[name] = float(np.median(samples))
    base = medians["spatial"]
    return {
        "batch": batch, "warmup": warmup, "iters": iters, "variant": mix.label,
        "median_s": medians,
        "frames_per_s": {k: batch * config.num_frames / v for k, v in medians.items()},
        "overhead": (medians["mixing"] - base) / base,
        "overhead_rho0": (medians["mixing_rho0"] - base) / base,
        "rho0_identical_to_spatial": bool(np.array_equal(outputs["mixing_rho0"], outputs["spatial"])),
        "logits_digest": {k: float(v.sum()) for k, v in outputs.items()},
    }
