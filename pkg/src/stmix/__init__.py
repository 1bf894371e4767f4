"""Video transformers with space-time mixing attention, built on a small numpy autodiff core."""

from ._validation import ConfigError
from .attention import AttentionParams, AttentionVariant, MixAllocation, apply_attention, mix_allocation
from .complexity import FlopReport, analytic_flops, compare_variants, counted_flops
from .estimator import SpaceTimeMixingClassifier
from .gradcheck import GradCheckReport, grad_check
from .model import ModelConfig, forward, init_params, preset, train_step
from .rng import Rng
from .synthetic import SyntheticSpec, gen_synthetic
from .tensor import NonFiniteError, ShapeError, Tensor, count_macs

__all__ = [
    "AttentionParams", "AttentionVariant", "ConfigError", "FlopReport", "GradCheckReport",
    "MixAllocation", "ModelConfig", "NonFiniteError", "Rng", "ShapeError", "SpaceTimeMixingClassifier",
    "SyntheticSpec", "Tensor", "analytic_flops", "apply_attention", "compare_variants", "count_macs",
    "counted_flops", "forward", "gen_synthetic", "grad_check", "init_params", "mix_allocation",
    "preset", "train_step",
]
__version__ = "0.1.0"
