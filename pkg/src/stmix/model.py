"""Video transformer assembly: configuration, parameters, forward pass, SGD step.

Parameters live in a flat ``dict[str, Tensor]`` with dotted names
(``layer0.attn.wq``, ``ta0.mlp.w1``, ``head.w`` ...), which is also the
serialisation layout.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ._validation import ConfigError, check_clips
from .attention import (
    FACTORIZED,
    SPATIAL,
    TEMPORAL_CLS,
    AttentionParams,
    AttentionVariant,
    attend,
    apply_attention,
    temporal_class_attention,
)
from .rng import Rng
from .tensor import (
    NonFiniteError,
    Tensor,
    add,
    cross_entropy,
    gelu,
    getitem,
    layer_norm,
    mac_scope,
    matmul,
    sorted_mean,
)
from .tokenization import EmbeddingParams, embed, patchify

AGGREGATIONS = ("average", "attention")
SA_POSITIONS = ("all", "first_half", "second_half", "odd", "none")


@dataclass
class ModelConfig:
    num_layers: int = 4
    num_heads: int = 4
    embed_dim: int = 64
    head_dim: int = 16
    patch_size: int = 8
    num_frames: int = 8
    image_size: int = 32
    num_classes: int = 2
    variant: AttentionVariant = field(default_factory=AttentionVariant)
    # which layers use ``variant``; the rest run spatial-only attention
    sa_position: str | tuple[bool, ...] = "all"
    aggregation: str = "attention"
    ta_layers: int = 1
    # class-token temporal encoder depth, used by the temporal_class_only variant
    temporal_layers: int = 1
    mlp_ratio: int = 4
    channels: int = 3
    learn_temporal_pos: bool = True
    init_std: float = 0.02

    def __post_init__(self):
        if isinstance(self.variant, dict):
            self.variant = AttentionVariant(**self.variant)
        if isinstance(self.sa_position, list):
            self.sa_position = tuple(bool(v) for v in self.sa_position)
        self.validate()

    def validate(self):
        if self.image_size % self.patch_size:
            raise ConfigError(f"image size {self.image_size} not divisible by patch size {self.patch_size}")
        if min(self.num_layers, self.num_heads, self.embed_dim, self.head_dim, self.num_frames) < 1:
            raise ConfigError("layer/head/dimension/frame counts must be positive")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"aggregation must be one of {AGGREGATIONS}")
        if isinstance(self.sa_position, str) and self.sa_position not in SA_POSITIONS:
            raise ConfigError(f"sa_position must be one of {SA_POSITIONS} or a per-layer mask")
        if len(self.sa_mask) != self.num_layers:
            raise ConfigError("sa_position mask length must equal num_layers")
        if self.aggregation == "attention" and self.ta_layers < 1:
            raise ConfigError("attention aggregation needs ta_layers >= 1")

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def tokens_per_frame(self) -> int:
        return self.num_patches + 1

    @property
    def sa_mask(self) -> tuple[bool, ...]:
        L = self.num_layers
        pos = self.sa_position
        if not isinstance(pos, str):
            return tuple(pos)
        if pos == "all":
            return (True,) * L
        if pos == "none":
            return (False,) * L
        if pos == "first_half":
            return tuple(i < L // 2 for i in range(L))
        if pos == "second_half":
            return tuple(i >= L - L // 2 for i in range(L))
        return tuple(i % 2 == 1 for i in range(L))  # "odd": 0-based odd indices

    def layer_variant(self, i: int) -> AttentionVariant:
        if self.sa_mask[i]:
            return self.variant
        return AttentionVariant(SPATIAL)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.to_dict()
        if not isinstance(self.sa_position, str):
            d["sa_position"] = list(self.sa_position)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**d)

    def with_variant(self, variant: AttentionVariant, **kw) -> "ModelConfig":
        return replace(self, variant=variant, **kw)


PRESETS: dict[str, dict] = {
    # structurally ViT-like but small enough for finite-difference checks
    "desk": dict(num_layers=4, num_heads=4, embed_dim=64, head_dim=16, patch_size=8,
                 num_frames=8, image_size=32, num_classes=2),
    "tiny": dict(num_layers=2, num_heads=2, embed_dim=16, head_dim=8, patch_size=8,
                 num_frames=2, image_size=16, num_classes=2),
    "vitb16": dict(num_layers=12, num_heads=12, embed_dim=768, head_dim=64, patch_size=16,
                   num_frames=8, image_size=224, num_classes=400),
    "vitb32": dict(num_layers=12, num_heads=12, embed_dim=768, head_dim=64, patch_size=32,
                   num_frames=8, image_size=224, num_classes=174),
    "vitl32": dict(num_layers=24, num_heads=16, embed_dim=1024, head_dim=64, patch_size=32,
                   num_frames=8, image_size=224, num_classes=174),
}


def preset(name: str, **overrides) -> ModelConfig:
    try:
        base = dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    base.update(overrides)
    return ModelConfig(**base)


# ---------------------------------------------------------------------------
# parameters

def _init_block(params: dict, prefix: str, d: int, h: int, dh: int, hidden: int, rng: Rng, std: float):
    params[f"{prefix}.ln1.g"] = Tensor(np.ones(d), requires_grad=True)
    params[f"{prefix}.ln1.b"] = Tensor(np.zeros(d), requires_grad=True)
    for name, t in AttentionParams.init(d, h, dh, rng, std).tensors().items():
        params[f"{prefix}.attn.{name}"] = t
    params[f"{prefix}.ln2.g"] = Tensor(np.ones(d), requires_grad=True)
    params[f"{prefix}.ln2.b"] = Tensor(np.zeros(d), requires_grad=True)
    params[f"{prefix}.mlp.w1"] = Tensor(rng.normal((d, hidden), std=std), requires_grad=True)
    params[f"{prefix}.mlp.b1"] = Tensor(np.zeros(hidden), requires_grad=True)
    params[f"{prefix}.mlp.w2"] = Tensor(rng.normal((hidden, d), std=std), requires_grad=True)
    params[f"{prefix}.mlp.b2"] = Tensor(np.zeros(d), requires_grad=True)


def init_params(config: ModelConfig, seed: int | Rng = 0) -> dict[str, Tensor]:
    rng = seed if isinstance(seed, Rng) else Rng(seed)
    c, std = config, config.init_std
    d, h, dh, hidden = c.embed_dim, c.num_heads, c.head_dim, c.mlp_ratio * c.embed_dim
    emb = EmbeddingParams.init(c.channels * c.patch_size ** 2, c.num_patches, c.num_frames, d, rng, std)
    params = {"embed.E": emb.E, "embed.pos_space": emb.pos_space,
              "embed.pos_time": emb.pos_time, "embed.cls": emb.cls}
    for i in range(c.num_layers):
        _init_block(params, f"layer{i}", d, h, dh, hidden, rng, std)
        if c.sa_mask[i] and c.variant.kind == FACTORIZED:
            for name, t in AttentionParams.init(d, h, dh, rng, std).tensors().items():
                params[f"layer{i}.attn_time.{name}"] = t
    if c.variant.kind == TEMPORAL_CLS:
        for j in range(c.temporal_layers):
            _init_block(params, f"temporal{j}", d, h, dh, hidden, rng, std)
    if c.aggregation == "attention":
        params["ta.offset"] = Tensor(np.zeros(d), requires_grad=True)
        for j in range(c.ta_layers):
            _init_block(params, f"ta{j}", d, h, dh, hidden, rng, std)
    params["norm.g"] = Tensor(np.ones(d), requires_grad=True)
    params["norm.b"] = Tensor(np.zeros(d), requires_grad=True)
    params["head.w"] = Tensor(rng.normal((d, c.num_classes), std=std), requires_grad=True)
    params["head.b"] = Tensor(np.zeros(c.num_classes), requires_grad=True)
    for name, t in params.items():
        t.name = name
    return params


def trainable(config: ModelConfig, params: dict[str, Tensor]) -> dict[str, Tensor]:
    if config.learn_temporal_pos:
        return dict(params)
    return {k: v for k, v in params.items() if k != "embed.pos_time"}


def attention_params(params: dict, prefix: str, num_heads: int) -> AttentionParams:
    return AttentionParams(params[f"{prefix}.wq"], params[f"{prefix}.wk"], params[f"{prefix}.wv"],
                           params[f"{prefix}.wo"], params[f"{prefix}.bo"], num_heads)


def embedding_params(params: dict) -> EmbeddingParams:
    return EmbeddingParams(params["embed.E"], params["embed.pos_space"],
                           params["embed.pos_time"], params["embed.cls"])


def save_params(params: dict[str, Tensor], path) -> None:
    """Flat little-endian float64 blob plus ``<path>.json`` name/shape/offset manifest."""
    path = Path(path)
    manifest, offset = [], 0
    with open(path, "wb") as fh:
        for name, t in params.items():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
            manifest.append({"name": name, "shape": list(t.shape), "offset": offset})
            offset += t.data.size
    Path(f"{path}.json").write_text(json.dumps({"dtype": "<f8", "tensors": manifest}, indent=1))


def load_params(path) -> dict[str, Tensor]:
    path = Path(path)
    manifest = json.loads(Path(f"{path}.json").read_text())
    blob = np.frombuffer(path.read_bytes(), dtype=manifest.get("dtype", "<f8"))
    params = {}
    for entry in manifest["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        data = blob[entry["offset"]:entry["offset"] + n].astype(np.float64).reshape(entry["shape"])
        params[entry["name"]] = Tensor(data, requires_grad=True, name=entry["name"])
    return params


# ---------------------------------------------------------------------------
# forward

def mlp(x: Tensor, params: dict, prefix: str) -> Tensor:
    with mac_scope("mlp"):
        hdn = gelu(add(matmul(x, params[f"{prefix}.w1"]), params[f"{prefix}.b1"]))
        return add(matmul(hdn, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])


def transformer_layer(z: Tensor, params: dict, prefix: str, config: ModelConfig,
                      variant: AttentionVariant, *, boundary: str = "zero",
                      weights: list | None = None) -> Tensor:
    """Pre-norm block: ``y = z + MSA(LN(z))``, ``out = y + MLP(LN(y))``."""
    p = attention_params(params, f"{prefix}.attn", config.num_heads)
    p_time = None
    if variant.kind == FACTORIZED:
        p_time = attention_params(params, f"{prefix}.attn_time", config.num_heads)
    x = layer_norm(z, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    y = add(z, apply_attention(x, variant, p, p_time, boundary=boundary, weights=weights))
    return add(y, mlp(layer_norm(y, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"]), params, f"{prefix}.mlp"))


def run_layers(grid: Tensor, config: ModelConfig, params: dict, *, layers: int | None = None,
               boundary: str = "zero") -> Tensor:
    n = config.num_layers if layers is None else layers
    for i in range(n):
        with mac_scope(f"layer{i}"):
            grid = transformer_layer(grid, params, f"layer{i}", config, config.layer_variant(i),
                                     boundary=boundary)
    return grid


def tokenize(clips, config: ModelConfig, params: dict) -> Tensor:
    clips = check_clips(clips, num_frames=config.num_frames, image_size=config.image_size,
                        patch_size=config.patch_size, channels=config.channels)
    return embed(patchify(clips, config.patch_size), embedding_params(params))


def class_tokens(grid: Tensor) -> Tensor:
    """``[..., T, N, d] -> [..., T, d]`` (slot 0 of every frame)."""
    return getitem(grid, (Ellipsis, 0, slice(None)))


def temporal_average_aggregate(cls_tokens: Tensor) -> Tensor:
    """Mean over frames; summed in sorted order so frame order cannot change a single bit."""
    return sorted_mean(cls_tokens, axis=cls_tokens.ndim - 2)


def temporal_attention_aggregate(cls_tokens: Tensor, params: dict, config: ModelConfig,
                                 prefix: str = "ta", weights: list | None = None) -> Tensor:
    """A single aggregation query attends the T class tokens through ``ta_layers`` blocks.

    The query starts as the frame mean of the class tokens plus a learned
    offset. Keys and values come from the class tokens only, so the cost is
    linear in T.
    """
    *lead, T, d = cls_tokens.shape
    c = cls_tokens.reshape(-1, T, d)
    B = c.shape[0]
    h = config.num_heads
    z = add(sorted_mean(c, axis=1), params[f"{prefix}.offset"])  # [B, d]
    for j in range(config.ta_layers):
        pre = f"{prefix}{j}"
        p = attention_params(params, f"{pre}.attn", h)
        dh = p.head_dim
        g, b = params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"]
        zq = layer_norm(z, g, b).reshape(B, 1, d)
        ck = layer_norm(c, g, b)
        with mac_scope("qkv_proj"):
            q = matmul(zq, p.wq).reshape(B, 1, h, dh).transpose(0, 2, 1, 3)
            k = matmul(ck, p.wk).reshape(B, T, h, dh).transpose(0, 2, 1, 3)
            v = matmul(ck, p.wv).reshape(B, T, h, dh).transpose(0, 2, 1, 3)
        y = attend(q, k, v, weights).transpose(0, 2, 1, 3).reshape(B, 1, h * dh)
        with mac_scope("head_proj"):
            y = add(matmul(y, p.wo), p.bo).reshape(B, d)
        z = add(z, y)
        z = add(z, mlp(layer_norm(z, params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"]), params, f"{pre}.mlp"))
    return z.reshape(*lead, d)


def aggregate(cls_tokens: Tensor, params: dict, config: ModelConfig) -> Tensor:
    with mac_scope("aggregation"):
        if config.variant.kind == TEMPORAL_CLS:
            for j in range(config.temporal_layers):
                pre = f"temporal{j}"
                p = attention_params(params, f"{pre}.attn", config.num_heads)
                x = layer_norm(cls_tokens, params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"])
                cls_tokens = add(cls_tokens, temporal_class_attention(x, p))
                x = layer_norm(cls_tokens, params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"])
                cls_tokens = add(cls_tokens, mlp(x, params, f"{pre}.mlp"))
        if config.aggregation == "average":
            return temporal_average_aggregate(cls_tokens)
        return temporal_attention_aggregate(cls_tokens, params, config)


def forward_features(clips, config: ModelConfig, params: dict, *, boundary: str = "zero") -> Tensor:
    grid = run_layers(tokenize(clips, config, params), config, params, boundary=boundary)
    feat = aggregate(class_tokens(grid), params, config)
    return layer_norm(feat, params["norm.g"], params["norm.b"])


def forward(clips, config: ModelConfig, params: dict, *, boundary: str = "zero") -> Tensor:
    """Logits ``[n, num_classes]`` for clips ``[n, T, H, W, C]`` (or one clip ``[T, H, W, C]``)."""
    feat = forward_features(clips, config, params, boundary=boundary)
    with mac_scope("classifier"):
        return add(matmul(feat.reshape(-1, config.embed_dim), params["head.w"]), params["head.b"])


def loss_fn(clips, labels, config: ModelConfig, params: dict) -> Tensor:
    return cross_entropy(forward(clips, config, params), labels)


class TrainingDiverged(RuntimeError):
    pass


def train_step(clips, labels, config: ModelConfig, params: dict, velocity: dict,
               lr: float, momentum: float = 0.9, clip_norm: float | None = 1.0) -> float:
    """One SGD-with-momentum step on softmax cross-entropy; returns the pre-update loss.

    ``velocity`` maps parameter names to momentum buffers and is updated in
    place. The gradient is rescaled to global L2 norm ``clip_norm`` when it is
    larger (``None`` disables clipping); without this, SGD on the attention
    stack hits rare gradient spikes that knock it back to chance.
    """
    train = trainable(config, params)
    for t in params.values():
        t.grad = None
    try:
        loss = loss_fn(clips, labels, config, params)
    except NonFiniteError as exc:
        raise TrainingDiverged(f"forward pass diverged: {exc}") from exc
    loss.backward()
    grads = {name: t.grad for name, t in train.items() if t.grad is not None}
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient for {name}")
    scale = 1.0
    if clip_norm is not None:
        norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
        if norm > clip_norm:
            scale = clip_norm / norm
    for name, g in grads.items():
        g = g * scale if scale != 1.0 else g
        buf = velocity.get(name)
        buf = g.copy() if buf is None else momentum * buf + g
        velocity[name] = buf
        if lr:
            train[name].data -= lr * buf
    for t in params.values():
        t.grad = None
    return float(loss.data)
