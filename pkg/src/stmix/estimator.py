"""scikit-learn compatible classifier wrapping the video transformer."""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_clips, check_labels
from .attention import AttentionVariant
from .model import PRESETS, ModelConfig, forward, init_params, load_params, save_params, train_step
from .rng import Rng
from .tensor import softmax_lastdim

log = logging.getLogger(__name__)


class SpaceTimeMixingClassifier(ClassifierMixin, BaseEstimator):
    """Video classifier over clips shaped ``[n, T, H, W, 3]``.

    Architecture fields left as ``None`` come from ``preset``. Attention is
    chosen by ``attention`` (any variant name) with its window ``t_w``,
    mixing ratio ``rho`` and mixing targets. Training is SGD with momentum
    and global gradient-norm clipping on minibatches drawn by a seeded shuffler.
    """

    def __init__(self, preset="desk", attention="space_time_mixing", t_w=1, rho=0.5,
                 mix_key=True, mix_value=True, mix_input=False, summary_token=False,
                 aggregation="attention", ta_layers=1, temporal_layers=1, sa_position="all",
                 num_layers=None, num_heads=None, embed_dim=None, head_dim=None,
                 patch_size=None, learn_temporal_pos=True, learning_rate=0.01, momentum=0.9,
                 clip_norm=1.0, max_steps=1000, batch_size=16, random_state=0, verbose=False):
        self.preset = preset
        self.attention = attention
        self.t_w = t_w
        self.rho = rho
        self.mix_key = mix_key
        self.mix_value = mix_value
        self.mix_input = mix_input
        self.summary_token = summary_token
        self.aggregation = aggregation
        self.ta_layers = ta_layers
        self.temporal_layers = temporal_layers
        self.sa_position = sa_position
        self.num_layers = num_layers
        self.num_heads = num_heads
        self.embed_dim = embed_dim
        self.head_dim = head_dim
        self.patch_size = patch_size
        self.learn_temporal_pos = learn_temporal_pos
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.max_steps = max_steps
        self.batch_size = batch_size
        self.random_state = random_state
        self.verbose = verbose

    def _build_config(self, X: np.ndarray, n_classes: int) -> ModelConfig:
        base = dict(PRESETS[self.preset])
        for key in ("num_layers", "num_heads", "embed_dim", "head_dim", "patch_size"):
            if getattr(self, key) is not None:
                base[key] = getattr(self, key)
        _, T, H, _, C = X.shape
        base.update(num_frames=T, image_size=H, channels=C, num_classes=n_classes)
        variant = AttentionVariant(self.attention, t_w=self.t_w, rho=self.rho, mix_key=self.mix_key,
                                   mix_value=self.mix_value, mix_input=self.mix_input,
                                   summary=self.summary_token)
        return ModelConfig(**base, variant=variant, sa_position=self.sa_position,
                           aggregation=self.aggregation, ta_layers=self.ta_layers,
                           temporal_layers=self.temporal_layers,
                           learn_temporal_pos=self.learn_temporal_pos)

    def fit(self, X, y):
        X = check_clips(X)
        y = check_labels(y, len(X))
        if X.shape[2] != X.shape[3]:
            raise ValueError("frames must be square")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        self.config_ = self._build_config(X, len(self.classes_))
        rng = Rng(self.random_state)
        self.params_ = init_params(self.config_, rng.fork())
        shuffle = rng.fork()
        velocity: dict = {}
        self.loss_curve_ = []
        order, pos = shuffle.permutation(len(X)), 0
        for step in range(self.max_steps):
            if pos + self.batch_size > len(order):
                order, pos = shuffle.permutation(len(X)), 0
            idx = order[pos:pos + self.batch_size]
            pos += self.batch_size
            loss = train_step(X[idx], y_idx[idx], self.config_, self.params_, velocity,
                              self.learning_rate, self.momentum, self.clip_norm)
            self.loss_curve_.append(loss)
            if self.verbose and step % 50 == 0:
                log.info("step %d loss %.4f", step, loss)
        self.n_steps_ = self.max_steps
        return self

    def decision_function(self, X, batch_size: int = 64) -> np.ndarray:
        """Raw logits ``[n, n_classes]``."""
        check_is_fitted(self, "params_")
        c = self.config_
        X = check_clips(X, num_frames=c.num_frames, image_size=c.image_size, patch_size=c.patch_size)
        out = [forward(X[i:i + batch_size], c, self.params_).data for i in range(0, len(X), batch_size)]
        return np.concatenate(out)

    def predict_proba(self, X) -> np.ndarray:
        return softmax_lastdim(self.decision_function(X)).data

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    def save(self, path):
        check_is_fitted(self, "params_")
        save_params(self.params_, path)

    def load(self, path, classes, config: ModelConfig):
        self.params_ = load_params(path)
        self.classes_ = np.asarray(classes)
        self.config_ = config
        return self
