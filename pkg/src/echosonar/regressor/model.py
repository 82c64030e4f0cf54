"""CNN + LSTM joint regressor: configuration, parameters, forward and backward passes.

Input windows ``(B, C, cells, slices)`` are max-scaled per channel, split
along the slice axis into contiguous folds, passed through a shared
conv-BN-ReLU-pool backbone, fed in temporal order to an LSTM, and the last
hidden state goes through a linear head to 63 coordinates (mm).

The head output is de-standardised by two non-trainable buffers,
``target.mean`` and ``target.scale`` (identity by default), so that the
optimiser works on unit-scale targets while the loss stays in mm².
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, NumericError, ShapeError
from . import layers

N_OUTPUTS = 63


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 7
    n_cells: int = 256
    n_slices: int = 50
    n_folds: int = 10
    conv_channels: tuple = (16, 32)
    kernel_size: int = 3
    pool_size: int = 2
    hidden: int = 128
    n_outputs: int = N_OUTPUTS
    bn_momentum: float = 0.1
    seed: int = 0
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs_per_stage: float = 1.0
    steps_per_stage: int = 0  # > 0 overrides epochs_per_stage
    clip_norm: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        self.validate()

    def validate(self) -> None:
        if self.n_outputs != N_OUTPUTS:
            raise ConfigError(f"n_outputs must be {N_OUTPUTS} (21 joints x 3), got {self.n_outputs}")
        if self.n_folds < 1 or self.n_slices % self.n_folds:
            raise ConfigError(f"n_slices={self.n_slices} must split evenly into n_folds={self.n_folds}")
        if self.kernel_size != 3 or self.pool_size != 2:
            raise ConfigError("only 3x3 convolutions with 2x2 pooling are implemented")
        if len(self.conv_channels) != 2 or min(self.conv_channels) < 1:
            raise ConfigError(f"conv_channels must be two positive widths, got {self.conv_channels}")
        h, w = self.feature_hw
        if h < 1 or w < 1:
            raise ConfigError(f"input {self.n_cells}x{self.fold_len} collapses under two 2x2 poolings")
        for name in ("hidden", "batch_size", "in_channels", "n_cells"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 < self.bn_momentum <= 1:
            raise ConfigError("bn_momentum must lie in (0, 1]")

    @property
    def fold_len(self) -> int:
        return self.n_slices // self.n_folds

    @property
    def feature_hw(self) -> tuple:
        return (self.n_cells // 2) // 2, (self.fold_len // 2) // 2

    @property
    def embed_dim(self) -> int:
        h, w = self.feature_hw
        return self.conv_channels[1] * h * w

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


PARAM_ORDER = (
    "conv1.w", "conv1.b", "bn1.gamma", "bn1.beta",
    "conv2.w", "conv2.b", "bn2.gamma", "bn2.beta",
    "lstm.wx", "lstm.wh", "lstm.b", "head.w", "head.b",
)
BUFFER_ORDER = ("bn1.mean", "bn1.var", "bn2.mean", "bn2.var", "target.mean", "target.scale")


@dataclass
class ModelParams:
    """Trainable tensors plus non-trainable buffers, keyed by dotted names."""

    params: dict
    buffers: dict
    config: ModelConfig = field(default_factory=ModelConfig)

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.params.items()},
                           {k: v.copy() for k, v in self.buffers.items()}, self.config)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams({k: v.astype(dtype) for k, v in self.params.items()},
                           {k: v.astype(dtype) for k, v in self.buffers.items()}, self.config)

    @property
    def dtype(self):
        return self.params["head.w"].dtype

    def check_finite(self) -> None:
        for k, v in {**self.params, **self.buffers}.items():
            if not np.all(np.isfinite(v)):
                raise NumericError(f"parameter {k} holds non-finite values")

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


def init_params(config: ModelConfig, dtype=np.float32) -> ModelParams:
    """He-normal convolutions, uniform LSTM/head weights, forget-gate bias 1."""
    rng = np.random.default_rng(config.seed)
    c0, (c1, c2), H, D = config.in_channels, config.conv_channels, config.hidden, config.embed_dim
    lim_l = 1.0 / np.sqrt(H)
    p = {
        "conv1.w": rng.normal(0, np.sqrt(2.0 / (9 * c0)), (c1, 9 * c0)),
        "conv1.b": np.zeros(c1),
        "bn1.gamma": np.ones(c1),
        "bn1.beta": np.zeros(c1),
        "conv2.w": rng.normal(0, np.sqrt(2.0 / (9 * c1)), (c2, 9 * c1)),
        "conv2.b": np.zeros(c2),
        "bn2.gamma": np.ones(c2),
        "bn2.beta": np.zeros(c2),
        "lstm.wx": rng.uniform(-1, 1, (D, 4 * H)) / np.sqrt(D),
        "lstm.wh": rng.uniform(-lim_l, lim_l, (H, 4 * H)),
        "lstm.b": np.zeros(4 * H),
        "head.w": rng.uniform(-lim_l, lim_l, (config.n_outputs, H)),
        "head.b": np.zeros(config.n_outputs),
    }
    p["lstm.b"][H:2 * H] = 1.0
    bufs = {
        "bn1.mean": np.zeros(c1), "bn1.var": np.ones(c1),
        "bn2.mean": np.zeros(c2), "bn2.var": np.ones(c2),
        "target.mean": np.zeros(config.n_outputs), "target.scale": np.ones(config.n_outputs),
    }
    return ModelParams({k: p[k].astype(dtype) for k in PARAM_ORDER},
                       {k: bufs[k].astype(dtype) for k in BUFFER_ORDER}, config)


def fit_target_stats(params: ModelParams, labels_mm: np.ndarray, min_scale_mm: float = 1.0) -> None:
    """Set the de-standardisation buffers from training labels ``(n, 63)``."""
    y = np.asarray(labels_mm, dtype=np.float64).reshape(-1, params.config.n_outputs)
    params.buffers["target.mean"] = y.mean(axis=0).astype(params.dtype)
    params.buffers["target.scale"] = np.maximum(y.std(axis=0), min_scale_mm).astype(params.dtype)


def scale_input(x: np.ndarray) -> np.ndarray:
    """Per-window, per-channel max scaling to [0, 1]; all-zero channels stay zero."""
    m = x.max(axis=(2, 3), keepdims=True)
    return np.divide(x, m, out=np.zeros_like(x), where=m > 0)


def _check(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite activation in layer {name}")
    return arr


def forward(params: ModelParams, x: np.ndarray, train: bool = False, return_cache: bool = False):
    """Predict joints (mm) for a batch ``(B, C, cells, slices)`` or one window ``(C, cells, slices)``."""
    cfg = params.config
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.shape[1:] != (cfg.in_channels, cfg.n_cells, cfg.n_slices):
        raise ShapeError(
            f"expected windows of shape ({cfg.in_channels}, {cfg.n_cells}, {cfg.n_slices}), got {x.shape[1:]}"
        )
    p, bufs = params.params, params.buffers
    x = scale_input(np.asarray(x, dtype=params.dtype))
    B, F, L = x.shape[0], cfg.n_folds, cfg.fold_len
    folds = x.reshape(B, cfg.in_channels, cfg.n_cells, F, L).transpose(0, 3, 1, 2, 4)
    folds = np.ascontiguousarray(folds.reshape(B * F, cfg.in_channels, cfg.n_cells, L))

    caches = {}
    a, caches["conv1"] = layers.conv3x3_forward(folds, p["conv1.w"], p["conv1.b"])
    a, caches["bn1"] = layers.batchnorm_forward(a, p["bn1.gamma"], p["bn1.beta"], bufs["bn1.mean"],
                                                bufs["bn1.var"], train, cfg.bn_momentum)
    a, caches["relu1"] = layers.relu_forward(_check("bn1", a))
    a, caches["pool1"] = layers.maxpool_forward(a)
    a, caches["conv2"] = layers.conv3x3_forward(a, p["conv2.w"], p["conv2.b"])
    a, caches["bn2"] = layers.batchnorm_forward(a, p["bn2.gamma"], p["bn2.beta"], bufs["bn2.mean"],
                                                bufs["bn2.var"], train, cfg.bn_momentum)
    a, caches["relu2"] = layers.relu_forward(_check("bn2", a))
    a, caches["pool2"] = layers.maxpool_forward(a)
    caches["pool2_shape"] = a.shape
    seq = a.reshape(B, F, -1)
    h, caches["lstm"] = layers.lstm_forward(seq, p["lstm.wx"], p["lstm.wh"], p["lstm.b"])
    z, caches["head"] = layers.linear_forward(_check("lstm", h), p["head.w"], p["head.b"])
    out = _check("head", bufs["target.mean"] + bufs["target.scale"] * z)
    if single:
        out = out[0]
    return (out, caches) if return_cache else out


def loss_mse(pred, label) -> float:
    """Mean squared coordinate error (mm²) over all entries."""
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(getattr(label, "joints", label), dtype=np.float64).reshape(pred.shape)
    return float(np.mean((pred - label) ** 2))


def backward(params: ModelParams, caches: dict, dout: np.ndarray) -> dict:
    """Gradients of every trainable tensor given ``d loss / d pred`` of shape ``(B, 63)``."""
    g = {}
    dz = dout * params.buffers["target.scale"]
    dh, g["head.w"], g["head.b"] = layers.linear_backward(dz, caches["head"])
    dseq, g["lstm.wx"], g["lstm.wh"], g["lstm.b"] = layers.lstm_backward(dh, caches["lstm"])
    da = dseq.reshape(caches["pool2_shape"])
    da = layers.maxpool_backward(da, caches["pool2"])
    da = layers.relu_backward(da, caches["relu2"])
    da, g["bn2.gamma"], g["bn2.beta"] = layers.batchnorm_backward(da, caches["bn2"])
    da, g["conv2.w"], g["conv2.b"] = layers.conv3x3_backward(da, caches["conv2"])
    da = layers.maxpool_backward(da, caches["pool1"])
    da = layers.relu_backward(da, caches["relu1"])
    da, g["bn1.gamma"], g["bn1.beta"] = layers.batchnorm_backward(da, caches["bn1"])
    _, g["conv1.w"], g["conv1.b"] = layers.conv3x3_backward(da, caches["conv1"], need_dx=False)
    for k, v in g.items():
        if not np.all(np.isfinite(v)):
            raise NumericError(f"non-finite gradient for {k}")
    return g


def loss_and_gradients(params: ModelParams, x: np.ndarray, y: np.ndarray, train: bool = True):
    """Mean MSE (mm²) over the batch and its gradient for every trainable tensor.

    In training mode batch-norm statistics come from the batch and the
    running buffers are updated; pass a copy of ``params`` to keep them.
    """
    if x.shape[0] == 0:
        raise ShapeError("gradients need a non-empty batch")
    pred, caches = forward(params, x, train=train, return_cache=True)
    y = np.asarray(y, dtype=pred.dtype).reshape(pred.shape)
    diff = pred - y
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grads = backward(params, caches, (2.0 / diff.size) * diff)
    return loss, grads


def gradients(params: ModelParams, x: np.ndarray, y: np.ndarray, train: bool = True) -> dict:
    return loss_and_gradients(params, x, y, train)[1]
