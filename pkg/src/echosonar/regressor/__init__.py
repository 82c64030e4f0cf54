"""CNN + LSTM joint regressor with analytic gradients and curriculum training."""
from .checkpoint import Checkpoint, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .data import WindowSet, concat, split_holdout
from .metrics import MetricsReport, mae, mse, report
from .model import (
    BUFFER_ORDER,
    PARAM_ORDER,
    ModelConfig,
    ModelParams,
    backward,
    fit_target_stats,
    forward,
    gradients,
    init_params,
    loss_and_gradients,
    loss_mse,
    scale_input,
)
from .train import Adam, evaluate, initial_params, predict, train_curriculum, train_stage

__all__ = [
    "Checkpoint", "decode_checkpoint", "encode_checkpoint", "load_checkpoint", "save_checkpoint",
    "WindowSet", "concat", "split_holdout", "MetricsReport", "mae", "mse", "report",
    "BUFFER_ORDER", "PARAM_ORDER", "ModelConfig", "ModelParams", "backward", "fit_target_stats",
    "forward", "gradients", "init_params", "loss_and_gradients", "loss_mse", "scale_input",
    "Adam", "evaluate", "initial_params", "predict", "train_curriculum", "train_stage",
]
