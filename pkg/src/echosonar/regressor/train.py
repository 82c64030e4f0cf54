"""Adam training with curriculum stages, divergence guard and evaluation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import DivergenceError, InputError
from . import metrics
from .checkpoint import Checkpoint, save_checkpoint
from .data import WindowSet, concat
from .model import ModelConfig, ModelParams, fit_target_stats, forward, init_params, loss_and_gradients

log = logging.getLogger(__name__)

DIVERGENCE_LOSS = 1e8
EVAL_BATCH = 64


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = math.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            params[k] -= (self.lr * corr) * m / (np.sqrt(v) + self.eps)


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale all gradients together so their global L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        s = max_norm / norm
        for g in grads.values():
            g *= s
    return norm


def batch_schedule(n: int, batch_size: int, steps: int, rng: np.random.Generator):
    """Yield ``steps`` index batches from back-to-back seeded permutations."""
    if n == 0:
        raise InputError("cannot train on an empty dataset")
    bs = min(batch_size, n)
    buf = np.empty(0, dtype=np.int64)
    for _ in range(steps):
        while len(buf) < bs:
            buf = np.concatenate([buf, rng.permutation(n)])
        yield np.sort(buf[:bs])
        buf = buf[bs:]


def stage_steps(config: ModelConfig, n: int) -> int:
    if config.steps_per_stage > 0:
        return int(config.steps_per_stage)
    return max(1, math.ceil(config.epochs_per_stage * n / config.batch_size))


def train_stage(params: ModelParams, data: WindowSet, steps: int, rng: np.random.Generator,
                stage: str = "", opt: Optional[Adam] = None,
                on_step: Optional[Callable[[int, float], None]] = None) -> list:
    """Minimise the batch MSE for ``steps`` Adam steps; returns the per-step losses."""
    cfg = params.config
    opt = opt or Adam(lr=cfg.learning_rate)
    losses = []
    for step, idx in enumerate(batch_schedule(len(data), cfg.batch_size, steps, rng)):
        x, y = data.batch(idx)
        loss, grads = loss_and_gradients(params, x, y.astype(params.dtype), train=True)
        if not math.isfinite(loss) or loss > DIVERGENCE_LOSS:
            raise DivergenceError(stage, step, loss)
        clip_gradients(grads, cfg.clip_norm)
        opt.step(params.params, grads)
        losses.append(loss)
        if on_step is not None:
            on_step(step, loss)
    return losses


def predict(params: ModelParams, data: WindowSet, batch: int = EVAL_BATCH) -> np.ndarray:
    out = np.empty((len(data), params.config.n_outputs))
    for s in range(0, len(data), batch):
        x, _ = data.batch(np.arange(s, min(s + batch, len(data))))
        out[s: s + len(x)] = forward(params, x, train=False)
    return out


def evaluate(model, data: WindowSet) -> metrics.MetricsReport:
    """Metrics of a checkpoint (or bare parameters) on labelled windows."""
    if len(data) == 0:
        raise InputError("cannot evaluate an empty dataset")
    params = model.params if isinstance(model, Checkpoint) else model
    return metrics.report(predict(params, data), data.labels)


def initial_params(config: ModelConfig, train_labels: np.ndarray) -> ModelParams:
    """Seeded initialisation with the output de-standardisation fitted to ``train_labels``."""
    params = init_params(config)
    fit_target_stats(params, train_labels)
    return params


def train_curriculum(stages: Sequence, config: ModelConfig, *, val: Optional[WindowSet] = None,
                     init: Optional[ModelParams] = None, checkpoint_dir=None,
                     steps: Optional[Sequence[int]] = None, progress: Optional[Callable] = None) -> list:
    """Train stage by stage, each stage starting from its predecessor's parameters.

    ``stages`` is ``[(tag, WindowSet), ...]`` in curriculum order; a single
    stage is plain training. Returns one :class:`Checkpoint` per stage; the
    last one is the final model. With ``checkpoint_dir`` each checkpoint is
    also written to ``<dir>/<index>_<tag>.bvck``.
    """
    if not stages:
        raise InputError("no training stages given")
    if init is None:
        init = initial_params(config, concat([d for _, d in stages]).labels)
    params = init.copy()
    rng = np.random.default_rng(config.seed + 1)
    history = []
    out = []
    for k, (tag, data) in enumerate(stages):
        n_steps = steps[k] if steps is not None else stage_steps(config, len(data))
        losses = train_stage(params, data, n_steps, rng, stage=tag,
                             on_step=(lambda s, l, tag=tag: progress(tag, s, l)) if progress else None)
        entry = {"stage": tag, "steps": int(n_steps), "n_windows": len(data),
                 "train_loss_first": losses[0], "train_loss_last": float(np.mean(losses[-10:]))}
        if val is not None and len(val):
            rep = evaluate(params, val)
            entry.update({"val_mse_mm2": rep.mse_mm2, "val_mae_mm": rep.mae_mm})
        history.append(entry)
        log.info("stage %s: %s", tag, entry)
        ck = Checkpoint(params.copy(), tag, [dict(h) for h in history])
        if checkpoint_dir is not None:
            save_checkpoint(Path(checkpoint_dir) / f"{k:02d}_{tag}.bvck", ck)
        out.append(ck)
    return out
