"""DDPM training: noise-prediction loss, AdamW, and the training loop."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import NumericalDivergence
from ..seeding import rng_for
from .autodiff import backward, mse, constant, parameter
from .conditioning import ConditioningVector, conditioning_from_descriptors
from .denoiser import DenoiserParams, denoiser_forward, new_denoiser
from .schedule import NoiseSchedule, q_sample

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    batch_size: int = 4
    steps: int = 2000
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    conditioning_mode: str = "visual+depth+geometry"
    sampler_steps: int = 250
    width: float = 0.25
    crop_frames: int = 32

    def __post_init__(self):
        if min(self.batch_size, self.steps, self.crop_frames) < 1:
            raise ValueError("hyperparameters must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def training_loss(
    model: DenoiserParams,
    x0: np.ndarray,
    cond: ConditioningVector,
    rng: np.random.Generator,
    t: int | None = None,
):
    """One loss draw: sample t and noise, return (loss, gradients dict).

    Gradients come from reverse-mode differentiation through the denoiser.
    """
    schedule = model.schedule
    if t is None:
        t = int(rng.integers(1, schedule.steps + 1))
    noise = rng.standard_normal(np.asarray(x0).shape)
    x_t = q_sample(x0, t, noise, schedule)
    params_t = {k: parameter(v) for k, v in model.params.items()}
    pred = denoiser_forward(model, x_t, t, cond, params_t=params_t)
    loss = mse(pred, constant(noise))
    value = float(loss.value)
    if not math.isfinite(value):
        raise NumericalDivergence(f"non-finite loss at t={t}")
    backward(loss)
    grads = {
        k: (p.grad if p.grad is not None else np.zeros_like(p.value))
        for k, p in params_t.items()
    }
    return value, grads


class AdamW:
    """Adaptive moment estimation with decoupled weight decay."""

    def __init__(self, param_names, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-4):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: None for k in param_names}
        self.v = {k: None for k in param_names}

    def reset(self):
        self.step_count = 0
        for k in self.m:
            self.m[k] = None
            self.v[k] = None

    def step(self, params: dict, grads: dict):
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for k, g in grads.items():
            if self.m[k] is None:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / b1c
            v_hat = self.v[k] / b2c
            params[k] = params[k] - self.lr * (
                m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * params[k]
            )


@dataclass
class TrainItem:
    """One training pair: standardized latent plus its raw conditioning."""

    latent: np.ndarray  # (4, F, B)
    descriptors: object  # AcousticDescriptors

    @property
    def frames(self) -> int:
        return self.latent.shape[1]


def _crop(item: TrainItem, cfg: TrainConfig, mode: str, rng: np.random.Generator):
    frames = item.frames
    crop = min(cfg.crop_frames, frames)
    crop -= crop % 8  # the U-net pools three times
    crop = max(crop, 8)
    if frames <= crop:
        start = 0
        crop = min(crop, frames)
    else:
        start = int(rng.integers(0, frames - crop + 1))
    x0 = item.latent[:, start : start + crop, :]
    cond = conditioning_from_descriptors(
        item.descriptors, x0.shape[1], mode, frame_offset=start
    )
    return x0, cond


def train(dataset, cfg: TrainConfig, log_path=None, model: DenoiserParams | None = None):
    """Fixed-step optimization; returns (model, list of log records).

    A non-finite loss triggers one retry with halved learning rate from the
    last parameters; a second divergence aborts.
    """
    if not dataset:
        raise ValueError("training dataset must be non-empty")
    if model is None:
        model = new_denoiser(
            width=cfg.width,
            seed=rng_for(cfg.seed, "init").integers(2**31),
            conditioning_mode=cfg.conditioning_mode,
        )
    optimizer = AdamW(model.params.keys(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    records = []
    lr = cfg.learning_rate
    diverged_once = False
    step = 0
    while step < cfg.steps:
        t0 = time.monotonic()
        rng = rng_for(cfg.seed, f"train:step{step}")
        total_loss = 0.0
        grad_sum = None
        try:
            for b in range(cfg.batch_size):
                item = dataset[int(rng.integers(0, len(dataset)))]
                x0, cond = _crop(item, cfg, model.conditioning_mode, rng)
                value, grads = training_loss(model, x0, cond, rng)
                total_loss += value
                if grad_sum is None:
                    grad_sum = grads
                else:
                    for k in grad_sum:  # fixed-order reduction
                        grad_sum[k] += grads[k]
        except NumericalDivergence:
            if diverged_once:
                log.error("training diverged twice; aborting at step %d", step)
                raise
            diverged_once = True
            lr = lr / 2.0
            optimizer.lr = lr
            optimizer.reset()
            log.warning("non-finite loss at step %d; retrying with lr=%g", step, lr)
            continue
        for k in grad_sum:
            grad_sum[k] /= cfg.batch_size
        optimizer.step(model.params, grad_sum)
        mean_loss = total_loss / cfg.batch_size
        records.append(
            {
                "step": step,
                "loss": mean_loss,
                "lr": lr,
                "wall_ms": (time.monotonic() - t0) * 1000.0,
            }
        )
        step += 1
    if log_path is not None:
        write_training_log(log_path, records)
    return model, records


def write_training_log(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")
    os.replace(tmp, path)
