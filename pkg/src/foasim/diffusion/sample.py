"""Ancestral DDPM sampling with a uniform sub-sampled step grid."""

from __future__ import annotations

import numpy as np

from ..errors import NumericalDivergence, OutOfRange
from ..foa import ChannelStats
from ..seeding import rng_for
from .codec import LatentClip, N_BINS
from .conditioning import ConditioningVector
from .denoiser import DenoiserParams, predict_noise
from .schedule import NoiseSchedule

#: loose guard against runaway reverse iterates.
X0_CLAMP = 50.0


def step_grid(schedule: NoiseSchedule, steps: int) -> list[int]:
    """Descending timestep grid, uniform in t, always ending at 1."""
    if not 1 <= steps <= schedule.steps:
        raise OutOfRange(f"steps={steps} outside [1, {schedule.steps}]")
    grid = np.unique(np.round(np.linspace(1, schedule.steps, steps)).astype(int))
    return [int(t) for t in grid[::-1]]


def sample(
    model: DenoiserParams,
    cond: ConditioningVector,
    steps: int,
    seed: int,
    frames: int | None = None,
    sample_count: int | None = None,
    noise_prediction=None,
) -> LatentClip:
    """Reverse diffusion from pure noise; deterministic given the seed.

    ``noise_prediction(x, t)`` overrides the network (analytic oracles in
    tests); conditioning is injected at every denoiser call otherwise.
    """
    schedule = model.schedule
    frames = frames if frames is not None else cond.frames
    if cond.frames != frames:
        raise ValueError("conditioning frames must match requested latent frames")
    rng = rng_for(seed, "sample")
    x = rng.standard_normal((4, frames, N_BINS))
    grid = step_grid(schedule, steps)
    for i, t in enumerate(grid):
        eps = (
            noise_prediction(x, t)
            if noise_prediction is not None
            else predict_noise(model, x, t, cond)
        )
        abar_t = schedule.alpha_bar(t)
        x0_hat = (x - np.sqrt(1.0 - abar_t) * eps) / np.sqrt(abar_t)
        x0_hat = np.clip(x0_hat, -X0_CLAMP, X0_CLAMP)
        if not np.all(np.isfinite(x0_hat)):
            raise NumericalDivergence(f"non-finite reverse state at t={t}")
        if i + 1 == len(grid):
            x = x0_hat
            break
        t_prev = grid[i + 1]
        abar_prev = schedule.alpha_bar(t_prev)
        var = (1.0 - abar_prev) / (1.0 - abar_t) * (1.0 - abar_t / abar_prev)
        var = max(var, 0.0)
        mean = np.sqrt(abar_prev) * x0_hat + np.sqrt(
            max(1.0 - abar_prev - var, 0.0)
        ) * eps
        x = mean + np.sqrt(var) * rng.standard_normal(x.shape)
    count = sample_count if sample_count is not None else frames * N_BINS
    return LatentClip(
        tensor=x,
        sample_count=count,
        sample_rate=16000,
        stats=model.latent_stats,
    )
