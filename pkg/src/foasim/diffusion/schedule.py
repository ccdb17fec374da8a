"""DDPM noise schedule and forward diffusion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import OutOfRange

DEFAULT_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    steps: int = DEFAULT_STEPS
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END
    betas: np.ndarray = field(init=False)
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.linspace(self.beta_start, self.beta_end, self.steps)
        if not (0.0 < betas[0] and betas[-1] < 1.0 and np.all(np.diff(betas) > 0)):
            raise ValueError("betas must increase strictly inside (0, 1)")
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        for arr in (betas, alphas, alpha_bars):
            arr.flags.writeable = False
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", alpha_bars)

    def alpha_bar(self, t: int) -> float:
        """Cumulative alpha at 1-based timestep t."""
        if not 1 <= t <= self.steps:
            raise OutOfRange(f"t={t} outside [1, {self.steps}]")
        return float(self.alpha_bars[t - 1])

    def beta(self, t: int) -> float:
        if not 1 <= t <= self.steps:
            raise OutOfRange(f"t={t} outside [1, {self.steps}]")
        return float(self.betas[t - 1])


def q_sample(x0: np.ndarray, t: int, noise: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Forward diffusion: sqrt(abar_t) x0 + sqrt(1 - abar_t) noise."""
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ValueError("x0 and noise must share a shape")
    abar = schedule.alpha_bar(t)
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * noise
