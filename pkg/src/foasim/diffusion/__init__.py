"""Conditional DDPM over the invertible latent FOA domain."""

from .checkpoint import load_checkpoint, save_checkpoint
from .codec import (
    LatentClip,
    identity_stats,
    latent_decode,
    latent_encode,
    latent_stats_for_corpus,
)
from .conditioning import (
    CONDITIONING_MODES,
    ConditioningVector,
    conditioning_from_descriptors,
)
from .denoiser import (
    DenoiserConfig,
    DenoiserParams,
    denoiser_forward,
    new_denoiser,
    predict_noise,
    saliency_gate,
)
from .sample import sample, step_grid
from .schedule import NoiseSchedule, q_sample
from .train import AdamW, TrainConfig, TrainItem, train, training_loss, write_training_log

__all__ = [
    "AdamW",
    "CONDITIONING_MODES",
    "ConditioningVector",
    "DenoiserConfig",
    "DenoiserParams",
    "LatentClip",
    "NoiseSchedule",
    "TrainConfig",
    "TrainItem",
    "conditioning_from_descriptors",
    "denoiser_forward",
    "identity_stats",
    "latent_decode",
    "latent_encode",
    "latent_stats_for_corpus",
    "load_checkpoint",
    "new_denoiser",
    "predict_noise",
    "q_sample",
    "saliency_gate",
    "sample",
    "save_checkpoint",
    "step_grid",
    "train",
    "training_loss",
    "write_training_log",
]
