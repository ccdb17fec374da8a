"""Descriptor featurization for the conditional generator.

Raw 10 Hz descriptor frames become fixed-size feature rows grouped into
three blocks (detection, depth/occlusion, geometry/reverberation) so the
conditioning modes of the ablation axis can mask them independently.  Rows
are nearest-frame upsampled to the latent frame grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import math
import numpy as np

from ..acoustics import AcousticDescriptors
from .codec import HOP

CONDITIONING_MODES = ("none", "visual", "visual+depth", "visual+depth+geometry")

MAX_SOURCES = 4

VISUAL_DIM = 4  # activity-weighted mean direction (3) + total activity (1)
DEPTH_DIM = 9  # mean distance, mean 1/d, occlusion transmission bands (7)
GEOMETRY_DIM = 27  # reflections (11) + T60 (7) + volume/area/absorption (9)
RAW_FEATURE_DIM = VISUAL_DIM + DEPTH_DIM + GEOMETRY_DIM


@dataclass(frozen=True)
class ConditioningVector:
    """Per-latent-frame conditioning features and per-source salience."""

    features: np.ndarray  # (frames, RAW_FEATURE_DIM)
    saliency: np.ndarray  # (frames, MAX_SOURCES)
    mode: str

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        s = np.asarray(self.saliency, dtype=np.float64)
        if f.ndim != 2 or f.shape[1] != RAW_FEATURE_DIM:
            raise ValueError(f"features must be (frames, {RAW_FEATURE_DIM})")
        if s.shape != (f.shape[0], MAX_SOURCES):
            raise ValueError("saliency must be (frames, MAX_SOURCES)")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(s))):
            raise ValueError("conditioning values must be finite")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "saliency", s)

    @property
    def frames(self) -> int:
        return self.features.shape[0]


def _frame_features(frame, reverb, geometry) -> tuple[np.ndarray, np.ndarray]:
    visual = np.zeros(VISUAL_DIM)
    depth = np.zeros(DEPTH_DIM)
    geo = np.zeros(GEOMETRY_DIM)
    saliency = np.zeros(MAX_SOURCES)

    total_activity = 0.0
    mean_dir = np.zeros(3)
    mean_dist = 0.0
    mean_inv_dist = 0.0
    mean_trans = np.zeros(7)
    for i, s in enumerate(frame.sources):
        act = 1.0 if s.active else 0.0
        total_activity += act
        mean_dir += act * s.direction.unit_vector()
        mean_dist += s.distance
        mean_inv_dist += act / max(s.distance, 0.1)
        mean_trans += s.occlusion.transmission
        if i < MAX_SOURCES:
            saliency[i] = act / max(s.distance, 0.1) ** 2
    n_src = max(len(frame.sources), 1)
    visual[:3] = mean_dir / max(total_activity, 1.0)
    visual[3] = total_activity / MAX_SOURCES
    depth[0] = mean_dist / n_src / 10.0
    depth[1] = mean_inv_dist / n_src
    depth[2:9] = mean_trans / n_src

    if frame.reflections:
        weights = np.array([float(np.mean(r.band_gains)) for r in frame.reflections])
        total_w = float(weights.sum())
        dirs = np.stack([r.direction.unit_vector() for r in frame.reflections])
        delays = np.array([r.delay_s for r in frame.reflections])
        gains = np.stack([r.band_gains for r in frame.reflections])
        if total_w > 0:
            geo[:3] = (weights[:, None] * dirs).sum(axis=0) / total_w
        geo[3] = float(delays.mean()) * 10.0
        geo[4:11] = gains.mean(axis=0)
    geo[11:18] = np.log1p(reverb.t60)
    geo[18] = math.log1p(geometry.volume) / 5.0
    geo[19] = math.log1p(geometry.surface_area) / 5.0
    geo[20:27] = geometry.mean_absorption

    total_sal = saliency.sum()
    if total_sal > 0:
        saliency = saliency / total_sal
    return np.concatenate([visual, depth, geo]), saliency


def mode_mask(mode: str) -> np.ndarray:
    if mode not in CONDITIONING_MODES:
        raise ValueError(f"unknown conditioning mode {mode!r}")
    mask = np.zeros(RAW_FEATURE_DIM)
    if mode == "none":
        return mask
    mask[:VISUAL_DIM] = 1.0
    if mode == "visual":
        return mask
    mask[VISUAL_DIM : VISUAL_DIM + DEPTH_DIM] = 1.0
    if mode == "visual+depth":
        return mask
    mask[VISUAL_DIM + DEPTH_DIM :] = 1.0
    return mask


def conditioning_from_descriptors(
    descriptors: AcousticDescriptors,
    latent_frames: int,
    mode: str,
    sample_rate: int = 16000,
    frame_offset: int = 0,
) -> ConditioningVector:
    """Featurize descriptors and align them to ``latent_frames`` rows.

    ``frame_offset`` selects a crop inside the full clip (latent frame
    units) so training crops stay aligned with their conditioning.
    """
    mask = mode_mask(mode)
    rows = []
    sals = []
    for frame in descriptors.frames:
        feats, sal = _frame_features(frame, descriptors.reverb, descriptors.geometry)
        rows.append(feats)
        sals.append(sal)
    rows = np.stack(rows)
    sals = np.stack(sals)

    out_feats = np.zeros((latent_frames, RAW_FEATURE_DIM))
    out_sal = np.zeros((latent_frames, MAX_SOURCES))
    n_desc = rows.shape[0]
    for f in range(latent_frames):
        t_center = ((f + frame_offset) * HOP + HOP / 2) / sample_rate
        idx = min(max(int(t_center * descriptors.frame_rate), 0), n_desc - 1)
        out_feats[f] = rows[idx] * mask
        out_sal[f] = sals[idx] if mode != "none" else 0.0
    return ConditioningVector(features=out_feats, saliency=out_sal, mode=mode)
