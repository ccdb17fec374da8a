"""Convolutional U-shaped noise predictor with conditioning.

Structure: coordinate-augmented input convolution, four resolution levels
of FiLM-modulated residual blocks (timestep embedding plus per-frame
conditioning), nearest-neighbor upsampling with skip concatenation, and a
learned timestep-scaled input skip at the output.  The conditioning branch
is a small encoder whose output is multiplied by a sigmoid salience gate
before injection.

Width multiplier ``w`` scales every channel count, implementing the
minimal-to-maximal model-scale axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch
from ..foa import ChannelStats
from .autodiff import (
    Tensor,
    add,
    mean_over,
    avg_pool2,
    concat,
    conv2d1,
    conv2d3,
    constant,
    crop_rows,
    linear,
    mul,
    pad_rows,
    reshape,
    rms_norm,
    sigmoid,
    silu,
    transpose2d,
    upsample_nearest2,
)
from .conditioning import MAX_SOURCES, RAW_FEATURE_DIM, ConditioningVector
from .schedule import NoiseSchedule

WIDTH_CHOICES = (0.25, 0.5, 1.0, 2.0, 4.0)
N_LEVELS = 4
LATENT_CHANNELS = 4
COORD_CHANNELS = 2


@dataclass(frozen=True)
class DenoiserConfig:
    width: float = 0.25
    base_channels: int = 32

    @property
    def channels(self) -> tuple:
        c = max(4, int(round(self.base_channels * self.width)))
        return (c, 2 * c, 4 * c, 4 * c)

    @property
    def emb_dim(self) -> int:
        return 4 * self.channels[0]

    @property
    def cond_dim(self) -> int:
        return 2 * self.channels[0]


def timestep_embedding_table(steps: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding rows for t = 1..steps."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    t = np.arange(1, steps + 1)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(t), np.cos(t)], axis=1)


#: analytic schedule features appended to the timestep context; the clipped
#: inverse terms let O(1) weights express the large gains epsilon-prediction
#: needs near t=0.
ANALYTIC_T_DIM = 4
ANALYTIC_CLIP = 20.0


def analytic_t_features(schedule: NoiseSchedule) -> np.ndarray:
    abar = schedule.alpha_bars
    sqrt_ab = np.sqrt(abar)
    sqrt_1m = np.sqrt(1.0 - abar)
    inv = np.minimum(1.0 / sqrt_1m, ANALYTIC_CLIP)
    ratio = np.minimum(sqrt_ab / sqrt_1m, ANALYTIC_CLIP)
    return np.stack([sqrt_ab, sqrt_1m, inv, ratio], axis=1)


def _spec(config: DenoiserConfig) -> dict:
    """name -> (shape, init style) for every learnable array."""
    ch = config.channels
    emb = config.emb_dim
    cond = config.cond_dim
    spec = {
        "cond.enc.w": ((RAW_FEATURE_DIM, cond), "fan_in"),
        "cond.enc.b": ((cond,), "zero"),
        "cond.gate.w": ((cond + MAX_SOURCES, cond), "fan_in"),
        "cond.gate.b": ((cond,), "zero"),
        "temb.mlp1.w": ((emb, emb), "fan_in"),
        "temb.mlp1.b": ((emb,), "zero"),
        "temb.mlp2.w": ((emb, emb), "fan_in"),
        "temb.mlp2.b": ((emb,), "zero"),
        "in.conv.w": ((ch[0], (LATENT_CHANNELS + COORD_CHANNELS) * 9), "conv"),
        "in.conv.b": ((ch[0],), "zero"),
        "skip.w": ((emb + ANALYTIC_T_DIM, LATENT_CHANNELS), "zero"),
        "skip.b": ((LATENT_CHANNELS,), "zero"),
        "out.norm.g": ((ch[0], 1, 1), "one"),
        "out.conv.w": ((LATENT_CHANNELS, ch[0] * 9), "zero"),
        "out.conv.b": ((LATENT_CHANNELS,), "zero"),
    }

    def res_block(prefix: str, c_in: int, c_out: int):
        spec[f"{prefix}.conv1.w"] = ((c_out, c_in * 9), "conv")
        spec[f"{prefix}.conv1.b"] = ((c_out,), "zero")
        spec[f"{prefix}.film_t.w"] = ((emb + ANALYTIC_T_DIM, 2 * c_out), "zero")
        spec[f"{prefix}.film_t.b"] = ((2 * c_out,), "zero")
        spec[f"{prefix}.film_c.w"] = ((cond, 2 * c_out), "zero")
        spec[f"{prefix}.film_c.b"] = ((2 * c_out,), "zero")
        spec[f"{prefix}.norm.g"] = ((c_out, 1, 1), "one")
        spec[f"{prefix}.conv2.w"] = ((c_out, c_out * 9), "conv")
        spec[f"{prefix}.conv2.b"] = ((c_out,), "zero")
        if c_in != c_out:
            spec[f"{prefix}.proj.w"] = ((c_out, c_in), "fan_in")
            spec[f"{prefix}.proj.b"] = ((c_out,), "zero")

    for level in range(N_LEVELS):
        c_in = ch[level - 1] if level > 0 else ch[0]
        res_block(f"down{level}", c_in if level > 0 else ch[0], ch[level])
    res_block("mid", ch[-1], ch[-1])
    for level in range(N_LEVELS - 2, -1, -1):
        res_block(f"up{level}", ch[level + 1] + ch[level], ch[level])
    return spec


def init_params(config: DenoiserConfig, rng: np.random.Generator) -> dict:
    params = {}
    for name, (shape, style) in _spec(config).items():
        if style == "zero":
            params[name] = np.zeros(shape)
        elif style == "one":
            params[name] = np.ones(shape)
        elif style == "conv":
            fan_in = shape[1]
            params[name] = rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)
        else:  # fan_in linear
            fan_in = shape[0]
            params[name] = rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)
    return params


@dataclass
class DenoiserParams:
    config: DenoiserConfig
    params: dict
    schedule: NoiseSchedule
    conditioning_mode: str = "visual+depth+geometry"
    latent_stats: ChannelStats = field(
        default_factory=lambda: ChannelStats(mean=np.zeros(4), std=np.ones(4))
    )
    temb_table: np.ndarray | None = None
    analytic_table: np.ndarray | None = None

    def __post_init__(self):
        if self.temb_table is None:
            self.temb_table = timestep_embedding_table(self.schedule.steps, self.config.emb_dim)
        if self.analytic_table is None:
            self.analytic_table = analytic_t_features(self.schedule)

    @property
    def width(self) -> float:
        return self.config.width

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(
            config=self.config,
            params={k: v.copy() for k, v in self.params.items()},
            schedule=self.schedule,
            conditioning_mode=self.conditioning_mode,
            latent_stats=self.latent_stats,
            temb_table=self.temb_table,
            analytic_table=self.analytic_table,
        )


def new_denoiser(
    width: float = 0.25,
    seed: int = 0,
    schedule: NoiseSchedule | None = None,
    conditioning_mode: str = "visual+depth+geometry",
    latent_stats: ChannelStats | None = None,
) -> DenoiserParams:
    config = DenoiserConfig(width=width)
    rng = np.random.default_rng(seed)
    return DenoiserParams(
        config=config,
        params=init_params(config, rng),
        schedule=schedule or NoiseSchedule(),
        conditioning_mode=conditioning_mode,
        latent_stats=latent_stats or ChannelStats(mean=np.zeros(4), std=np.ones(4)),
    )


def saliency_gate(f_enc: np.ndarray, m_vis: np.ndarray, w_att: np.ndarray, b_att: np.ndarray):
    """Sigmoid salience gate: a = sigmoid([F_enc; M_vis] W + b), out = a * F_enc."""
    f_enc = np.asarray(f_enc, dtype=np.float64)
    m_vis = np.asarray(m_vis, dtype=np.float64)
    if f_enc.ndim != 2 or m_vis.ndim != 2 or f_enc.shape[0] != m_vis.shape[0]:
        raise ShapeMismatch("F_enc and M_vis must be 2-D with matching frame counts")
    stacked = np.concatenate([f_enc, m_vis], axis=1)
    if stacked.shape[1] != w_att.shape[0]:
        raise ShapeMismatch(
            f"gate expects {w_att.shape[0]} input features, got {stacked.shape[1]}"
        )
    logits = np.clip(stacked @ w_att + b_att, -60.0, 60.0)
    gate = 1.0 / (1.0 + np.exp(-logits))
    return gate * f_enc, gate


def _film(h, emb, cond_rows, params_t, prefix, c_out, frames):
    """Scale/shift modulation from timestep embedding and conditioning rows.

    The affine outputs hold scale in their first half and shift in the
    second; conditioning contributes per-frame, the timestep globally.
    """
    t_aff = linear(emb, params_t[f"{prefix}.film_t.w"], params_t[f"{prefix}.film_t.b"])
    c_aff = linear(cond_rows, params_t[f"{prefix}.film_c.w"], params_t[f"{prefix}.film_c.b"])
    t_vals = reshape(t_aff, (2, c_out))
    c_vals = transpose2d(c_aff)  # (2*c_out, frames)
    scale = add(
        reshape(crop_rows(t_vals, 1, axis=0), (c_out, 1, 1)),
        reshape(crop_rows(c_vals, c_out, axis=0), (c_out, frames, 1)),
    )
    shift = add(
        reshape(_tail_rows(t_vals, 1), (c_out, 1, 1)),
        reshape(_tail_rows(c_vals, c_out), (c_out, frames, 1)),
    )
    one_plus = add(constant(np.ones((1, 1, 1))), scale)
    return add(mul(h, one_plus), shift)


def _tail_rows(t: Tensor, count: int) -> Tensor:
    """Last ``count`` rows of a 2-D tensor (a slice op on the tape)."""
    total = t.shape[0]
    start = total - count
    out = Tensor(t.value[start:], parents=(t,))

    def backward_fn(g):
        if t.requires_grad:
            full = np.zeros(t.shape)
            full[start:] = g
            t.add_grad(full)

    out.backward_fn = backward_fn
    return out


def _res_block(x, emb, cond_rows, params_t, prefix, c_in, c_out, frames):
    h = conv2d3(x, params_t[f"{prefix}.conv1.w"], params_t[f"{prefix}.conv1.b"])
    h = _film(h, emb, cond_rows, params_t, prefix, c_out, frames)
    h = silu(rms_norm(h, params_t[f"{prefix}.norm.g"]))
    h = conv2d3(h, params_t[f"{prefix}.conv2.w"], params_t[f"{prefix}.conv2.b"])
    if c_in != c_out:
        x = conv2d1(x, params_t[f"{prefix}.proj.w"], params_t[f"{prefix}.proj.b"])
    return add(h, x)


def _pool_rows(t: Tensor, factor: int) -> Tensor:
    """(F, D) -> (F/factor, D) by block averaging."""
    if factor == 1:
        return t
    f, d = t.shape
    return reshape(
        mean_over(reshape(t, (f // factor, factor, d)), axes=(1,), keepdims=False),
        (f // factor, d),
    )


def denoiser_forward(
    model: DenoiserParams,
    x: np.ndarray,
    t: int,
    cond: ConditioningVector,
    params_t: dict | None = None,
) -> Tensor:
    """Noise prediction as a tape node; pass Tensor-wrapped params to train."""
    config = model.config
    ch = config.channels
    if params_t is None:
        params_t = {k: constant(v) for k, v in model.params.items()}
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != LATENT_CHANNELS:
        raise ShapeMismatch(f"latent must be (4, F, B), got {x.shape}")
    frames, bins = x.shape[1], x.shape[2]
    if cond.frames != frames:
        raise ShapeMismatch(f"conditioning frames {cond.frames} != latent frames {frames}")

    pad_mult = 2 ** (N_LEVELS - 1)
    frames_pad = -(-frames // pad_mult) * pad_mult

    # timestep context: MLP over the sinusoidal row, plus analytic schedule
    # features so large small-t gains stay one O(1) weight away
    emb_row = constant(model.temb_table[t - 1][None, :])
    emb = silu(linear(emb_row, params_t["temb.mlp1.w"], params_t["temb.mlp1.b"]))
    emb = linear(emb, params_t["temb.mlp2.w"], params_t["temb.mlp2.b"])
    emb = concat([emb, constant(model.analytic_table[t - 1][None, :])], axis=1)

    # conditioning branch: encoder -> salience gate (on the tape)
    feats = constant(cond.features)
    f_enc = silu(linear(feats, params_t["cond.enc.w"], params_t["cond.enc.b"]))
    gate_in = concat([f_enc, constant(cond.saliency)], axis=1)
    gate = sigmoid(linear(gate_in, params_t["cond.gate.w"], params_t["cond.gate.b"]))
    cond_rows = pad_rows(mul(gate, f_enc), frames_pad, axis=0)

    x_t = constant(x)
    coords_f = np.broadcast_to(
        np.linspace(-1.0, 1.0, frames_pad)[None, :, None], (1, frames_pad, bins)
    )
    coords_b = np.broadcast_to(np.linspace(-1.0, 1.0, bins)[None, None, :], (1, frames_pad, bins))
    h = concat(
        [pad_rows(x_t, frames_pad, axis=1), constant(coords_f), constant(coords_b)], axis=0
    )
    h = conv2d3(h, params_t["in.conv.w"], params_t["in.conv.b"])

    skips = []
    cond_levels = [ _pool_rows(cond_rows, 2**level) for level in range(N_LEVELS) ]
    level_frames = [frames_pad // (2**level) for level in range(N_LEVELS)]
    for level in range(N_LEVELS):
        c_in = ch[level - 1] if level > 0 else ch[0]
        h = _res_block(
            h, emb, cond_levels[level], params_t, f"down{level}",
            c_in if level > 0 else ch[0], ch[level], level_frames[level],
        )
        if level < N_LEVELS - 1:
            skips.append(h)
            h = avg_pool2(h)
    h = _res_block(
        h, emb, cond_levels[-1], params_t, "mid", ch[-1], ch[-1], level_frames[-1]
    )
    for level in range(N_LEVELS - 2, -1, -1):
        h = upsample_nearest2(h)
        h = concat([h, skips[level]], axis=0)
        h = _res_block(
            h, emb, cond_levels[level], params_t, f"up{level}",
            ch[level + 1] + ch[level], ch[level], level_frames[level],
        )
    h = silu(rms_norm(h, params_t["out.norm.g"]))
    h = conv2d3(h, params_t["out.conv.w"], params_t["out.conv.b"])

    # learned per-channel timestep-scaled input skip
    skip_scale = linear(emb, params_t["skip.w"], params_t["skip.b"])  # (1, 4)
    skip_scale = reshape(skip_scale, (LATENT_CHANNELS, 1, 1))
    h = add(h, mul(pad_rows(x_t, frames_pad, axis=1), skip_scale))
    return crop_rows(h, frames, axis=1)


def predict_noise(model: DenoiserParams, x: np.ndarray, t: int, cond: ConditioningVector):
    return denoiser_forward(model, x, t, cond).value
