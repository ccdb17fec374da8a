"""Versioned binary checkpoint container.

Layout: 8-byte magic, little-endian u32 schema version, u32 header length,
UTF-8 JSON header (schedule, config, conditioning mode, standardization
stats, parameter order and shapes), then the float32 little-endian weight
blobs concatenated in header order.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from ..foa import ChannelStats
from .denoiser import DenoiserConfig, DenoiserParams
from .schedule import NoiseSchedule

MAGIC = b"FOADDPM1"
VERSION = 1


def save_checkpoint(path, model: DenoiserParams) -> None:
    names = sorted(model.params.keys())
    header = {
        "schedule": {
            "steps": model.schedule.steps,
            "beta_start": model.schedule.beta_start,
            "beta_end": model.schedule.beta_end,
        },
        "config": {"width": model.config.width, "base_channels": model.config.base_channels},
        "conditioning_mode": model.conditioning_mode,
        "stats": {
            "mean": [float(v) for v in model.latent_stats.mean],
            "std": [float(v) for v in model.latent_stats.std],
        },
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(model.params[n], dtype="<f4").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> DenoiserParams:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint {path} does not exist")
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    version, header_len = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported schema version {version}")
    if len(raw) < 16 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})")
    offset = 16 + header_len
    params = {}
    for item in header["params"]:
        shape = tuple(item["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated weights at {item['name']}")
        params[item["name"]] = (
            np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
            .astype(np.float64)
            .reshape(shape)
        )
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after weights")
    schedule = NoiseSchedule(
        steps=header["schedule"]["steps"],
        beta_start=header["schedule"]["beta_start"],
        beta_end=header["schedule"]["beta_end"],
    )
    config = DenoiserConfig(
        width=header["config"]["width"], base_channels=header["config"]["base_channels"]
    )
    stats = ChannelStats(
        mean=np.array(header["stats"]["mean"]), std=np.array(header["stats"]["std"])
    )
    return DenoiserParams(
        config=config,
        params=params,
        schedule=schedule,
        conditioning_mode=header["conditioning_mode"],
        latent_stats=stats,
    )
