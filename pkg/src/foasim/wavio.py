"""WAV file interfaces.

Formats handled here:

* FOA clips: RIFF WAVE, 4 channels in W,X,Y,Z order, 16 kHz, 16-bit PCM.
* Dry source signals and impulse responses: mono / 4-channel 32-bit float.
* HRIR sets: a directory with ``hrir_index.json`` listing
  ``{elevation_rad, azimuth_rad, file}`` entries plus per-direction
  2-channel 32-bit-float WAV files.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import FoasimError
from .foa import DEFAULT_SAMPLE_RATE, Direction, FoaClip, HrirEntry, HrirSet

PCM16_FULL_SCALE = 32767.0


class WavFormatError(FoasimError):
    pass


def write_foa_wav(path, clip: FoaClip, *, ambix: bool = False) -> None:
    """Write a 4-channel 16-bit PCM FOA WAV; samples outside [-1, 1] clip.

    With ``ambix=True`` channels are exported in ACN/SN3D (AmbiX) order
    instead of the native W,X,Y,Z.
    """
    from .foa import to_ambix_channels

    channels = to_ambix_channels(clip) if ambix else clip.channels
    data = np.clip(channels, -1.0, 1.0)
    pcm = np.round(data * PCM16_FULL_SCALE).astype(np.int16)
    _atomic_wav_write(path, clip.sample_rate, pcm.T.copy())


def read_foa_wav(path) -> FoaClip:
    rate, data = wavfile.read(os.fspath(path))
    if data.ndim != 2 or data.shape[1] != 4:
        raise WavFormatError(f"{path}: expected 4 channels, got shape {data.shape}")
    if data.dtype == np.int16:
        channels = data.T.astype(np.float64) / PCM16_FULL_SCALE
    elif data.dtype in (np.float32, np.float64):
        channels = data.T.astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported sample format {data.dtype}")
    return FoaClip(channels, sample_rate=int(rate), normalization="raw")


def validate_foa_wav(path) -> list[str]:
    """Check the FOA corpus format contract; returns a list of violations."""
    problems = []
    try:
        rate, data = wavfile.read(os.fspath(path))
    except Exception as exc:  # unreadable file is one violation, not a crash
        return [f"{path}: not a readable WAV ({exc})"]
    if data.ndim != 2 or data.shape[1] != 4:
        problems.append(f"{path}: expected 4 channels, got shape {data.shape}")
    if rate != DEFAULT_SAMPLE_RATE:
        problems.append(f"{path}: expected {DEFAULT_SAMPLE_RATE} Hz, got {rate}")
    if data.dtype != np.int16:
        problems.append(f"{path}: expected 16-bit PCM, got {data.dtype}")
    return problems


def write_float_wav(path, data: np.ndarray, sample_rate: int) -> None:
    """Write mono (n,) or multichannel (channels, n) data as 32-bit float WAV."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr.T.copy()
    _atomic_wav_write(path, sample_rate, arr)


def read_mono_wav(path) -> tuple[np.ndarray, int]:
    rate, data = wavfile.read(os.fspath(path))
    if data.ndim != 1:
        raise WavFormatError(f"{path}: expected mono, got shape {data.shape}")
    if data.dtype == np.int16:
        signal = data.astype(np.float64) / PCM16_FULL_SCALE
    else:
        signal = data.astype(np.float64)
    return signal, int(rate)


def _atomic_wav_write(path, rate: int, frames: np.ndarray) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    wavfile.write(os.fspath(tmp), rate, frames)
    os.replace(tmp, path)


def load_hrir_set(directory) -> HrirSet:
    """Load an HRIR set from a directory with ``hrir_index.json``."""
    directory = Path(directory)
    index_path = directory / "hrir_index.json"
    with open(index_path) as f:
        index = json.load(f)
    entries = []
    sample_rate = None
    for item in index:
        rate, data = wavfile.read(os.fspath(directory / item["file"]))
        if data.ndim != 2 or data.shape[1] != 2:
            raise WavFormatError(f"{item['file']}: HRIR WAVs must have 2 channels")
        if sample_rate is None:
            sample_rate = int(rate)
        elif int(rate) != sample_rate:
            raise WavFormatError(f"{item['file']}: mixed HRIR sample rates")
        data = data.astype(np.float64)
        entries.append(
            HrirEntry(
                Direction(float(item["elevation_rad"]), float(item["azimuth_rad"])),
                data[:, 0],
                data[:, 1],
            )
        )
    hrirs = HrirSet(entries=tuple(entries), sample_rate=sample_rate or DEFAULT_SAMPLE_RATE)
    hrirs.validate()
    return hrirs


def save_hrir_set(directory, hrirs: HrirSet) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = []
    for i, e in enumerate(hrirs.entries):
        name = f"hrir_{i:03d}.wav"
        write_float_wav(directory / name, np.stack([e.left, e.right]), hrirs.sample_rate)
        index.append(
            {
                "elevation_rad": e.direction.elevation,
                "azimuth_rad": e.direction.azimuth,
                "file": name,
            }
        )
    tmp = directory / "hrir_index.json.tmp"
    with open(tmp, "w") as f:
        json.dump(index, f, indent=2)
    os.replace(tmp, directory / "hrir_index.json")
