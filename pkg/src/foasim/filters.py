"""Zero-phase octave-band FIR bank shared by IR synthesis and metrics.

The seven bands are built as differences of linear-phase lowpass prototypes,
so the filters sum exactly to a centered unit impulse: a flat-gain signal
passes through the bank unchanged.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve, firwin

from .bands import BAND_EDGES, N_BANDS

FIR_LENGTH = 257
FIR_CENTER = FIR_LENGTH // 2


@lru_cache(maxsize=8)
def octave_bank(sample_rate: int) -> np.ndarray:
    """(7, 257) bank of complementary linear-phase band filters."""
    nyquist = sample_rate / 2.0
    lowpasses = []
    for edge in BAND_EDGES:
        cutoff = min(float(edge), 0.99 * nyquist)
        lowpasses.append(firwin(FIR_LENGTH, cutoff, fs=sample_rate))
    delta = np.zeros(FIR_LENGTH)
    delta[FIR_CENTER] = 1.0
    bank = np.empty((N_BANDS, FIR_LENGTH))
    bank[0] = lowpasses[0]
    for k in range(1, N_BANDS - 1):
        bank[k] = lowpasses[k] - lowpasses[k - 1]
    bank[N_BANDS - 1] = delta - lowpasses[-1]
    return bank


def bandpass(signal: np.ndarray, band: int, sample_rate: int) -> np.ndarray:
    """Zero-phase band filtering (same length as the input)."""
    h = octave_bank(sample_rate)[band]
    return fftconvolve(signal, h, mode="same")


def band_energies(signal: np.ndarray, sample_rate: int) -> np.ndarray:
    """Mean squared value of the signal in each octave band."""
    out = np.empty(N_BANDS)
    for b in range(N_BANDS):
        y = bandpass(signal, b, sample_rate)
        out[b] = float(np.mean(y * y))
    return out
