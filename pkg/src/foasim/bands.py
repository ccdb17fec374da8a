"""Octave-band constants shared by materials, acoustics, and metrics."""

import numpy as np

#: center frequencies (Hz) of the seven octave bands used everywhere.
OCTAVE_CENTERS = np.array([125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0])

N_BANDS = 7

#: geometric-mean crossover frequencies between adjacent bands.
BAND_EDGES = np.sqrt(OCTAVE_CENTERS[:-1] * OCTAVE_CENTERS[1:])
