"""Objective evaluation suite for (reference, generated) FOA pairs and corpora.

Seven metrics: direction-of-arrival error, SNR, early-decay-time difference,
normalized STFT magnitude error, SI-SDR, corpus KL divergence over band
log-energies, and a Frechet distance over seeded random-projection
embeddings.  dB-style metrics are capped at +/-100 so reports stay finite
and sortable.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bands import N_BANDS
from .errors import NoActivity, UndefinedMetric
from .filters import band_energies
from .foa import FoaClip, estimate_doa
from .wavio import read_foa_wav

DB_CAP = 100.0
DOA_WINDOW_S = 0.1
STFT_WINDOW = 512
STFT_HOP = 256

#: fixed seed of the Frechet embedding projection; never derived from inputs.
FD_PROJECTION_SEED = 0x5EED_F0A
FD_DIM = 32

KL_BINS = 64
KL_RANGE = (-30.0, 10.0)
_LOG_EPS = 1e-12


def _require_same_shape(ref: FoaClip, gen: FoaClip):
    if ref.channels.shape != gen.channels.shape or ref.sample_rate != gen.sample_rate:
        raise ValueError("clips must share shape and sample rate")


def _doa_by_window(clip: FoaClip, window: int) -> dict[int, np.ndarray]:
    out = {}
    for t, d in estimate_doa(clip, window):
        idx = int(round(t * clip.sample_rate - window / 2)) // window
        out[idx] = d.unit_vector()
    return out


def doa_error(ref: FoaClip, gen: FoaClip) -> float:
    """Mean angle (radians) between per-100 ms DOA estimates.

    Windows silent in either clip are skipped; nothing shared raises
    NoActivity.
    """
    _require_same_shape(ref, gen)
    window = max(int(round(DOA_WINDOW_S * ref.sample_rate)), 1)
    ref_doa = _doa_by_window(ref, window)
    gen_doa = _doa_by_window(gen, window)
    common = sorted(set(ref_doa) & set(gen_doa))
    if not common:
        raise NoActivity("no window is directionally active in both clips")
    angles = []
    for idx in common:
        if np.array_equal(ref_doa[idx], gen_doa[idx]):
            angles.append(0.0)  # exact self-comparison stays exactly zero
            continue
        dot = float(np.dot(ref_doa[idx], gen_doa[idx]))
        angles.append(math.acos(max(-1.0, min(1.0, dot))))
    return float(np.mean(angles))


def snr(ref: FoaClip, gen: FoaClip) -> float:
    """10 log10(sum ref^2 / sum (ref-gen)^2) over all four channels."""
    _require_same_shape(ref, gen)
    signal = float(np.sum(ref.channels**2))
    if signal == 0.0:
        raise UndefinedMetric("silent reference")
    noise = float(np.sum((ref.channels - gen.channels) ** 2))
    if noise == 0.0:
        return DB_CAP
    return min(10.0 * math.log10(signal / noise), DB_CAP)


def _decay_segment(clip: FoaClip) -> np.ndarray:
    """Squared W channel from the last activity peak onward."""
    w2 = clip.channels[0] ** 2
    if not np.any(w2 > 0):
        raise UndefinedMetric("silent clip has no decay segment")
    smooth_len = max(int(0.01 * clip.sample_rate), 1)
    kernel = np.ones(smooth_len) / smooth_len
    envelope = np.convolve(w2, kernel, mode="same")
    threshold = 0.5 * float(envelope.max())
    peak = int(np.nonzero(envelope >= threshold)[0][-1])
    segment = w2[peak:]
    if segment.size < 32:
        raise UndefinedMetric("no decay segment after the last activity peak")
    return segment


def edt(clip: FoaClip) -> float:
    """Early decay time: 6x the 0 to -10 dB span of the Schroeder curve."""
    segment = _decay_segment(clip)
    edc = np.cumsum(segment[::-1])[::-1]
    edc = edc / edc[0]
    db = 10.0 * np.log10(np.maximum(edc, 1e-300))
    in_fit = db >= -10.0
    n_fit = int(np.sum(in_fit))
    if n_fit < 8 or n_fit == segment.size:
        raise UndefinedMetric("decay segment never reaches -10 dB")
    t = np.arange(n_fit) / clip.sample_rate
    slope, _ = np.polyfit(t, db[:n_fit], 1)
    if slope >= 0:
        raise UndefinedMetric("energy does not decay in the fit region")
    return float(-60.0 / slope)


def edt_diff(ref: FoaClip, gen: FoaClip) -> float:
    return abs(edt(ref) - edt(gen))


def _magnitude_spectrogram(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if n < STFT_WINDOW:
        x = np.pad(x, (0, STFT_WINDOW - n))
        n = STFT_WINDOW
    n_frames = 1 + (n - STFT_WINDOW) // STFT_HOP
    window = np.hanning(STFT_WINDOW)
    idx = np.arange(STFT_WINDOW)[None, :] + STFT_HOP * np.arange(n_frames)[:, None]
    frames = x[idx] * window
    return np.abs(np.fft.rfft(frames, axis=1))


def stft_error(ref: FoaClip, gen: FoaClip) -> float:
    """Mean |magnitude difference| over channels, normalized by the mean
    reference magnitude; phase-blind by construction."""
    _require_same_shape(ref, gen)
    num = 0.0
    den = 0.0
    for ch in range(4):
        m_ref = _magnitude_spectrogram(ref.channels[ch])
        m_gen = _magnitude_spectrogram(gen.channels[ch])
        num += float(np.sum(np.abs(m_ref - m_gen)))
        den += float(np.sum(m_ref))
    if den == 0.0:
        raise UndefinedMetric("silent reference")
    return num / den


def si_sdr(ref: FoaClip, gen: FoaClip) -> float:
    """Scale-invariant SDR averaged over non-silent channels, capped +/-100."""
    _require_same_shape(ref, gen)
    values = []
    for ch in range(4):
        r = ref.channels[ch]
        g = gen.channels[ch]
        r_energy = float(np.dot(r, r))
        if r_energy == 0.0:
            continue  # silent reference channel skipped
        s = (float(np.dot(g, r)) / r_energy) * r
        e = g - s
        s_energy = float(np.dot(s, s))
        e_energy = float(np.dot(e, e))
        if s_energy == 0.0:
            values.append(-DB_CAP)
        elif e_energy == 0.0:
            values.append(DB_CAP)
        else:
            values.append(max(min(10.0 * math.log10(s_energy / e_energy), DB_CAP), -DB_CAP))
    if not values:
        raise UndefinedMetric("all reference channels silent")
    return float(np.mean(values))


# --- corpus-level metrics ---------------------------------------------------


def band_log_energy_features(clip: FoaClip) -> np.ndarray:
    """7-band x 4-channel mean log-energy vector (28 dims)."""
    feats = np.empty(4 * N_BANDS)
    for ch in range(4):
        e = band_energies(clip.channels[ch], clip.sample_rate)
        feats[ch * N_BANDS : (ch + 1) * N_BANDS] = np.log(e + _LOG_EPS)
    return feats


def kl_div(ref_corpus, gen_corpus) -> float:
    """KL(ref || gen) over Laplace-smoothed per-dimension histograms of the
    band log-energy features (product of marginals, shared fixed binning)."""
    ref_feats = np.stack([band_log_energy_features(c) for c in ref_corpus])
    gen_feats = np.stack([band_log_energy_features(c) for c in gen_corpus])
    edges = np.linspace(KL_RANGE[0], KL_RANGE[1], KL_BINS + 1)
    total = 0.0
    for dim in range(ref_feats.shape[1]):
        r = np.clip(ref_feats[:, dim], KL_RANGE[0], KL_RANGE[1] - 1e-9)
        g = np.clip(gen_feats[:, dim], KL_RANGE[0], KL_RANGE[1] - 1e-9)
        p = np.histogram(r, bins=edges)[0].astype(np.float64) + 1.0
        q = np.histogram(g, bins=edges)[0].astype(np.float64) + 1.0
        p /= p.sum()
        q /= q.sum()
        total += float(np.sum(p * np.log(p / q)))
    return max(total, 0.0)


def clip_embedding(clip: FoaClip) -> np.ndarray:
    """Fixed seeded random-projection embedding (D=32) of band/channel
    log-energies and pseudo-intensity statistics."""
    log_energy = band_log_energy_features(clip)  # 28
    w = clip.channels[0]
    intensity = np.mean(w[None, :] * clip.channels[1:4], axis=1)  # 3
    norm = float(np.linalg.norm(intensity))
    direction = intensity / norm if norm > 0 else np.zeros(3)
    raw = np.concatenate([log_energy, direction, [math.log(norm + _LOG_EPS)]])  # 32
    rng = np.random.default_rng(FD_PROJECTION_SEED)
    projection = rng.standard_normal((FD_DIM, raw.size)) / math.sqrt(raw.size)
    return projection @ raw


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((a + a.T) / 2.0)
    vals = np.maximum(vals, 0.0)
    return (vecs * np.sqrt(vals)) @ vecs.T


def gaussian_frechet(mu1, sigma1, mu2, sigma2) -> float:
    """Closed-form Frechet distance between two Gaussians."""
    mu1 = np.asarray(mu1, dtype=np.float64)
    mu2 = np.asarray(mu2, dtype=np.float64)
    sigma1 = np.asarray(sigma1, dtype=np.float64)
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    root1 = _psd_sqrt(sigma1)
    cross = _psd_sqrt(root1 @ sigma2 @ root1)
    trace = float(np.trace(sigma1) + np.trace(sigma2) - 2.0 * np.trace(cross))
    return max(float(np.sum((mu1 - mu2) ** 2)) + trace, 0.0)


def frechet_distance(ref_corpus, gen_corpus) -> float:
    """Frechet distance between Gaussian fits of the corpus embeddings.

    Covariances get trace-preserving shrinkage toward the identity when a
    corpus is too small for a full-rank estimate.
    """
    ref_corpus = list(ref_corpus)
    gen_corpus = list(gen_corpus)
    if len(ref_corpus) < 2 or len(gen_corpus) < 2:
        raise UndefinedMetric("need at least 2 clips per corpus")

    def fit(corpus):
        emb = np.stack([clip_embedding(c) for c in corpus])
        mu = emb.mean(axis=0)
        sigma = np.cov(emb, rowvar=False)
        if len(corpus) < FD_DIM + 1:
            lam = 0.05
            sigma = (1 - lam) * sigma + lam * (np.trace(sigma) / FD_DIM) * np.eye(FD_DIM)
        return mu, sigma

    mu1, s1 = fit(ref_corpus)
    mu2, s2 = fit(gen_corpus)
    return gaussian_frechet(mu1, s1, mu2, s2)


# --- corpus evaluation -------------------------------------------------------

METRIC_COLUMNS = ("doa", "snr", "edt", "fd", "stft", "si_sdr", "kl")


@dataclass
class ClipMetrics:
    name: str
    doa: float | None = None
    snr: float | None = None
    edt: float | None = None
    stft: float | None = None
    si_sdr: float | None = None
    notes: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "doa": self.doa,
            "snr": self.snr,
            "edt": self.edt,
            "stft": self.stft,
            "si_sdr": self.si_sdr,
            "notes": self.notes,
        }


@dataclass
class MetricsReport:
    clips: list
    kl: float | None
    fd: float | None
    unmatched_ref: list
    unmatched_gen: list

    def aggregates(self) -> dict:
        agg = {}
        for key in ("doa", "snr", "edt", "stft", "si_sdr"):
            values = [getattr(c, key) for c in self.clips if getattr(c, key) is not None]
            agg[key] = float(np.mean(values)) if values else None
        agg["kl"] = self.kl
        agg["fd"] = self.fd
        return agg

    def as_dict(self) -> dict:
        return {
            "clips": [c.as_dict() for c in self.clips],
            "aggregate": self.aggregates(),
            "unmatched_ref": self.unmatched_ref,
            "unmatched_gen": self.unmatched_gen,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def to_markdown(self) -> str:
        """Aligned table in DOA / SNR / EDT / FD / STFT / SI-SDR / KL order."""
        agg = self.aggregates()
        headers = ("DOA", "SNR", "EDT", "FD", "STFT", "SI-SDR", "KL")
        values = [agg[k] for k in METRIC_COLUMNS]
        cells = ["-" if v is None else f"{v:.4f}" for v in values]
        widths = [max(len(h), len(c)) for h, c in zip(headers, cells)]
        head = " | ".join(h.ljust(w) for h, w in zip(headers, widths))
        rule = " | ".join("-" * w for w in widths)
        row = " | ".join(c.ljust(w) for c, w in zip(cells, widths))
        return f"| {head} |\n| {rule} |\n| {row} |"


def _pair_metrics(name: str, ref: FoaClip, gen: FoaClip) -> ClipMetrics:
    out = ClipMetrics(name=name)
    try:
        out.doa = doa_error(ref, gen)
    except (NoActivity, UndefinedMetric) as exc:
        out.notes["doa"] = str(exc)
    try:
        out.snr = snr(ref, gen)
    except UndefinedMetric as exc:
        out.notes["snr"] = str(exc)
    try:
        out.edt = edt_diff(ref, gen)
    except UndefinedMetric as exc:
        out.notes["edt"] = str(exc)
    try:
        out.stft = stft_error(ref, gen)
    except UndefinedMetric as exc:
        out.notes["stft"] = str(exc)
    try:
        out.si_sdr = si_sdr(ref, gen)
    except UndefinedMetric as exc:
        out.notes["si_sdr"] = str(exc)
    return out


def evaluate_corpus(ref_dir, gen_dir, threads: int = 1) -> MetricsReport:
    """Evaluate matching WAV filenames of two corpus directories."""
    ref_dir = Path(ref_dir)
    gen_dir = Path(gen_dir)
    ref_files = {p.name: p for p in sorted(ref_dir.rglob("*.wav"))}
    gen_files = {p.name: p for p in sorted(gen_dir.rglob("*.wav"))}
    common = sorted(set(ref_files) & set(gen_files))
    unmatched_ref = sorted(set(ref_files) - set(gen_files))
    unmatched_gen = sorted(set(gen_files) - set(ref_files))

    def load_pair(name):
        return read_foa_wav(ref_files[name]), read_foa_wav(gen_files[name])

    pairs = []
    if threads > 1 and len(common) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pairs = list(pool.map(load_pair, common))
    else:
        pairs = [load_pair(name) for name in common]

    def job(item):
        name, (ref, gen) = item
        return _pair_metrics(name, ref, gen)

    items = list(zip(common, pairs))
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            clips = list(pool.map(job, items))
    else:
        clips = [job(item) for item in items]

    kl = fd = None
    if common:
        refs = [p[0] for p in pairs]
        gens = [p[1] for p in pairs]
        kl = kl_div(refs, gens)
        try:
            fd = frechet_distance(refs, gens)
        except UndefinedMetric:
            fd = None
    return MetricsReport(
        clips=clips,
        kl=kl,
        fd=fd,
        unmatched_ref=unmatched_ref,
        unmatched_gen=unmatched_gen,
    )
