"""Geometric acoustics: propagation paths, occlusion, image sources,
reverberation estimates, impulse-response synthesis, and the reference
FOA renderer.

Band-dependent quantities use the seven shared octave bands.  A propagation
path accumulates one ``(1 - absorption)`` factor per surface interaction
(reflective or transmissive) and an ``exp(-gamma * d)`` air term.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import fftconvolve

from .bands import N_BANDS
from .errors import DegenerateRay, InvalidGeometry, UnsupportedOrder
from .filters import FIR_CENTER, octave_bank
from .foa import Direction, FoaClip
from .scene import SceneManifest, Surface, sample_tracks
from .seeding import rng_for

log = logging.getLogger(__name__)

#: total occlusion never drops transmission below this floor (-80 dB).
TRANSMISSION_FLOOR = 1e-4

#: near-field clamp for the 1/d distance gain.
MIN_DISTANCE = 0.1

#: source and listener closer than this are a degenerate ray.
DEGENERATE_DISTANCE = 1e-6

#: IRs are recomputed only after source or listener moved this far.
IR_RECOMPUTE_DISTANCE = 0.01

DESCRIPTOR_RATE_HZ = 10.0


@dataclass(frozen=True)
class PropagationPath:
    kind: str  # "direct" or "reflection"
    order: int
    total_length: float
    arrival_direction: Direction
    surface_hits: tuple  # of Surface
    delay: int  # samples
    band_gains: np.ndarray | None = None  # optional precomputed override

    def __post_init__(self):
        if self.total_length <= 0:
            raise ValueError("path length must be positive")
        if self.order >= 1 and len(self.surface_hits) == 0:
            raise ValueError("reflection paths must hit at least one surface")


@dataclass(frozen=True)
class OcclusionDescriptor:
    visible: bool
    transmission: np.ndarray  # (7,)

    def __post_init__(self):
        t = np.asarray(self.transmission, dtype=np.float64).reshape(N_BANDS)
        t.flags.writeable = False
        object.__setattr__(self, "transmission", t)


@dataclass(frozen=True)
class ReverbProfile:
    t60: np.ndarray  # (7,), seconds
    mixing_time: float

    def __post_init__(self):
        t = np.asarray(self.t60, dtype=np.float64).reshape(N_BANDS)
        if not np.all(np.isfinite(t)) or np.any(t <= 0):
            raise ValueError("T60 must be finite and positive")
        if self.mixing_time < 0:
            raise ValueError("mixing_time must be >= 0")
        t.flags.writeable = False
        object.__setattr__(self, "t60", t)


def path_attenuation(path: PropagationPath, gamma) -> np.ndarray:
    """Band gains: product of (1 - absorption) over hits times air decay."""
    gamma = np.asarray(gamma, dtype=np.float64).reshape(N_BANDS)
    gains = np.exp(-gamma * path.total_length)
    for s in path.surface_hits:
        gains = gains * (1.0 - s.material.absorption)
    return gains


class TriangleSoup:
    """Vectorized segment/triangle intersection over a surface list."""

    def __init__(self, surfaces):
        self.surfaces = tuple(surfaces)
        n = len(self.surfaces)
        self.v0 = np.zeros((n, 3))
        self.e1 = np.zeros((n, 3))
        self.e2 = np.zeros((n, 3))
        for i, s in enumerate(self.surfaces):
            self.v0[i] = s.vertices[0]
            self.e1[i] = s.vertices[1] - s.vertices[0]
            self.e2[i] = s.vertices[2] - s.vertices[0]

    def intersect_segment(self, p0, p1, eps: float = 1e-6):
        """All (param, surface_index) hits with param strictly inside (eps, 1-eps).

        Hits closer than 1e-9 in parameter are collapsed to one (shared
        triangle edges would otherwise double-count a wall crossing).
        """
        if not self.surfaces:
            return []
        d = np.asarray(p1, dtype=np.float64) - np.asarray(p0, dtype=np.float64)
        h = np.cross(d[None, :], self.e2)
        a = np.einsum("ij,ij->i", self.e1, h)
        scale = np.linalg.norm(self.e1, axis=1) * np.linalg.norm(self.e2, axis=1) + 1e-300
        nonparallel = np.abs(a) > 1e-12 * scale
        if not np.any(nonparallel):
            return []
        f = np.zeros_like(a)
        f[nonparallel] = 1.0 / a[nonparallel]
        s = np.asarray(p0, dtype=np.float64)[None, :] - self.v0
        u = f * np.einsum("ij,ij->i", s, h)
        q = np.cross(s, self.e1)
        v = f * (q @ d)
        t = f * np.einsum("ij,ij->i", self.e2, q)
        ok = (
            nonparallel
            & (u >= -1e-12)
            & (v >= -1e-12)
            & (u + v <= 1.0 + 1e-12)
            & (t > eps)
            & (t < 1.0 - eps)
        )
        hits = sorted((float(t[i]), int(i)) for i in np.nonzero(ok)[0])
        deduped = []
        for param, idx in hits:
            if deduped and abs(param - deduped[-1][0]) < 1e-9:
                continue
            deduped.append((param, idx))
        return deduped


def _soup(m: SceneManifest, extra_only: bool = False) -> TriangleSoup:
    surfaces = m.extra_surfaces if extra_only else m.surfaces
    return TriangleSoup(surfaces)


def occlusion_trace(
    source_pos, listener_pos, m: SceneManifest, soup: TriangleSoup | None = None
) -> OcclusionDescriptor:
    """Visibility and per-band transmission of the source->listener ray."""
    p0 = np.asarray(source_pos, dtype=np.float64)
    p1 = np.asarray(listener_pos, dtype=np.float64)
    d = float(np.linalg.norm(p1 - p0))
    if d < DEGENERATE_DISTANCE:
        raise DegenerateRay(f"source and listener {d} m apart")
    if soup is None:
        soup = _soup(m)
    hits = soup.intersect_segment(p0, p1)
    transmission = np.exp(-m.air_attenuation * d)
    for _, idx in hits:
        transmission = transmission * (1.0 - soup.surfaces[idx].material.absorption)
    transmission = np.maximum(transmission, TRANSMISSION_FLOOR)
    return OcclusionDescriptor(visible=(len(hits) == 0), transmission=transmission)


def _axis_images(coord: float, length: float, max_order: int):
    """1-D mirror images: (image_coord, hits_on_0_wall, hits_on_L_wall)."""
    out = []
    n_max = max_order // 2 + 1
    for n in range(-n_max, n_max + 1):
        # even images: +coord + 2nL, reflections |n| on each wall
        if 2 * abs(n) <= max_order:
            out.append((coord + 2 * n * length, abs(n), abs(n)))
        # odd images: -coord + 2nL
        if abs(2 * n - 1) <= max_order:
            if n >= 1:
                out.append((-coord + 2 * n * length, n - 1, n))
            else:
                out.append((-coord + 2 * n * length, 1 - n, -n))
    return out


def _fold_coordinate(c: float, length: float) -> float:
    r = math.fmod(c, 2 * length)
    if r < 0:
        r += 2 * length
    return r if r <= length else 2 * length - r


def fold_reflection_points(listener, image, dims) -> list[np.ndarray]:
    """Vertices of the true reflected polyline from listener to source.

    The straight listener->image segment is folded back into the box; every
    crossing of a wall plane becomes a reflection point.  The folded end
    point equals the true source position.
    """
    listener = np.asarray(listener, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    delta = image - listener
    params = set()
    for axis in range(3):
        length = float(dims[axis])
        if abs(delta[axis]) < 1e-12:
            continue
        lo = min(listener[axis], image[axis])
        hi = max(listener[axis], image[axis])
        k = math.floor(lo / length) + 1
        while k * length < hi - 1e-12:
            t = (k * length - listener[axis]) / delta[axis]
            if 1e-12 < t < 1 - 1e-12:
                params.add(round(t, 15))
            k += 1
    points = [listener.copy()]
    for t in sorted(params):
        p = listener + t * delta
        points.append(np.array([_fold_coordinate(p[i], float(dims[i])) for i in range(3)]))
    end = image.copy()
    points.append(np.array([_fold_coordinate(end[i], float(dims[i])) for i in range(3)]))
    return points


def _shoebox_image_paths(
    m: SceneManifest, source_pos, listener_pos, max_order: int
) -> list[PropagationPath]:
    dims = m.shoebox.dimensions
    src = np.asarray(source_pos, dtype=np.float64)
    lst = np.asarray(listener_pos, dtype=np.float64)
    # representative triangle per face, in SHOEBOX_FACES order (2 tris/face)
    face_surfaces = [m.surfaces[2 * f] for f in range(6)]
    per_axis = [_axis_images(float(src[i]), float(dims[i]), max_order) for i in range(3)]
    extra_soup = TriangleSoup(m.extra_surfaces) if m.extra_surfaces else None

    paths = []
    for cx, h0x, h1x in per_axis[0]:
        for cy, h0y, h1y in per_axis[1]:
            order_xy = h0x + h1x + h0y + h1y
            if order_xy > max_order:
                continue
            for cz, h0z, h1z in per_axis[2]:
                order = order_xy + h0z + h1z
                if order > max_order:
                    continue
                image = np.array([cx, cy, cz])
                d = float(np.linalg.norm(image - lst))
                if d < DEGENERATE_DISTANCE:
                    continue
                hits = []
                for axis, (h0, h1) in enumerate(((h0x, h1x), (h0y, h1y), (h0z, h1z))):
                    hits.extend([face_surfaces[2 * axis]] * h0)
                    hits.extend([face_surfaces[2 * axis + 1]] * h1)
                if extra_soup is not None:
                    points = fold_reflection_points(lst, image, dims)
                    for a, b in zip(points[:-1], points[1:]):
                        for _, idx in extra_soup.intersect_segment(a, b):
                            hits.append(extra_soup.surfaces[idx])
                paths.append(
                    PropagationPath(
                        kind="direct" if order == 0 else "reflection",
                        order=order,
                        total_length=d,
                        arrival_direction=Direction.from_vector(image - lst),
                        surface_hits=tuple(hits),
                        delay=int(round(d / m.speed_of_sound * m.sample_rate)),
                    )
                )
    paths.sort(key=lambda p: (p.order, p.delay, p.arrival_direction.azimuth))
    return paths


def _generic_first_order_paths(
    m: SceneManifest, source_pos, listener_pos
) -> list[PropagationPath]:
    src = np.asarray(source_pos, dtype=np.float64)
    lst = np.asarray(listener_pos, dtype=np.float64)
    soup = _soup(m)
    d_direct = float(np.linalg.norm(src - lst))
    paths = []
    if d_direct >= DEGENERATE_DISTANCE:
        paths.append(
            PropagationPath(
                kind="direct",
                order=0,
                total_length=d_direct,
                arrival_direction=Direction.from_vector(src - lst),
                surface_hits=(),
                delay=int(round(d_direct / m.speed_of_sound * m.sample_rate)),
            )
        )
    for tri_idx, surf in enumerate(m.surfaces):
        n = surf.normal
        dist_plane = float(np.dot(src - surf.vertices[0], n))
        image = src - 2.0 * dist_plane * n
        d = float(np.linalg.norm(image - lst))
        if d < DEGENERATE_DISTANCE:
            continue
        # reflection point: where the listener->image segment meets this triangle
        single = TriangleSoup([surf])
        hit = single.intersect_segment(lst, image, eps=1e-9)
        if not hit:
            continue
        point = lst + hit[0][0] * (image - lst)
        hits: list[Surface] = [surf]
        blocked = False
        for a, b in ((src, point), (point, lst)):
            for _, idx in soup.intersect_segment(a, b):
                if soup.surfaces[idx] is surf:
                    continue
                hits.append(soup.surfaces[idx])
        paths.append(
            PropagationPath(
                kind="reflection",
                order=1,
                total_length=d,
                arrival_direction=Direction.from_vector(image - lst),
                surface_hits=tuple(hits),
                delay=int(round(d / m.speed_of_sound * m.sample_rate)),
            )
        )
    paths.sort(key=lambda p: (p.order, p.delay, p.arrival_direction.azimuth))
    return paths


def image_sources(
    m: SceneManifest, source_pos, listener_pos, max_order: int
) -> list[PropagationPath]:
    """All specular paths up to ``max_order`` (direct path included as order 0).

    Shoebox scenes use exact analytic mirroring; other meshes support a
    first-order per-triangle specular search only.
    """
    if not 0 <= max_order <= 3:
        raise UnsupportedOrder(f"max_order {max_order} outside [0, 3]")
    if m.shoebox is not None:
        return _shoebox_image_paths(m, source_pos, listener_pos, max_order)
    if max_order > 1:
        raise UnsupportedOrder("orders above 1 need a shoebox scene")
    if max_order == 0:
        paths = _generic_first_order_paths(m, source_pos, listener_pos)
        return [p for p in paths if p.order == 0]
    return _generic_first_order_paths(m, source_pos, listener_pos)


def reverb_t60(m: SceneManifest, method: str = "eyring", max_order: int = 2) -> ReverbProfile:
    """Sabine or Eyring T60 per band plus the early/late mixing time.

    T60 is capped at 30 s so pathological absorption-free rooms stay finite.
    """
    volume = m.volume()
    if volume is None or volume <= 0:
        raise InvalidGeometry("room volume unavailable or non-positive")
    areas = np.array([s.area for s in m.surfaces])
    if areas.size == 0 or areas.sum() <= 0:
        raise InvalidGeometry("no surfaces")
    absorptions = np.stack([s.material.absorption for s in m.surfaces])
    total_area = float(areas.sum())
    sabine_area = areas @ absorptions  # sum of S_i * alpha_i per band
    alpha_bar = sabine_area / total_area
    alpha_bar = np.clip(alpha_bar, 1e-6, 0.9999)
    if method == "sabine":
        t60 = 0.161 * volume / np.maximum(sabine_area, 1e-6)
    elif method == "eyring":
        t60 = 0.161 * volume / (-total_area * np.log(1.0 - alpha_bar))
    else:
        raise ValueError(f"unknown T60 method {method!r}")
    t60 = np.minimum(t60, 30.0)

    max_delay = 0.0
    sample = sample_tracks(m, 0.0)
    order = max_order if m.shoebox is not None else 1
    for src_pos in sample.source_positions:
        try:
            paths = image_sources(m, src_pos, sample.listener_position, order)
        except (UnsupportedOrder, DegenerateRay):
            paths = []
        for p in paths:
            max_delay = max(max_delay, p.total_length / m.speed_of_sound)
    return ReverbProfile(t60=t60, mixing_time=max_delay + 0.005)


#: decay constant: exp(-6.91) is one thousandth in amplitude (-60 dB).
DECAY_60DB = 6.91

DEFAULT_TAIL_GAIN = 0.1


def _path_band_gains(path: PropagationPath, m: SceneManifest) -> np.ndarray:
    if path.band_gains is not None:
        return np.asarray(path.band_gains, dtype=np.float64)
    return path_attenuation(path, m.air_attenuation)


def early_ir(paths, m: SceneManifest, length: int | None = None) -> np.ndarray:
    """(4, n) FOA impulse response of the discrete paths alone."""
    bank = octave_bank(m.sample_rate)
    max_delay = max((p.delay for p in paths), default=0)
    n = length if length is not None else max_delay + 1
    trains = np.zeros((N_BANDS, 4, max_delay + 1))
    for p in paths:
        gains = _path_band_gains(p, m) / max(p.total_length, MIN_DISTANCE)
        u = p.arrival_direction.unit_vector()
        for b in range(N_BANDS):
            trains[b, 0, p.delay] += gains[b]
            trains[b, 1:, p.delay] += gains[b] * u
    out = np.zeros((4, n + FIR_CENTER + 1))
    for b in range(N_BANDS):
        filtered = fftconvolve(trains[b], bank[b][None, :], axes=1)
        usable = min(filtered.shape[1] - FIR_CENTER, out.shape[1])
        out[:, :usable] += filtered[:, FIR_CENTER : FIR_CENTER + usable]
    return out[:, :n]


def late_tail(
    profile: ReverbProfile,
    m: SceneManifest,
    band_levels,
    length: int | None = None,
) -> np.ndarray:
    """(4, n) diffuse tail: band-filtered seeded noise with exponential decay.

    Each enveloped band is normalized to unit energy before scaling, so
    ``band_levels[b]`` is the square root of the band's total tail energy.
    W carries the full diffuse gain; X, Y, Z are independent decorrelated
    noise at 1/sqrt(3).  Noise streams are seeded per (scene, channel, band).
    """
    rate = m.sample_rate
    bank = octave_bank(rate)
    band_levels = np.asarray(band_levels, dtype=np.float64).reshape(N_BANDS)
    mix_sample = int(round(profile.mixing_time * rate))
    t60_max = float(np.max(profile.t60))
    n = length if length is not None else mix_sample + int(math.ceil(t60_max * rate)) + 1
    tail_len = n - mix_sample
    out = np.zeros((4, n))
    if tail_len <= 0:
        return out
    t_rel = np.arange(tail_len) / rate
    channel_gains = (1.0, 1 / math.sqrt(3.0), 1 / math.sqrt(3.0), 1 / math.sqrt(3.0))
    for b in range(N_BANDS):
        if band_levels[b] == 0.0:
            continue
        envelope = np.exp(-DECAY_60DB * t_rel / profile.t60[b])
        for ch, gain in enumerate(channel_gains):
            rng = rng_for(m.seed, f"tail:ch{ch}:band{b}")
            noise = rng.standard_normal(tail_len)
            noise = fftconvolve(noise, bank[b], mode="same") * envelope
            energy = float(np.sqrt(np.sum(noise * noise)))
            if energy > 0:
                noise = noise / energy
            out[ch, mix_sample:] += gain * band_levels[b] * noise
    return out


def default_tail_levels(m: SceneManifest, tail_gain: float = DEFAULT_TAIL_GAIN) -> np.ndarray:
    """Per-band diffuse level: reflectivity-scaled so anechoic rooms go quiet."""
    areas = np.array([s.area for s in m.surfaces])
    if areas.size == 0 or areas.sum() <= 0:
        return np.zeros(N_BANDS)
    absorptions = np.stack([s.material.absorption for s in m.surfaces])
    alpha_bar = (areas @ absorptions) / float(areas.sum())
    return tail_gain * (1.0 - np.clip(alpha_bar, 0.0, 1.0))


def synthesize_ir(
    paths,
    profile: ReverbProfile,
    m: SceneManifest,
    tail_gain: float = DEFAULT_TAIL_GAIN,
) -> FoaClip:
    """Full FOA impulse response: band-filtered path impulses plus late tail."""
    if not paths:
        raise ValueError("need at least one propagation path")
    rate = m.sample_rate
    mix_sample = int(round(profile.mixing_time * rate))
    t60_max = float(np.max(profile.t60))
    max_delay = max(p.delay for p in paths)
    n = max(mix_sample + int(math.ceil(t60_max * rate)) + 1, max_delay + FIR_CENTER + 1)
    ir = early_ir(paths, m, length=n)
    ir += late_tail(profile, m, default_tail_levels(m, tail_gain), length=n)
    return FoaClip(ir, sample_rate=rate, normalization="raw")


# --- reference renderer -----------------------------------------------------

RENDER_BLOCK = 320  # 20 ms at 16 kHz
RENDER_HOP = 160  # 10 ms


def _activity_gate(src, n: int, rate: int) -> np.ndarray:
    """Per-sample zero-order-hold activity envelope."""
    gate = np.zeros(n)
    times = src.active_times
    values = src.active_values
    for i, (t, on) in enumerate(zip(times, values)):
        start = max(int(round(t * rate)), 0)
        end = int(round(times[i + 1] * rate)) if i + 1 < len(times) else n
        if on and end > start:
            gate[start : min(end, n)] = 1.0
    if len(times) and times[0] > 0:
        gate[: min(int(round(times[0] * rate)), n)] = 1.0 if values[0] else 0.0
    return gate


def _source_tail(
    m: SceneManifest,
    src,
    profile: ReverbProfile,
    levels: np.ndarray,
    order: int,
) -> np.ndarray:
    """Per-source diffuse tail; its start follows this source's own last
    early reflection so removing other sources never changes it."""
    if not np.any(levels):
        return np.zeros((4, 1))
    src_pos = src.position_at(0.0)
    lst_pos = m.listener.position_at(0.0)
    mixing = profile.mixing_time
    if float(np.linalg.norm(src_pos - lst_pos)) >= DEGENERATE_DISTANCE:
        try:
            paths = image_sources(m, src_pos, lst_pos, order)
            if paths:
                mixing = max(p.total_length for p in paths) / m.speed_of_sound + 0.005
        except UnsupportedOrder:
            pass
    return late_tail(ReverbProfile(t60=profile.t60, mixing_time=mixing), m, levels)


def _render_source(
    m: SceneManifest,
    src,
    profile: ReverbProfile,
    levels: np.ndarray,
    max_order: int,
    n_out: int,
    soup: TriangleSoup,
) -> np.ndarray:
    rate = m.sample_rate
    dry = np.zeros(n_out)
    usable = min(src.dry_signal.size, n_out)
    dry[:usable] = src.dry_signal[:usable]
    dry *= _activity_gate(src, n_out, rate)

    out = np.zeros((4, n_out))
    if not np.any(dry):
        return out

    window = 0.5 * (1.0 - np.cos(2 * math.pi * np.arange(RENDER_BLOCK) / RENDER_BLOCK))
    order = max_order if m.shoebox is not None else min(max_order, 1)
    tail = _source_tail(m, src, profile, levels, order)

    cached_key = None
    cached_ir = None
    offsets = range(-RENDER_HOP, n_out, RENDER_HOP)
    for offset in offsets:
        start = max(offset, 0)
        end = min(offset + RENDER_BLOCK, n_out)
        if end <= start:
            continue
        block = np.zeros(RENDER_BLOCK)
        block[start - offset : end - offset] = dry[start:end]
        if not np.any(block):
            continue
        block *= window
        t_block = min(max((offset + RENDER_BLOCK / 2) / rate, 0.0), m.duration)
        src_pos = src.position_at(t_block)
        lst_pos = m.listener.position_at(t_block)
        if float(np.linalg.norm(src_pos - lst_pos)) < DEGENERATE_DISTANCE:
            log.warning(
                "skipping source %s block at %.3fs: degenerate ray", src.source_id, t_block
            )
            continue
        if cached_key is None or (
            np.linalg.norm(src_pos - cached_key[0]) > IR_RECOMPUTE_DISTANCE
            or np.linalg.norm(lst_pos - cached_key[1]) > IR_RECOMPUTE_DISTANCE
        ):
            paths = image_sources(m, src_pos, lst_pos, order)
            direct = [p for p in paths if p.order == 0]
            if direct:
                occ = occlusion_trace(src_pos, lst_pos, m, soup=soup)
                paths = [
                    replace(p, band_gains=occ.transmission) if p.order == 0 else p
                    for p in paths
                ]
            cached_ir = early_ir(paths, m)
            cached_key = (src_pos, lst_pos)
        contrib = fftconvolve(block[None, :], cached_ir, axes=1)
        lo = max(offset, 0)
        hi = min(offset + contrib.shape[1], n_out)
        if hi > lo:
            out[:, lo:hi] += contrib[:, lo - offset : hi - offset]

    if np.any(tail):
        tail_contrib = fftconvolve(dry[None, :], tail, axes=1)
        out += tail_contrib[:, :n_out]
    return out


def render_reference(
    m: SceneManifest,
    max_order: int = 2,
    tail_gain: float = DEFAULT_TAIL_GAIN,
    threads: int = 1,
) -> FoaClip:
    """Geometric FOA render of the whole scene.

    Block-wise (10 ms hop, 50%-overlap Hann cross-fade) time-varying
    convolution of every active dry signal with its current image-source IR,
    summed over sources in manifest order.
    """
    n_out = m.total_samples()
    if m.volume():
        profile = reverb_t60(m, max_order=max_order)
        levels = default_tail_levels(m, tail_gain)
    else:
        profile = ReverbProfile(t60=np.full(N_BANDS, 1e-3), mixing_time=0.0)
        levels = np.zeros(N_BANDS)
    soup = _soup(m)

    def job(src):
        return _render_source(m, src, profile, levels, max_order, n_out, soup)

    if threads > 1 and len(m.sources) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            contributions = list(pool.map(job, m.sources))
    else:
        contributions = [job(src) for src in m.sources]
    out = np.zeros((4, n_out))
    for c in contributions:  # fixed source order keeps the sum bit-stable
        out += c
    return FoaClip(out, sample_rate=m.sample_rate, normalization="raw")


# --- conditioning descriptors ------------------------------------------------


@dataclass(frozen=True)
class SourceFrameState:
    source_id: str
    direction: Direction
    distance: float
    active: bool
    occlusion: OcclusionDescriptor


@dataclass(frozen=True)
class ReflectionSummary:
    direction: Direction
    delay_s: float
    band_gains: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.band_gains, dtype=np.float64).reshape(N_BANDS)
        g.flags.writeable = False
        object.__setattr__(self, "band_gains", g)


@dataclass(frozen=True)
class GeometrySummary:
    volume: float
    surface_area: float
    mean_absorption: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.mean_absorption, dtype=np.float64).reshape(N_BANDS)
        a.flags.writeable = False
        object.__setattr__(self, "mean_absorption", a)


@dataclass(frozen=True)
class DescriptorFrame:
    index: int
    time: float
    sources: tuple  # of SourceFrameState
    reflections: tuple  # of ReflectionSummary


@dataclass(frozen=True)
class AcousticDescriptors:
    frames: tuple  # of DescriptorFrame
    reverb: ReverbProfile
    geometry: GeometrySummary
    frame_rate: float = DESCRIPTOR_RATE_HZ
    top_k: int = 6


def compute_descriptors(
    m: SceneManifest, top_k: int = 6, max_order: int = 2
) -> AcousticDescriptors:
    """10 Hz conditioning frames: per-source state, top-K reflections,
    reverberation profile, and geometry summary."""
    n_frames = int(math.ceil(m.duration * DESCRIPTOR_RATE_HZ))
    profile = reverb_t60(m, max_order=max_order)
    areas = np.array([s.area for s in m.surfaces])
    absorptions = np.stack([s.material.absorption for s in m.surfaces])
    total_area = float(areas.sum())
    geometry = GeometrySummary(
        volume=float(m.volume() or 0.0),
        surface_area=total_area,
        mean_absorption=(areas @ absorptions) / total_area,
    )
    soup = _soup(m)
    order = max_order if m.shoebox is not None else min(max_order, 1)

    frames = []
    for k in range(n_frames):
        t = k / DESCRIPTOR_RATE_HZ
        sample = sample_tracks(m, t)
        states = []
        reflections: list[tuple[float, ReflectionSummary]] = []
        for si, src in enumerate(m.sources):
            pos = sample.source_positions[si]
            rel = pos - sample.listener_position
            dist = float(np.linalg.norm(rel))
            if dist < DEGENERATE_DISTANCE:
                direction = Direction(0.0, 0.0)
                occ = OcclusionDescriptor(visible=True, transmission=np.ones(N_BANDS))
            else:
                direction = Direction.from_vector(rel)
                occ = occlusion_trace(pos, sample.listener_position, m, soup=soup)
            states.append(
                SourceFrameState(
                    source_id=src.source_id,
                    direction=direction,
                    distance=dist,
                    active=bool(sample.source_active[si]),
                    occlusion=occ,
                )
            )
            if dist < DEGENERATE_DISTANCE:
                continue
            try:
                paths = image_sources(m, pos, sample.listener_position, order)
            except UnsupportedOrder:
                paths = []
            for p in paths:
                if p.order == 0:
                    continue
                gains = path_attenuation(p, m.air_attenuation)
                strength = float(np.mean(gains)) / max(p.total_length, MIN_DISTANCE)
                reflections.append(
                    (
                        strength,
                        ReflectionSummary(
                            direction=p.arrival_direction,
                            delay_s=p.total_length / m.speed_of_sound,
                            band_gains=gains,
                        ),
                    )
                )
        reflections.sort(key=lambda item: (-item[0], item[1].delay_s, item[1].direction.azimuth))
        frames.append(
            DescriptorFrame(
                index=k,
                time=t,
                sources=tuple(states),
                reflections=tuple(r for _, r in reflections[:top_k]),
            )
        )
    return AcousticDescriptors(
        frames=tuple(frames), reverb=profile, geometry=geometry, top_k=top_k
    )


def descriptors_to_jsonl(d: AcousticDescriptors) -> str:
    """One JSON line per 10 Hz frame; scene-level fields repeated per line."""
    lines = []
    for f in d.frames:
        lines.append(
            json.dumps(
                {
                    "frame": f.index,
                    "t": f.time,
                    "sources": [
                        {
                            "id": s.source_id,
                            "direction": [s.direction.elevation, s.direction.azimuth],
                            "distance": s.distance,
                            "active": s.active,
                            "visible": s.occlusion.visible,
                            "transmission": [float(x) for x in s.occlusion.transmission],
                        }
                        for s in f.sources
                    ],
                    "reflections": [
                        {
                            "direction": [r.direction.elevation, r.direction.azimuth],
                            "delay_s": r.delay_s,
                            "band_gains": [float(x) for x in r.band_gains],
                        }
                        for r in f.reflections
                    ],
                    "t60": [float(x) for x in d.reverb.t60],
                    "mixing_time": d.reverb.mixing_time,
                    "geometry": {
                        "volume": d.geometry.volume,
                        "surface_area": d.geometry.surface_area,
                        "mean_absorption": [float(x) for x in d.geometry.mean_absorption],
                    },
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"


def descriptors_from_jsonl(text: str) -> AcousticDescriptors:
    frames = []
    reverb = None
    geometry = None
    for line in text.strip().splitlines():
        doc = json.loads(line)
        reverb = ReverbProfile(t60=np.array(doc["t60"]), mixing_time=doc["mixing_time"])
        geometry = GeometrySummary(
            volume=doc["geometry"]["volume"],
            surface_area=doc["geometry"]["surface_area"],
            mean_absorption=np.array(doc["geometry"]["mean_absorption"]),
        )
        frames.append(
            DescriptorFrame(
                index=int(doc["frame"]),
                time=float(doc["t"]),
                sources=tuple(
                    SourceFrameState(
                        source_id=s["id"],
                        direction=Direction(*s["direction"]),
                        distance=float(s["distance"]),
                        active=bool(s["active"]),
                        occlusion=OcclusionDescriptor(
                            visible=bool(s["visible"]),
                            transmission=np.array(s["transmission"]),
                        ),
                    )
                    for s in doc["sources"]
                ),
                reflections=tuple(
                    ReflectionSummary(
                        direction=Direction(*r["direction"]),
                        delay_s=float(r["delay_s"]),
                        band_gains=np.array(r["band_gains"]),
                    )
                    for r in doc["reflections"]
                ),
            )
        )
    if reverb is None:
        raise ValueError("empty descriptor stream")
    return AcousticDescriptors(frames=tuple(frames), reverb=reverb, geometry=geometry)
