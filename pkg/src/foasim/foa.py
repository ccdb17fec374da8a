"""First-order ambisonics core: encoding, normalization, rotation, binaural
decoding, and direction-of-arrival estimation.

Conventions used throughout the engine:

* Axes: ``x`` forward, ``y`` up, ``z`` right.  A direction with elevation
  ``theta`` and azimuth ``phi`` maps to the unit vector
  ``(cos(theta)cos(phi), sin(theta), cos(theta)sin(phi))``; azimuth grows
  toward ``+z``.
* Channels: order ``W, X, Y, Z`` with SN3D gains and W carrying the full
  signal, so ``X^2 + Y^2 + Z^2 <= W^2`` sample-wise for a single plane wave.
* Rotations: unit quaternions ``(w, x, y, z)``, Hamilton convention.

An adapter to z-up ACN/SN3D (AmbiX) channel ordering is provided for export
only; all internal math stays in the convention above.

All types are immutable after construction and every operation is a pure
function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import EmptyInput, InvalidHrirSet, InvalidRotation, SampleRateMismatch

DEFAULT_SAMPLE_RATE = 16000

#: std below this floor is clamped so constant channels never divide by zero.
STD_CLAMP = 1e-8

#: windows whose mean intensity norm falls at or below this multiple of the
#: clip's mean W power are treated as silent and omitted from DOA output.
DOA_SILENCE_FLOOR = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Direction:
    """Elevation/azimuth pair in radians; elevation in [-pi/2, pi/2],
    azimuth in [-pi, pi)."""

    elevation: float
    azimuth: float

    def __post_init__(self):
        if not (-math.pi / 2 - 1e-12 <= self.elevation <= math.pi / 2 + 1e-12):
            raise ValueError(f"elevation {self.elevation} outside [-pi/2, pi/2]")
        if not (-math.pi - 1e-12 <= self.azimuth < math.pi + 1e-12):
            raise ValueError(f"azimuth {self.azimuth} outside [-pi, pi)")

    def unit_vector(self) -> np.ndarray:
        ct = math.cos(self.elevation)
        return np.array(
            [
                ct * math.cos(self.azimuth),
                math.sin(self.elevation),
                ct * math.sin(self.azimuth),
            ]
        )

    @classmethod
    def from_vector(cls, v) -> "Direction":
        v = np.asarray(v, dtype=np.float64)
        n = np.linalg.norm(v)
        if n == 0.0:
            raise ValueError("zero vector has no direction")
        u = v / n
        elevation = math.asin(max(-1.0, min(1.0, float(u[1]))))
        azimuth = math.atan2(float(u[2]), float(u[0]))
        if azimuth >= math.pi:  # atan2 may return exactly pi
            azimuth -= 2 * math.pi
        return cls(elevation=elevation, azimuth=azimuth)

    def angle_to(self, other: "Direction") -> float:
        """Angle in radians between the two directions."""
        d = float(np.dot(self.unit_vector(), other.unit_vector()))
        return math.acos(max(-1.0, min(1.0, d)))


@dataclass(frozen=True)
class FoaClip:
    """4-channel (W, X, Y, Z) signal of equal-length sample arrays."""

    channels: np.ndarray  # shape (4, n)
    sample_rate: int = DEFAULT_SAMPLE_RATE
    normalization: str = "sn3d"  # "raw" or "sn3d"

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.ndim != 2 or ch.shape[0] != 4:
            raise ValueError(f"channels must have shape (4, n), got {ch.shape}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.normalization not in ("raw", "sn3d"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        object.__setattr__(self, "channels", _readonly(ch))

    @property
    def frame_count(self) -> int:
        return self.channels.shape[1]

    @property
    def duration(self) -> float:
        return self.frame_count / self.sample_rate

    @property
    def w(self) -> np.ndarray:
        return self.channels[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.channels[1:4]

    def __eq__(self, other):
        if not isinstance(other, FoaClip):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and self.normalization == other.normalization
            and self.channels.shape == other.channels.shape
            and bool(np.array_equal(self.channels, other.channels))
        )

    __hash__ = None


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion (w, x, y, z)."""

    w: float
    x: float
    y: float
    z: float

    @property
    def quaternion(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def norm(self) -> float:
        return float(np.linalg.norm(self.quaternion))

    def is_unit(self, tol: float = 1e-9) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def require_unit(self):
        if not self.is_unit():
            raise InvalidRotation(f"quaternion norm {self.norm()} != 1")

    def normalized(self) -> "Rotation":
        n = self.norm()
        if n == 0.0:
            raise InvalidRotation("zero quaternion")
        return Rotation(self.w / n, self.x / n, self.y / n, self.z / n)

    @property
    def matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation":
        axis = np.asarray(axis, dtype=np.float64)
        n = np.linalg.norm(axis)
        if n == 0.0:
            raise InvalidRotation("zero rotation axis")
        axis = axis / n
        half = angle / 2.0
        s = math.sin(half)
        return cls(math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s)

    @classmethod
    def from_yaw(cls, psi: float) -> "Rotation":
        """Yaw about the up axis; a source at azimuth ``a`` moves to ``a + psi``."""
        return cls.from_axis_angle([0.0, 1.0, 0.0], -psi)

    def __matmul__(self, other: "Rotation") -> "Rotation":
        """Composition: ``(r2 @ r1)`` applies ``r1`` first, then ``r2``."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Rotation(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def inverse(self) -> "Rotation":
        return Rotation(self.w, -self.x, -self.y, -self.z)

    def apply(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=np.float64)

    @classmethod
    def slerp(cls, a: "Rotation", b: "Rotation", t: float) -> "Rotation":
        qa, qb = a.quaternion, b.quaternion
        dot = float(np.dot(qa, qb))
        if dot < 0.0:  # take the short arc
            qb, dot = -qb, -dot
        if dot > 1.0 - 1e-12:
            q = qa + t * (qb - qa)
            q = q / np.linalg.norm(q)
        else:
            omega = math.acos(max(-1.0, min(1.0, dot)))
            so = math.sin(omega)
            q = (math.sin((1 - t) * omega) / so) * qa + (math.sin(t * omega) / so) * qb
        return cls(*(float(c) for c in q))


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean and (strictly positive) standard deviation."""

    mean: np.ndarray  # shape (4,)
    std: np.ndarray  # shape (4,)

    def __post_init__(self):
        mean = _readonly(np.asarray(self.mean, dtype=np.float64).reshape(4))
        std = _readonly(np.asarray(self.std, dtype=np.float64).reshape(4))
        if np.any(std <= 0):
            raise ValueError("std must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class HrirEntry:
    direction: Direction
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "left", _readonly(self.left))
        object.__setattr__(self, "right", _readonly(self.right))


@dataclass(frozen=True)
class HrirSet:
    entries: tuple
    sample_rate: int = DEFAULT_SAMPLE_RATE
    fir_length: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.entries and self.fir_length == 0:
            object.__setattr__(self, "fir_length", len(self.entries[0].left))

    def validate(self):
        if len(self.entries) < 6:
            raise InvalidHrirSet(f"need >= 6 HRIR entries, got {len(self.entries)}")
        seen = set()
        for e in self.entries:
            if len(e.left) != self.fir_length or len(e.right) != self.fir_length:
                raise InvalidHrirSet("all FIRs must share fir_length")
            key = (round(e.direction.elevation, 12), round(e.direction.azimuth, 12))
            if key in seen:
                raise InvalidHrirSet(f"duplicate HRIR direction {key}")
            seen.add(key)

    def nearest(self, direction: Direction) -> HrirEntry:
        u = direction.unit_vector()
        best, best_dot = None, -2.0
        for e in self.entries:
            d = float(np.dot(u, e.direction.unit_vector()))
            if d > best_dot:
                best, best_dot = e, d
        return best


#: the six virtual-speaker directions of the octahedron decode layout.
OCTAHEDRON_DIRECTIONS = (
    Direction(0.0, 0.0),  # +x front
    Direction(0.0, -math.pi),  # -x back
    Direction(math.pi / 2, 0.0),  # +y up
    Direction(-math.pi / 2, 0.0),  # -y down
    Direction(0.0, math.pi / 2),  # +z right
    Direction(0.0, -math.pi / 2),  # -z left
)


def encode_source(signal, direction: Direction) -> FoaClip:
    """Encode a mono signal arriving from ``direction`` into an FOA clip."""
    s = np.asarray(signal, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise EmptyInput("cannot encode an empty signal")
    u = direction.unit_vector()
    channels = np.empty((4, s.size))
    channels[0] = s
    channels[1] = s * u[0]
    channels[2] = s * u[1]
    channels[3] = s * u[2]
    return FoaClip(channels=channels, normalization="sn3d")


def zscore_normalize(clip: FoaClip) -> tuple[FoaClip, ChannelStats]:
    """Z-score each channel; constant channels get their std clamped."""
    if clip.frame_count == 0:
        raise EmptyInput("cannot normalize an empty clip")
    mean = clip.channels.mean(axis=1)
    std = clip.channels.std(axis=1)
    std = np.maximum(std, STD_CLAMP)
    out = (clip.channels - mean[:, None]) / std[:, None]
    stats = ChannelStats(mean=mean, std=std)
    return FoaClip(out, sample_rate=clip.sample_rate, normalization="raw"), stats


def zscore_denormalize(clip: FoaClip, stats: ChannelStats, normalization: str = "raw") -> FoaClip:
    out = clip.channels * stats.std[:, None] + stats.mean[:, None]
    return FoaClip(out, sample_rate=clip.sample_rate, normalization=normalization)


def rotate(clip: FoaClip, rotation: Rotation) -> FoaClip:
    """Rotate the sound field; W is untouched, (X, Y, Z) get the 3x3 matrix."""
    rotation.require_unit()
    out = np.empty_like(clip.channels)
    out[0] = clip.channels[0]
    out[1:4] = rotation.matrix @ clip.channels[1:4]
    return FoaClip(out, sample_rate=clip.sample_rate, normalization=clip.normalization)


def decode_binaural(clip: FoaClip, hrirs: HrirSet) -> tuple[np.ndarray, np.ndarray]:
    """Virtual-speaker binaural decode over the octahedron layout.

    Each speaker feed ``(W + d_k . (X,Y,Z)) / 6`` is convolved with the
    nearest-direction HRIR pair and summed.  Output length is
    ``clip.frame_count + fir_length - 1``.
    """
    hrirs.validate()
    if clip.sample_rate != hrirs.sample_rate:
        raise SampleRateMismatch(
            f"clip rate {clip.sample_rate} != HRIR rate {hrirs.sample_rate}"
        )
    n_out = clip.frame_count + hrirs.fir_length - 1
    left = np.zeros(n_out)
    right = np.zeros(n_out)
    w = clip.channels[0]
    xyz = clip.channels[1:4]
    for speaker in OCTAHEDRON_DIRECTIONS:
        d = speaker.unit_vector()
        feed = (w + d @ xyz) / 6.0
        entry = hrirs.nearest(speaker)
        left += fftconvolve(feed, entry.left)
        right += fftconvolve(feed, entry.right)
    return left, right


def estimate_doa(clip: FoaClip, window: int) -> list[tuple[float, Direction]]:
    """Per-window DOA from the pseudo-intensity vector ``mean(W * (X,Y,Z))``.

    Windows whose intensity norm falls at or below the silence floor are
    omitted; an all-silent clip yields an empty list.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if clip.frame_count == 0:
        raise EmptyInput("cannot estimate DOA of an empty clip")
    n_windows = clip.frame_count // window
    if n_windows == 0:
        return []
    w = clip.channels[0, : n_windows * window].reshape(n_windows, window)
    floor = DOA_SILENCE_FLOOR * float(np.mean(clip.channels[0] ** 2))
    out = []
    intensity = np.empty((n_windows, 3))
    for i in range(3):
        ch = clip.channels[1 + i, : n_windows * window].reshape(n_windows, window)
        intensity[:, i] = np.mean(w * ch, axis=1)
    norms = np.linalg.norm(intensity, axis=1)
    for k in range(n_windows):
        if norms[k] <= floor:
            continue
        t = (k * window + window / 2.0) / clip.sample_rate
        out.append((t, Direction.from_vector(intensity[k])))
    return out


# --- AmbiX export adapter -------------------------------------------------
#
# AmbiX uses ACN channel order (W, Y, Z, X) with SN3D gains and axes
# x forward / y left / z up.  Internally we use x forward / y up / z right,
# so AmbiX-Y = -internal-Z and AmbiX-Z = internal-Y.


def to_ambix_channels(clip: FoaClip) -> np.ndarray:
    c = clip.channels
    return np.stack([c[0], -c[3], c[2], c[1]])


def from_ambix_channels(channels, sample_rate: int = DEFAULT_SAMPLE_RATE) -> FoaClip:
    a = np.asarray(channels, dtype=np.float64)
    return FoaClip(np.stack([a[0], a[3], a[2], -a[1]]), sample_rate=sample_rate)


def identity_hrir_set(sample_rate: int = DEFAULT_SAMPLE_RATE) -> HrirSet:
    """Single-tap unit-impulse HRIRs at the octahedron directions."""
    delta = np.array([1.0])
    entries = [HrirEntry(d, delta, delta) for d in OCTAHEDRON_DIRECTIONS]
    return HrirSet(entries=tuple(entries), sample_rate=sample_rate, fir_length=1)


def synthetic_hrir_set(sample_rate: int = DEFAULT_SAMPLE_RATE, fir_length: int = 32) -> HrirSet:
    """Toy left/right-symmetric HRIRs: interaural delay plus head shadow.

    Not a measured set; just enough lateralization for the listener console.
    """
    entries = []
    max_delay = int(round(0.0007 * sample_rate))  # ~0.7 ms ear-to-ear
    for d in OCTAHEDRON_DIRECTIONS:
        u = d.unit_vector()
        lateral = float(u[2])  # +1 hard right, -1 hard left
        delay_r = int(round(max_delay * (1.0 - lateral) / 2.0))
        delay_l = int(round(max_delay * (1.0 + lateral) / 2.0))
        gain_r = 1.0 + 0.4 * lateral
        gain_l = 1.0 - 0.4 * lateral
        left = np.zeros(fir_length)
        right = np.zeros(fir_length)
        left[delay_l] = gain_l
        right[delay_r] = gain_r
        entries.append(HrirEntry(d, left, right))
    return HrirSet(entries=tuple(entries), sample_rate=sample_rate, fir_length=fir_length)
