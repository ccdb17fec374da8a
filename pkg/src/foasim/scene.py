"""Scene manifests: geometry, materials, source and listener tracks.

Manifests are JSON documents.  Geometry is always ingested, never
reconstructed; a manifest either declares a ``shoebox`` (12 triangles are
generated) or lists explicit triangles, or both (shoebox plus occluders).
Dry source signals are referenced as mono WAV paths relative to the
manifest file.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .bands import N_BANDS
from .errors import EmptyDepthMap, ManifestInvalid, ManifestSyntax, OutOfRange
from .foa import Rotation
from .wavio import read_mono_wav, write_float_wav

DEFAULT_DURATION_S = 10.0
DEFAULT_SPEED_OF_SOUND = 343.0
MIN_TRIANGLE_AREA = 1e-9

SEMANTIC_CLASSES = (
    "wall",
    "floor",
    "ceiling",
    "furniture",
    "glass",
    "curtain",
    "person",
    "other",
)

SHOEBOX_FACES = ("x0", "x1", "y0", "y1", "z0", "z1")
_DEFAULT_FACE_CLASSES = {
    "x0": "wall",
    "x1": "wall",
    "y0": "floor",
    "y1": "ceiling",
    "z0": "wall",
    "z1": "wall",
}


@dataclass(frozen=True)
class MaterialBands:
    """Per-octave-band absorption and scattering coefficients."""

    absorption: np.ndarray
    scattering: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.absorption, dtype=np.float64).reshape(-1)
        s = np.asarray(self.scattering, dtype=np.float64).reshape(-1)
        if a.size != N_BANDS or s.size != N_BANDS:
            raise ValueError(f"materials need exactly {N_BANDS} bands")
        a.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "absorption", a)
        object.__setattr__(self, "scattering", s)

    def __eq__(self, other):
        if not isinstance(other, MaterialBands):
            return NotImplemented
        return np.array_equal(self.absorption, other.absorption) and np.array_equal(
            self.scattering, other.scattering
        )

    __hash__ = None


def _load_default_table() -> dict:
    with resources.files("foasim.materials").joinpath("default_table.json").open() as f:
        return json.load(f)


_MATERIAL_TABLE: dict[str, MaterialBands] | None = None


def material_table() -> dict[str, MaterialBands]:
    global _MATERIAL_TABLE
    if _MATERIAL_TABLE is None:
        raw = _load_default_table()
        _MATERIAL_TABLE = {
            name: MaterialBands(item["absorption"], item["scattering"])
            for name, item in raw["classes"].items()
        }
    return _MATERIAL_TABLE


def assign_materials(semantic_class: str) -> MaterialBands:
    """Deterministic class -> material lookup; unknown labels get 'other'."""
    table = material_table()
    return table.get(semantic_class, table["other"])


@dataclass(frozen=True)
class Surface:
    """A triangle with a semantic class and acoustic material."""

    vertices: np.ndarray  # shape (3, 3)
    semantic_class: str
    material: MaterialBands

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(3, 3)
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)

    @property
    def area(self) -> float:
        a, b, c = self.vertices
        return 0.5 * float(np.linalg.norm(np.cross(b - a, c - a)))

    @property
    def normal(self) -> np.ndarray:
        a, b, c = self.vertices
        n = np.cross(b - a, c - a)
        return n / np.linalg.norm(n)

    def __eq__(self, other):
        if not isinstance(other, Surface):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and self.semantic_class == other.semantic_class
            and self.material == other.material
        )

    __hash__ = None


@dataclass(frozen=True)
class SourceTrack:
    source_id: str
    dry_signal: np.ndarray
    position_times: np.ndarray  # strictly increasing, seconds
    positions: np.ndarray  # shape (k, 3)
    active_times: np.ndarray
    active_values: np.ndarray  # bool, zero-order hold
    dry_path: str = ""  # relative WAV path, kept for serialization

    def __post_init__(self):
        for name in ("dry_signal", "position_times", "active_times"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        act = np.asarray(self.active_values, dtype=bool).reshape(-1)
        act.flags.writeable = False
        object.__setattr__(self, "active_values", act)

    def position_at(self, t: float) -> np.ndarray:
        return _lerp_track(self.position_times, self.positions, t)

    def active_at(self, t: float) -> bool:
        idx = int(np.searchsorted(self.active_times, t, side="right")) - 1
        return bool(self.active_values[max(idx, 0)])

    def __eq__(self, other):
        if not isinstance(other, SourceTrack):
            return NotImplemented
        return (
            self.source_id == other.source_id
            and np.array_equal(self.dry_signal, other.dry_signal)
            and np.array_equal(self.position_times, other.position_times)
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.active_times, other.active_times)
            and np.array_equal(self.active_values, other.active_values)
        )

    __hash__ = None


@dataclass(frozen=True)
class ListenerTrack:
    position_times: np.ndarray
    positions: np.ndarray  # shape (k, 3)
    orientation_times: np.ndarray
    orientations: tuple  # of Rotation

    def __post_init__(self):
        for name in ("position_times", "orientation_times"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "orientations", tuple(self.orientations))

    def position_at(self, t: float) -> np.ndarray:
        return _lerp_track(self.position_times, self.positions, t)

    def orientation_at(self, t: float) -> Rotation:
        times = self.orientation_times
        if t <= times[0]:
            return self.orientations[0]
        if t >= times[-1]:
            return self.orientations[-1]
        hi = int(np.searchsorted(times, t, side="right"))
        lo = hi - 1
        span = times[hi] - times[lo]
        frac = (t - times[lo]) / span
        return Rotation.slerp(self.orientations[lo], self.orientations[hi], float(frac))

    def __eq__(self, other):
        if not isinstance(other, ListenerTrack):
            return NotImplemented
        return (
            np.array_equal(self.position_times, other.position_times)
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.orientation_times, other.orientation_times)
            and self.orientations == other.orientations
        )

    __hash__ = None


def _lerp_track(times: np.ndarray, values: np.ndarray, t: float) -> np.ndarray:
    if t <= times[0]:
        return values[0].copy()
    if t >= times[-1]:
        return values[-1].copy()
    hi = int(np.searchsorted(times, t, side="right"))
    lo = hi - 1
    frac = (t - times[lo]) / (times[hi] - times[lo])
    return values[lo] + frac * (values[hi] - values[lo])


@dataclass(frozen=True)
class ShoeboxSpec:
    dimensions: np.ndarray  # (Lx, Ly, Lz)
    face_classes: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.dimensions, dtype=np.float64).reshape(3)
        d.flags.writeable = False
        object.__setattr__(self, "dimensions", d)
        classes = dict(_DEFAULT_FACE_CLASSES)
        classes.update(self.face_classes or {})
        object.__setattr__(self, "face_classes", classes)

    def face_material(self, face: str, overrides: dict) -> MaterialBands:
        cls = self.face_classes[face]
        if cls in overrides:
            return overrides[cls]
        return assign_materials(cls)

    def __eq__(self, other):
        if not isinstance(other, ShoeboxSpec):
            return NotImplemented
        return (
            np.array_equal(self.dimensions, other.dimensions)
            and self.face_classes == other.face_classes
        )

    __hash__ = None


def shoebox_surfaces(spec: ShoeboxSpec, overrides: dict | None = None) -> list[Surface]:
    """The 12 triangles of an axis-aligned box spanning [0,L] on each axis."""
    overrides = overrides or {}
    lx, ly, lz = (float(v) for v in spec.dimensions)
    corners = {
        (i, j, k): np.array([i * lx, j * ly, k * lz])
        for i in (0, 1)
        for j in (0, 1)
        for k in (0, 1)
    }
    # each face as two triangles; corner keys per face
    faces = {
        "x0": [(0, 0, 0), (0, 1, 0), (0, 1, 1), (0, 0, 1)],
        "x1": [(1, 0, 0), (1, 0, 1), (1, 1, 1), (1, 1, 0)],
        "y0": [(0, 0, 0), (0, 0, 1), (1, 0, 1), (1, 0, 0)],
        "y1": [(0, 1, 0), (1, 1, 0), (1, 1, 1), (0, 1, 1)],
        "z0": [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)],
        "z1": [(0, 0, 1), (0, 1, 1), (1, 1, 1), (1, 0, 1)],
    }
    surfaces = []
    for face in SHOEBOX_FACES:
        quad = [corners[c] for c in faces[face]]
        material = spec.face_material(face, overrides)
        cls = spec.face_classes[face]
        surfaces.append(Surface(np.stack([quad[0], quad[1], quad[2]]), cls, material))
        surfaces.append(Surface(np.stack([quad[0], quad[2], quad[3]]), cls, material))
    return surfaces


@dataclass(frozen=True)
class SceneManifest:
    surfaces: tuple  # all surfaces, shoebox triangles first when present
    sources: tuple  # of SourceTrack
    listener: ListenerTrack
    sample_rate: int = 16000
    duration: float = DEFAULT_DURATION_S
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND
    air_attenuation: np.ndarray = field(default_factory=lambda: np.zeros(N_BANDS))
    room_volume: float | None = None
    shoebox: ShoeboxSpec | None = None
    seed: int = 0
    material_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "surfaces", tuple(self.surfaces))
        object.__setattr__(self, "sources", tuple(self.sources))
        gamma = np.asarray(self.air_attenuation, dtype=np.float64).reshape(-1)
        gamma.flags.writeable = False
        object.__setattr__(self, "air_attenuation", gamma)

    @property
    def extra_surfaces(self) -> tuple:
        """Surfaces beyond the generated shoebox shell (occluders etc.)."""
        if self.shoebox is None:
            return self.surfaces
        return self.surfaces[12:]

    def volume(self) -> float | None:
        if self.room_volume is not None:
            return self.room_volume
        if self.shoebox is not None:
            return float(np.prod(self.shoebox.dimensions))
        return None

    def total_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    def __eq__(self, other):
        if not isinstance(other, SceneManifest):
            return NotImplemented
        return (
            self.surfaces == other.surfaces
            and self.sources == other.sources
            and self.listener == other.listener
            and self.sample_rate == other.sample_rate
            and self.duration == other.duration
            and self.speed_of_sound == other.speed_of_sound
            and np.array_equal(self.air_attenuation, other.air_attenuation)
            and self.volume() == other.volume()
            and self.shoebox == other.shoebox
            and self.seed == other.seed
        )

    __hash__ = None


@dataclass(frozen=True)
class DepthMap:
    """Equirectangular depth image; depths <= 0 mark invalid pixels."""

    depth: np.ndarray  # shape (height, width), meters

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError("depth must be a 2-D array")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "depth", d)

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel (elevation, azimuth) grids."""
        u = np.arange(self.width)
        v = np.arange(self.height)
        phi = 2 * math.pi * (u + 0.5) / self.width - math.pi
        theta = math.pi / 2 - math.pi * (v + 0.5) / self.height
        return np.meshgrid(theta, phi, indexing="ij")


def back_project(dm: DepthMap) -> np.ndarray:
    """Back-project valid depth pixels into 3-D points; ||p|| equals the depth."""
    theta, phi = dm.angles()
    valid = dm.depth > 0
    if not np.any(valid):
        raise EmptyDepthMap("depth map has no valid pixels")
    d = dm.depth[valid]
    th = theta[valid]
    ph = phi[valid]
    points = np.stack(
        [d * np.cos(th) * np.cos(ph), d * np.sin(th), d * np.cos(th) * np.sin(ph)],
        axis=1,
    )
    return points


@dataclass(frozen=True)
class SceneSample:
    source_positions: np.ndarray  # (n_sources, 3)
    source_active: np.ndarray  # (n_sources,) bool
    listener_position: np.ndarray
    listener_orientation: Rotation


def sample_tracks(m: SceneManifest, t: float) -> SceneSample:
    """Sample all tracks at time ``t``: linear positions, slerp orientation,
    zero-order-hold activity."""
    if t < 0 or t > m.duration:
        raise OutOfRange(f"t={t} outside [0, {m.duration}]")
    positions = np.stack([src.position_at(t) for src in m.sources])
    active = np.array([src.active_at(t) for src in m.sources], dtype=bool)
    return SceneSample(
        source_positions=positions,
        source_active=active,
        listener_position=m.listener.position_at(t),
        listener_orientation=m.listener.orientation_at(t),
    )


# --- JSON loading / validation / serialization -----------------------------


def _structural(cond: bool, msg: str):
    if not cond:
        raise ManifestSyntax(msg)


def _parse_material(raw, where: str) -> MaterialBands:
    _structural(isinstance(raw, dict), f"{where} must be an object")
    _structural("absorption" in raw, f"{where}.absorption missing")
    absorption = raw["absorption"]
    scattering = raw.get("scattering", [0.1] * N_BANDS)
    _structural(
        isinstance(absorption, list) and len(absorption) == N_BANDS,
        f"{where}.absorption must be a list of {N_BANDS} numbers",
    )
    _structural(
        isinstance(scattering, list) and len(scattering) == N_BANDS,
        f"{where}.scattering must be a list of {N_BANDS} numbers",
    )
    return MaterialBands(absorption, scattering)


def _resolve_surface_material(raw, named: dict, where: str) -> tuple[str, MaterialBands]:
    cls = raw.get("class", "other")
    if "material" in raw:
        mat = raw["material"]
        if isinstance(mat, str):
            _structural(mat in named, f"{where}.material references unknown material {mat!r}")
            return cls, named[mat]
        return cls, _parse_material(mat, f"{where}.material")
    if cls in named:
        return cls, named[cls]
    return cls, assign_materials(cls)


def _parse_keyframes(raw, where: str, key: str = "p", dim: int = 3):
    _structural(isinstance(raw, list) and len(raw) >= 1, f"{where} must be a non-empty list")
    times, values = [], []
    for i, item in enumerate(raw):
        _structural(
            isinstance(item, dict) and "t" in item and key in item,
            f"{where}[{i}] must be an object with 't' and '{key}'",
        )
        times.append(float(item["t"]))
        v = item[key]
        if dim == 1:
            values.append(v)
        else:
            _structural(
                isinstance(v, list) and len(v) == dim,
                f"{where}[{i}].{key} must be a list of {dim} numbers",
            )
            values.append([float(c) for c in v])
    return np.array(times), values


def parse_manifest(doc: dict, base_dir: Path) -> SceneManifest:
    """Build a SceneManifest from a parsed JSON document.

    Structural problems raise ManifestSyntax; value-range problems are left
    to :func:`validate`.
    """
    _structural(isinstance(doc, dict), "manifest root must be an object")
    sample_rate = int(doc.get("sample_rate", 16000))
    duration = float(doc.get("duration_s", DEFAULT_DURATION_S))
    speed = float(doc.get("speed_of_sound", DEFAULT_SPEED_OF_SOUND))
    gamma = doc.get("air_attenuation_bands", [0.0] * N_BANDS)
    _structural(
        isinstance(gamma, list) and len(gamma) == N_BANDS,
        f"air_attenuation_bands must be a list of {N_BANDS} numbers",
    )

    named = {}
    for name, raw in doc.get("materials", {}).items():
        named[name] = _parse_material(raw, f"materials.{name}")

    shoebox = None
    surfaces: list[Surface] = []
    if "shoebox" in doc:
        sb = doc["shoebox"]
        _structural(
            isinstance(sb, dict) and all(k in sb for k in ("Lx", "Ly", "Lz")),
            "shoebox must be an object with Lx, Ly, Lz",
        )
        shoebox = ShoeboxSpec(
            dimensions=[float(sb["Lx"]), float(sb["Ly"]), float(sb["Lz"])],
            face_classes=sb.get("classes", {}),
        )
        surfaces.extend(shoebox_surfaces(shoebox, named))

    for i, raw in enumerate(doc.get("surfaces", [])):
        where = f"surfaces[{i}]"
        _structural(
            isinstance(raw, dict) and "vertices" in raw,
            f"{where} must be an object with 'vertices'",
        )
        verts = raw["vertices"]
        _structural(
            isinstance(verts, list)
            and len(verts) == 3
            and all(isinstance(v, list) and len(v) == 3 for v in verts),
            f"{where}.vertices must be 3 points of 3 coordinates",
        )
        cls, mat = _resolve_surface_material(raw, named, where)
        surfaces.append(Surface(np.array(verts, dtype=np.float64), cls, mat))

    _structural(isinstance(doc.get("sources"), list), "sources must be a list")
    sources = []
    total = int(round(duration * sample_rate))
    for i, raw in enumerate(doc["sources"]):
        where = f"sources[{i}]"
        _structural(isinstance(raw, dict), f"{where} must be an object")
        _structural("dry_signal" in raw, f"{where}.dry_signal missing")
        _structural("positions" in raw, f"{where}.positions missing")
        dry_path = raw["dry_signal"]
        _structural(isinstance(dry_path, str), f"{where}.dry_signal must be a WAV path")
        try:
            dry, dry_rate = read_mono_wav(base_dir / dry_path)
        except FileNotFoundError as exc:
            raise ManifestSyntax(f"{where}.dry_signal: {exc}") from exc
        if dry_rate != sample_rate:
            raise ManifestSyntax(
                f"{where}.dry_signal sample rate {dry_rate} != manifest {sample_rate}"
            )
        pt, pv = _parse_keyframes(raw["positions"], f"{where}.positions")
        active_raw = raw.get("active", [{"t": 0.0, "on": True}])
        at, av = _parse_keyframes(active_raw, f"{where}.active", key="on", dim=1)
        sources.append(
            SourceTrack(
                source_id=str(raw.get("id", f"src{i}")),
                dry_signal=dry[:total],
                position_times=pt,
                positions=np.array(pv),
                active_times=at,
                active_values=np.array([bool(v) for v in av]),
                dry_path=dry_path,
            )
        )

    _structural(isinstance(doc.get("listener"), dict), "listener must be an object")
    lst = doc["listener"]
    _structural("positions" in lst, "listener.positions missing")
    pt, pv = _parse_keyframes(lst["positions"], "listener.positions")
    ori_raw = lst.get("orientations", [{"t": 0.0, "q": [1.0, 0.0, 0.0, 0.0]}])
    ot, ov = _parse_keyframes(ori_raw, "listener.orientations", key="q", dim=4)
    listener = ListenerTrack(
        position_times=pt,
        positions=np.array(pv),
        orientation_times=ot,
        orientations=tuple(Rotation(*q) for q in ov),
    )

    return SceneManifest(
        surfaces=tuple(surfaces),
        sources=tuple(sources),
        listener=listener,
        sample_rate=sample_rate,
        duration=duration,
        speed_of_sound=speed,
        air_attenuation=np.array([float(g) for g in gamma]),
        room_volume=(float(doc["room_volume_m3"]) if "room_volume_m3" in doc else None),
        shoebox=shoebox,
        seed=int(doc.get("seed", 0)),
        material_overrides=named,
    )


def validate(m: SceneManifest) -> list[str]:
    """Check every manifest invariant; returns violations with JSON-pointer
    style paths (empty list when valid)."""
    v: list[str] = []
    if m.sample_rate <= 0:
        v.append("sample_rate must be > 0")
    if m.duration <= 0:
        v.append("duration_s must be > 0")
    if m.speed_of_sound <= 0:
        v.append("speed_of_sound must be > 0")
    if m.air_attenuation.size != N_BANDS:
        v.append(f"air_attenuation_bands must have {N_BANDS} entries")
    else:
        for i, g in enumerate(m.air_attenuation):
            if g < 0:
                v.append(f"air_attenuation_bands[{i}] must be >= 0")
    if m.shoebox is not None:
        for axis, size in zip(("Lx", "Ly", "Lz"), m.shoebox.dimensions):
            if size <= 0:
                v.append(f"shoebox.{axis} must be > 0")
    if m.room_volume is not None and m.room_volume <= 0:
        v.append("room_volume_m3 must be > 0")

    for i, s in enumerate(m.surfaces):
        if s.area <= MIN_TRIANGLE_AREA:
            v.append(f"surfaces[{i}] degenerate triangle (area <= {MIN_TRIANGLE_AREA})")
        for j, a in enumerate(s.material.absorption):
            if not (0.0 <= a <= 1.0):
                v.append(f"surfaces[{i}].material.absorption[{j}] out of [0,1]")
        for j, sc in enumerate(s.material.scattering):
            if not (0.0 <= sc <= 1.0):
                v.append(f"surfaces[{i}].material.scattering[{j}] out of [0,1]")

    if len(m.sources) == 0:
        v.append("sources must contain at least one source")
    total = m.total_samples()
    for i, src in enumerate(m.sources):
        if np.any(np.diff(src.position_times) <= 0):
            v.append(f"sources[{i}].positions timestamps not strictly increasing")
        if np.any(np.diff(src.active_times) <= 0):
            v.append(f"sources[{i}].active timestamps not strictly increasing")
        if src.dry_signal.size < total:
            v.append(
                f"sources[{i}].dry_signal has {src.dry_signal.size} samples, "
                f"scene duration needs {total}"
            )

    if np.any(np.diff(m.listener.position_times) <= 0):
        v.append("listener.positions timestamps not strictly increasing")
    if np.any(np.diff(m.listener.orientation_times) <= 0):
        v.append("listener.orientations timestamps not strictly increasing")
    for i, q in enumerate(m.listener.orientations):
        if not q.is_unit(tol=1e-6):
            v.append(f"listener.orientations[{i}].q not unit norm")
    return v


def load_manifest(path) -> SceneManifest:
    """Parse and validate a scene manifest file."""
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ManifestSyntax(f"{path}: {exc}") from exc
    m = parse_manifest(doc, path.parent)
    violations = validate(m)
    if violations:
        raise ManifestInvalid(violations)
    return m


def manifest_to_doc(m: SceneManifest) -> dict:
    """Canonical JSON document for a manifest (shoebox shell not re-listed)."""
    doc: dict = {
        "sample_rate": m.sample_rate,
        "duration_s": m.duration,
        "speed_of_sound": m.speed_of_sound,
        "air_attenuation_bands": [float(g) for g in m.air_attenuation],
        "seed": m.seed,
    }
    if m.shoebox is not None:
        lx, ly, lz = (float(x) for x in m.shoebox.dimensions)
        doc["shoebox"] = {"Lx": lx, "Ly": ly, "Lz": lz, "classes": dict(m.shoebox.face_classes)}
    if m.room_volume is not None:
        doc["room_volume_m3"] = m.room_volume
    if m.material_overrides:
        doc["materials"] = {
            name: {
                "absorption": [float(a) for a in mat.absorption],
                "scattering": [float(s) for s in mat.scattering],
            }
            for name, mat in m.material_overrides.items()
        }
    extras = m.extra_surfaces
    if extras:
        doc["surfaces"] = [
            {
                "vertices": [[float(c) for c in vtx] for vtx in s.vertices],
                "class": s.semantic_class,
                "material": {
                    "absorption": [float(a) for a in s.material.absorption],
                    "scattering": [float(x) for x in s.material.scattering],
                },
            }
            for s in extras
        ]
    doc["sources"] = [
        {
            "id": src.source_id,
            "dry_signal": src.dry_path or f"dry_{src.source_id}.wav",
            "positions": [
                {"t": float(t), "p": [float(c) for c in p]}
                for t, p in zip(src.position_times, src.positions)
            ],
            "active": [
                {"t": float(t), "on": bool(a)}
                for t, a in zip(src.active_times, src.active_values)
            ],
        }
        for src in m.sources
    ]
    doc["listener"] = {
        "positions": [
            {"t": float(t), "p": [float(c) for c in p]}
            for t, p in zip(m.listener.position_times, m.listener.positions)
        ],
        "orientations": [
            {"t": float(t), "q": [q.w, q.x, q.y, q.z]}
            for t, q in zip(m.listener.orientation_times, m.listener.orientations)
        ],
    }
    return doc


def save_manifest(m: SceneManifest, path) -> None:
    """Write the manifest JSON plus any in-memory dry signals next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = manifest_to_doc(m)
    for src, raw in zip(m.sources, doc["sources"]):
        wav_path = path.parent / raw["dry_signal"]
        if not wav_path.exists():
            write_float_wav(wav_path, src.dry_signal, m.sample_rate)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)
