import math
from pathlib import Path

import numpy as np
import pytest

from foasim.foa import Rotation
from foasim.scene import (
    ListenerTrack,
    SceneManifest,
    ShoeboxSpec,
    SourceTrack,
    shoebox_surfaces,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


def build_shoebox_manifest(
    dims=(4.0, 3.0, 5.0),
    source_pos=(1.0, 1.5, 2.5),
    listener_pos=(3.0, 1.5, 2.5),
    duration=1.0,
    sample_rate=16000,
    dry=None,
    gamma=None,
    seed=7,
    extra_surfaces=(),
    source_positions_track=None,
    n_sources=1,
    face_classes=None,
):
    """Programmatic shoebox manifest for tests."""
    n = int(round(duration * sample_rate))
    rng = np.random.default_rng(seed)
    sources = []
    for i in range(n_sources):
        sig = dry if dry is not None else 0.3 * rng.standard_normal(n)
        if source_positions_track is not None:
            times, points = source_positions_track
        else:
            times, points = np.array([0.0]), np.array([source_pos])
        sources.append(
            SourceTrack(
                source_id=f"s{i}",
                dry_signal=np.asarray(sig, dtype=np.float64)[:n],
                position_times=times,
                positions=points,
                active_times=np.array([0.0]),
                active_values=np.array([True]),
                dry_path=f"dry_s{i}.wav",
            )
        )
    listener = ListenerTrack(
        position_times=np.array([0.0]),
        positions=np.array([listener_pos]),
        orientation_times=np.array([0.0]),
        orientations=(Rotation.identity(),),
    )
    spec = ShoeboxSpec(dimensions=np.array(dims), face_classes=face_classes or {})
    surfaces = tuple(shoebox_surfaces(spec)) + tuple(extra_surfaces)
    return SceneManifest(
        surfaces=surfaces,
        sources=tuple(sources),
        listener=listener,
        sample_rate=sample_rate,
        duration=duration,
        air_attenuation=(np.zeros(7) if gamma is None else np.asarray(gamma)),
        shoebox=spec,
        seed=seed,
    )


def set_all_materials(m: SceneManifest, material) -> SceneManifest:
    """Copy of the manifest with every surface using the given material."""
    from dataclasses import replace

    surfaces = tuple(replace(s, material=material) for s in m.surfaces)
    return replace(m, surfaces=surfaces)


def yaw_rotation(angle: float) -> Rotation:
    return Rotation.from_axis_angle([0.0, 1.0, 0.0], -angle)
