import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foasim.acoustics import (
    PropagationPath,
    ReverbProfile,
    compute_descriptors,
    default_tail_levels,
    descriptors_from_jsonl,
    descriptors_to_jsonl,
    early_ir,
    fold_reflection_points,
    image_sources,
    late_tail,
    occlusion_trace,
    path_attenuation,
    render_reference,
    reverb_t60,
    synthesize_ir,
)
from foasim.errors import DegenerateRay, InvalidGeometry, UnsupportedOrder
from foasim.foa import Direction, estimate_doa
from foasim.scene import MaterialBands, Surface, assign_materials

from conftest import build_shoebox_manifest, set_all_materials


def flat_material(alpha, scatter=0.1):
    return MaterialBands(np.full(7, alpha), np.full(7, scatter))


def make_path(d=1.0, hits=(), order=None, direction=Direction(0.0, 0.0), rate=16000, c=343.0):
    order = order if order is not None else len(hits)
    return PropagationPath(
        kind="direct" if order == 0 else "reflection",
        order=order,
        total_length=d,
        arrival_direction=direction,
        surface_hits=tuple(hits),
        delay=int(round(d / c * rate)),
    )


def wall_surface(alpha):
    return Surface(
        np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        "wall",
        flat_material(alpha) if np.isscalar(alpha) else MaterialBands(alpha, np.full(7, 0.1)),
    )


class TestPathAttenuation:
    def test_no_hits_no_air(self):
        a = path_attenuation(make_path(d=5.0), np.zeros(7))
        assert np.allclose(a, 1.0)

    def test_single_half_absorber(self):
        a = path_attenuation(make_path(d=2.0, hits=[wall_surface(0.5)]), np.zeros(7))
        assert np.allclose(a, 0.5)

    def test_two_hits_with_air(self):
        path = make_path(d=10.0, hits=[wall_surface(0.2), wall_surface(0.5)])
        a = path_attenuation(path, np.full(7, 0.01))
        assert np.allclose(a, 0.8 * 0.5 * math.exp(-0.1), atol=1e-12)


@settings(max_examples=60)
@given(
    st.floats(0.1, 50.0),
    st.floats(0.0, 0.05),
    st.lists(st.floats(0.0, 1.0), min_size=0, max_size=4),
    st.floats(0.0, 0.99),
    st.floats(0.01, 10.0),
)
def test_attenuation_monotonicity(d, gamma, alphas, alpha_bump, d_bump):
    gammas = np.full(7, gamma)
    hits = [wall_surface(a) for a in alphas]
    base = path_attenuation(make_path(d=d, hits=hits), gammas)
    assert np.all(base >= 0.0) and np.all(base <= 1.0)
    # longer path never gains energy
    longer = path_attenuation(make_path(d=d + d_bump, hits=hits), gammas)
    assert np.all(longer <= base + 1e-15)
    # more air attenuation never gains energy
    damper = path_attenuation(make_path(d=d, hits=hits), gammas + 0.01)
    assert np.all(damper <= base + 1e-15)
    # raising any single absorption never gains energy
    if hits:
        raised = list(alphas)
        raised[0] = min(1.0, raised[0] + alpha_bump)
        bumped = path_attenuation(make_path(d=d, hits=[wall_surface(a) for a in raised]), gammas)
        assert np.all(bumped <= base + 1e-15)


class TestOcclusion:
    def test_empty_room_visible(self):
        m = build_shoebox_manifest(gamma=np.zeros(7))
        occ = occlusion_trace([1.0, 1.5, 2.5], [3.0, 1.5, 2.5], m)
        assert occ.visible
        assert np.allclose(occ.transmission, 1.0)

    def test_full_absorber_floored(self):
        blocker = [
            Surface(
                np.array([[2.0, 0.0, 0.0], [2.0, 3.0, 0.0], [2.0, 3.0, 5.0]]),
                "wall",
                flat_material(1.0),
            ),
            Surface(
                np.array([[2.0, 0.0, 0.0], [2.0, 3.0, 5.0], [2.0, 0.0, 5.0]]),
                "wall",
                flat_material(1.0),
            ),
        ]
        m = build_shoebox_manifest(extra_surfaces=blocker)
        occ = occlusion_trace([1.0, 1.5, 2.5], [3.0, 1.5, 2.5], m)
        assert not occ.visible
        assert np.allclose(occ.transmission, 1e-4)

    def test_single_band_absorber(self):
        alpha = np.zeros(7)
        alpha[3] = 0.36  # 1 kHz band only
        blocker = [
            Surface(
                np.array([[2.0, 0.0, 0.0], [2.0, 3.0, 0.0], [2.0, 3.0, 5.0]]),
                "curtain",
                MaterialBands(alpha, np.full(7, 0.1)),
            ),
            Surface(
                np.array([[2.0, 0.0, 0.0], [2.0, 3.0, 5.0], [2.0, 0.0, 5.0]]),
                "curtain",
                MaterialBands(alpha, np.full(7, 0.1)),
            ),
        ]
        gamma = np.full(7, 0.002)
        m = build_shoebox_manifest(extra_surfaces=blocker, gamma=gamma)
        occ = occlusion_trace([1.0, 1.5, 2.5], [3.0, 1.5, 2.5], m)
        air = math.exp(-0.002 * 2.0)
        assert occ.transmission[3] == pytest.approx(0.64 * air, abs=1e-12)
        for b in (0, 1, 2, 4, 5, 6):
            assert occ.transmission[b] == pytest.approx(air, abs=1e-12)

    def test_degenerate_ray(self):
        m = build_shoebox_manifest()
        with pytest.raises(DegenerateRay):
            occlusion_trace([1.0, 1.0, 1.0], [1.0, 1.0, 1.0 + 1e-9], m)


def brute_force_images(src, dims, max_order):
    """Oracle: enumerate images by recursive reflection across the 6 planes."""
    planes = [(axis, 0.0) for axis in range(3)] + [
        (axis, float(dims[axis])) for axis in range(3)
    ]
    key = lambda p: tuple(round(float(c), 9) for c in p)
    found = {key(src): 0}
    frontier = [np.asarray(src, dtype=np.float64)]
    for order in range(1, max_order + 1):
        nxt = []
        for p in frontier:
            for axis, offset in planes:
                q = p.copy()
                q[axis] = 2 * offset - q[axis]
                k = key(q)
                if k not in found:
                    found[k] = order
                    nxt.append(q)
        frontier = nxt
    return found


class TestImageSources:
    def test_first_order_count(self):
        m = build_shoebox_manifest(dims=(4, 3, 5))
        paths = image_sources(m, [1.0, 1.5, 2.5], [3.0, 1.5, 2.5], max_order=1)
        assert len(paths) == 7
        assert sum(1 for p in paths if p.order == 0) == 1
        assert sum(1 for p in paths if p.order == 1) == 6

    def test_floor_mirror_length(self):
        m = build_shoebox_manifest(dims=(6, 4, 4))
        src, lst = [1.0, 1.0, 1.0], [3.0, 1.0, 1.0]
        paths = image_sources(m, src, lst, max_order=1)
        # floor image at (1,-1,1): |(3,1,1)-(1,-1,1)| = sqrt(8)
        lengths = sorted(p.total_length for p in paths if p.order == 1)
        assert any(abs(l - math.sqrt(8.0)) < 1e-12 for l in lengths)

    def test_order_two_matches_brute_force(self):
        dims = (4.1, 3.2, 5.3)
        src = [1.07, 1.51, 2.43]
        lst = [3.02, 1.62, 2.55]
        m = build_shoebox_manifest(dims=dims)
        paths = image_sources(m, src, lst, max_order=2)
        assert len(paths) == 1 + 6 + 18
        oracle = brute_force_images(src, dims, 2)
        oracle_lengths = sorted(
            np.linalg.norm(np.array(img) - np.array(lst))
            for img, order in oracle.items()
            if order <= 2
        )
        got_lengths = sorted(p.total_length for p in paths)
        assert len(oracle_lengths) == len(got_lengths)
        assert np.allclose(oracle_lengths, got_lengths, atol=1e-9)

    def test_order_three_matches_brute_force(self):
        dims = (3.7, 2.9, 4.3)
        src = [0.9, 1.1, 1.7]
        lst = [2.8, 1.9, 3.1]
        m = build_shoebox_manifest(dims=dims)
        paths = image_sources(m, src, lst, max_order=3)
        oracle = brute_force_images(src, dims, 3)
        assert sorted(
            np.linalg.norm(np.array(img) - np.array(lst)) for img in oracle
        ) == pytest.approx(sorted(p.total_length for p in paths), abs=1e-9)

    def test_reflection_hit_counts(self):
        m = build_shoebox_manifest(dims=(4, 3, 5))
        paths = image_sources(m, [1.0, 1.5, 2.5], [3.0, 1.5, 2.5], max_order=2)
        for p in paths:
            assert len(p.surface_hits) == p.order

    def test_generic_mesh_first_order(self):
        # no shoebox: a single floor triangle big enough to host the bounce
        floor = Surface(
            np.array([[-20.0, 0.0, -20.0], [40.0, 0.0, 0.0], [0.0, 0.0, 40.0]]),
            "floor",
            flat_material(0.3),
        )
        m = build_shoebox_manifest()
        m = replace(m, shoebox=None, surfaces=(floor,))
        paths = image_sources(m, [1.0, 1.0, 1.0], [3.0, 1.0, 1.0], max_order=1)
        orders = sorted(p.order for p in paths)
        assert orders == [0, 1]
        bounce = [p for p in paths if p.order == 1][0]
        assert bounce.total_length == pytest.approx(math.sqrt(8.0), abs=1e-9)
        with pytest.raises(UnsupportedOrder):
            image_sources(m, [1.0, 1.0, 1.0], [3.0, 1.0, 1.0], max_order=2)

    def test_fold_points_preserve_length_and_endpoint(self):
        dims = (4.0, 3.0, 5.0)
        src = np.array([1.2, 1.4, 2.2])
        lst = np.array([3.1, 1.6, 2.9])
        oracle = brute_force_images(src, dims, 2)
        for img, order in oracle.items():
            pts = fold_reflection_points(lst, np.array(img), dims)
            total = sum(
                np.linalg.norm(b - a) for a, b in zip(pts[:-1], pts[1:])
            )
            assert total == pytest.approx(np.linalg.norm(np.array(img) - lst), abs=1e-9)
            assert np.allclose(pts[-1], src, atol=1e-9)


class TestReverb:
    def test_sabine_closed_form(self):
        # 5 x 5 x 4 box: V = 100 m^3, S = 130 m^2, uniform alpha 0.2
        m = build_shoebox_manifest(dims=(5.0, 5.0, 4.0))
        m = set_all_materials(m, flat_material(0.2))
        prof = reverb_t60(m, method="sabine")
        assert np.allclose(prof.t60, 0.161 * 100.0 / 26.0, atol=1e-9)

    def test_eyring_closed_form(self):
        m = build_shoebox_manifest(dims=(5.0, 5.0, 4.0))
        m = set_all_materials(m, flat_material(0.2))
        prof = reverb_t60(m, method="eyring")
        expected = 0.161 * 100.0 / (-130.0 * math.log(0.8))
        assert np.allclose(prof.t60, expected, atol=1e-9)

    def test_full_absorption_clamped_finite(self):
        m = build_shoebox_manifest(dims=(5.0, 5.0, 4.0))
        m = set_all_materials(m, flat_material(1.0))
        prof = reverb_t60(m, method="eyring")
        expected = 0.161 * 100.0 / (-130.0 * math.log(1e-4))
        assert np.allclose(prof.t60, expected, atol=1e-9)
        assert np.all(np.isfinite(prof.t60))

    def test_sabine_doubling_halves(self):
        m1 = set_all_materials(build_shoebox_manifest(), flat_material(0.15))
        m2 = set_all_materials(build_shoebox_manifest(), flat_material(0.30))
        t1 = reverb_t60(m1, method="sabine").t60
        t2 = reverb_t60(m2, method="sabine").t60
        assert np.allclose(t1, 2.0 * t2, atol=1e-9)

    def test_mixing_time_after_last_early_path(self):
        m = build_shoebox_manifest(dims=(4, 3, 5))
        prof = reverb_t60(m)
        paths = image_sources(m, [1.0, 1.5, 2.5], [3.0, 1.5, 2.5], max_order=2)
        longest = max(p.total_length for p in paths) / m.speed_of_sound
        assert prof.mixing_time == pytest.approx(longest + 0.005)

    def test_invalid_volume(self):
        m = build_shoebox_manifest()
        m = replace(m, shoebox=None, room_volume=None)
        with pytest.raises(InvalidGeometry):
            reverb_t60(m)


class TestSynthesizeIr:
    def test_direct_path_delay_and_gain(self):
        m = set_all_materials(build_shoebox_manifest(dims=(5, 4, 6)), flat_material(1.0))
        path = make_path(d=3.43)
        prof = reverb_t60(m)
        ir = synthesize_ir([path], prof, m)
        assert path.delay == 160
        assert ir.channels[0, 160] == pytest.approx(1.0 / 3.43, abs=1e-9)
        # front direction: X mirrors W, Y and Z stay zero
        assert ir.channels[1, 160] == pytest.approx(1.0 / 3.43, abs=1e-9)
        assert abs(ir.channels[2, 160]) < 1e-12

    def test_unit_distance_unit_gain(self):
        m = set_all_materials(build_shoebox_manifest(), flat_material(1.0))
        prof = reverb_t60(m)
        ir = synthesize_ir([make_path(d=1.0)], prof, m)
        assert ir.channels[0, make_path(d=1.0).delay] == pytest.approx(1.0, abs=1e-9)

    def test_flat_band_train_is_exact_delta(self):
        m = build_shoebox_manifest()
        ir = early_ir([make_path(d=2.0)], m, length=400)
        expected = np.zeros(400)
        expected[make_path(d=2.0).delay] = 0.5
        assert np.allclose(ir[0], expected, atol=1e-12)

    def test_tail_decays_60db_by_t60(self):
        m = set_all_materials(build_shoebox_manifest(seed=3), flat_material(0.25))
        t60 = np.full(7, 0.4)
        prof = ReverbProfile(t60=t60, mixing_time=0.02)
        tail = late_tail(prof, m, np.ones(7))
        w = tail[0]
        mix = int(0.02 * m.sample_rate)
        head = w[mix : mix + 80]
        toe = w[-80:]
        ratio = np.sqrt(np.mean(toe**2) / np.mean(head**2))
        assert ratio < 2e-3

    def test_near_field_clamp(self):
        m = set_all_materials(build_shoebox_manifest(), flat_material(1.0))
        prof = reverb_t60(m)
        ir = synthesize_ir([make_path(d=0.01)], prof, m)
        assert np.max(np.abs(ir.channels[0])) <= 1.0 / 0.1 + 1e-9

    def test_tail_levels_zero_when_anechoic(self):
        m = set_all_materials(build_shoebox_manifest(), flat_material(1.0))
        assert np.allclose(default_tail_levels(m), 0.0)


class TestRenderReference:
    def test_anechoic_static_source_is_delayed_scaled_encode(self):
        rng = np.random.default_rng(8)
        dry = 0.4 * rng.standard_normal(16000)
        m = build_shoebox_manifest(duration=1.0, dry=dry)
        m = set_all_materials(m, flat_material(1.0))
        out = render_reference(m)
        d = 2.0
        delay = int(round(d / 343.0 * 16000))
        expected_w = np.zeros(16000)
        expected_w[delay:] = dry[: 16000 - delay] / d
        assert np.allclose(out.channels[0], expected_w, atol=1e-9)
        # direction listener->source is -x: azimuth pi
        est = estimate_doa(out, window=1600)
        assert est
        for _, direction in est:
            assert direction.angle_to(Direction(0.0, -math.pi)) < 1e-3

    def test_linear_in_dry_signal(self):
        rng = np.random.default_rng(9)
        dry = 0.3 * rng.standard_normal(8000)
        m1 = build_shoebox_manifest(duration=0.5, dry=dry)
        m2 = build_shoebox_manifest(duration=0.5, dry=2.0 * dry)
        out1 = render_reference(m1)
        out2 = render_reference(m2)
        assert np.allclose(out2.channels, 2.0 * out1.channels, atol=1e-9)

    def test_disjoint_sources_sum(self):
        rng = np.random.default_rng(10)
        n = 8000
        m_both = build_shoebox_manifest(duration=0.5, n_sources=2, seed=5)
        # give the two sources disjoint activity windows
        s0 = replace(
            m_both.sources[0],
            active_times=np.array([0.0, 0.25]),
            active_values=np.array([True, False]),
        )
        s1 = replace(
            m_both.sources[1],
            position_times=np.array([0.0]),
            positions=np.array([[1.5, 1.0, 3.5]]),
            active_times=np.array([0.0, 0.25]),
            active_values=np.array([False, True]),
        )
        m_both = replace(m_both, sources=(s0, s1))
        m_a = replace(m_both, sources=(s0,))
        m_b = replace(m_both, sources=(s1,))
        total = render_reference(m_both)
        parts = render_reference(m_a).channels + render_reference(m_b).channels
        assert np.allclose(total.channels, parts, atol=1e-9)

    def test_crossing_source_monotone_azimuth(self):
        rng = np.random.default_rng(11)
        dry = 0.4 * rng.standard_normal(16000) + 0.05
        track = (np.array([0.0, 1.0]), np.array([[5.0, 1.5, 1.0], [5.0, 1.5, 5.0]]))
        m = build_shoebox_manifest(
            dims=(6.0, 3.0, 6.0),
            duration=1.0,
            dry=dry,
            listener_pos=(3.0, 1.5, 3.0),
            source_positions_track=track,
        )
        m = set_all_materials(m, flat_material(1.0))
        out = render_reference(m)
        est = estimate_doa(out, window=1600)
        assert len(est) >= 8
        azimuths = [d.azimuth for _, d in est]
        assert all(b - a > -1e-6 for a, b in zip(azimuths, azimuths[1:]))

    def test_render_threads_match_serial(self):
        m = build_shoebox_manifest(duration=0.5, n_sources=3, seed=12)
        serial = render_reference(m, threads=1)
        parallel = render_reference(m, threads=3)
        assert np.array_equal(serial.channels, parallel.channels)


class TestDescriptors:
    def test_static_visible_source(self):
        m = build_shoebox_manifest(duration=10.0)
        d = compute_descriptors(m)
        assert len(d.frames) == 100
        first = d.frames[0].sources[0]
        for f in d.frames:
            s = f.sources[0]
            assert s.occlusion.visible
            assert s.direction == first.direction
            assert s.distance == pytest.approx(first.distance)

    def test_frame_count_ceil(self):
        m = build_shoebox_manifest(duration=1.25)
        assert len(compute_descriptors(m).frames) == 13

    def test_occluder_dip_and_recovery(self):
        pillar = [
            Surface(
                np.array([[5.0, 0.0, 2.5], [5.0, 3.0, 2.5], [5.0, 3.0, 3.5]]),
                "furniture",
                flat_material(0.9),
            ),
            Surface(
                np.array([[5.0, 0.0, 2.5], [5.0, 3.0, 3.5], [5.0, 0.0, 3.5]]),
                "furniture",
                flat_material(0.9),
            ),
        ]
        track = (np.array([0.0, 2.0]), np.array([[2.0, 1.5, 0.5], [2.0, 1.5, 5.5]]))
        m = build_shoebox_manifest(
            dims=(10.0, 3.0, 6.0),
            duration=2.0,
            listener_pos=(8.0, 1.5, 3.0),
            source_positions_track=track,
            extra_surfaces=pillar,
        )
        d = compute_descriptors(m)
        vis = [f.sources[0].occlusion.visible for f in d.frames]
        trans = [float(np.mean(f.sources[0].occlusion.transmission)) for f in d.frames]
        assert vis[0] and vis[-1]
        assert not all(vis)
        blocked = [t for v, t in zip(vis, trans) if not v]
        clear = [t for v, t in zip(vis, trans) if v]
        assert max(blocked) < min(clear)
        assert min(blocked) == pytest.approx(0.1, abs=1e-9)

    def test_deterministic_and_jsonl_round_trip(self):
        m = build_shoebox_manifest(duration=1.0)
        d1 = compute_descriptors(m)
        d2 = compute_descriptors(m)
        text1 = descriptors_to_jsonl(d1)
        assert text1 == descriptors_to_jsonl(d2)
        parsed = descriptors_from_jsonl(text1)
        assert descriptors_to_jsonl(parsed) == text1
