import math

import numpy as np
import pytest

from foasim.errors import NoActivity, UndefinedMetric
from foasim.foa import Direction, FoaClip, Rotation, encode_source, rotate
from foasim.metrics import (
    DB_CAP,
    clip_embedding,
    doa_error,
    edt,
    edt_diff,
    evaluate_corpus,
    frechet_distance,
    gaussian_frechet,
    kl_div,
    si_sdr,
    snr,
    stft_error,
)
from foasim.wavio import write_foa_wav


def noise_clip(seed=0, n=16000, direction=Direction(0.1, 0.4), scale=0.3):
    rng = np.random.default_rng(seed)
    return encode_source(scale * rng.standard_normal(n), direction)


def decay_clip(t60: float, seed=0, length_factor=1.0, n_rate=16000, noisy=True):
    rng = np.random.default_rng(seed)
    n = int(t60 * length_factor * n_rate) + n_rate // 4
    t = np.arange(n) / n_rate
    carrier = rng.standard_normal(n) if noisy else np.ones(n)
    w = carrier * np.exp(-6.91 * t / t60)
    data = np.stack([w, 0.5 * w, 0.3 * w, 0.1 * w])
    return FoaClip(data, sample_rate=n_rate)


class TestDoaError:
    def test_identical_zero(self):
        clip = noise_clip()
        assert doa_error(clip, clip) == 0.0

    def test_rotated_by_quarter_turn(self):
        # equator source: a yaw moves the intensity vector by exactly the yaw
        clip = noise_clip(seed=3, direction=Direction(0.0, 0.4))
        gen = rotate(clip, Rotation.from_yaw(math.pi / 2))
        assert doa_error(clip, gen) == pytest.approx(math.pi / 2, abs=1e-3)

    def test_w_only_gen_no_activity(self):
        clip = noise_clip(seed=4)
        w_only = np.zeros_like(clip.channels)
        w_only[0] = clip.channels[0]
        with pytest.raises(NoActivity):
            doa_error(clip, FoaClip(w_only))


class TestSnr:
    def test_identical_capped(self):
        clip = noise_clip(seed=5)
        assert snr(clip, clip) == DB_CAP

    def test_matched_noise_power_zero_db(self):
        rng = np.random.default_rng(6)
        ref = noise_clip(seed=6)
        noise = rng.standard_normal(ref.channels.shape)
        noise *= math.sqrt(float(np.sum(ref.channels**2) / np.sum(noise**2)))
        gen = FoaClip(ref.channels + noise)
        assert snr(ref, gen) == pytest.approx(0.0, abs=0.1)

    def test_zero_gen_zero_db(self):
        ref = noise_clip(seed=7)
        gen = FoaClip(np.zeros_like(ref.channels))
        assert snr(ref, gen) == pytest.approx(0.0, abs=1e-12)

    def test_silent_ref_undefined(self):
        silent = FoaClip(np.zeros((4, 100)))
        with pytest.raises(UndefinedMetric):
            snr(silent, silent)


class TestEdt:
    @pytest.mark.parametrize("t60", [0.2, 0.5, 1.0])
    def test_exponential_decay_recovers_t60(self, t60):
        clip = decay_clip(t60, seed=11)
        assert edt(clip) == pytest.approx(t60, rel=0.05)

    def test_identical_diff_zero(self):
        clip = decay_clip(0.4, seed=12)
        assert edt_diff(clip, clip) == 0.0

    def test_two_decays_difference(self):
        a = decay_clip(0.3, noisy=False)
        b = decay_clip(0.6, noisy=False)
        assert edt_diff(a, b) == pytest.approx(0.3, rel=0.05)

    def test_no_decay_segment(self):
        with pytest.raises(UndefinedMetric):
            edt(FoaClip(np.zeros((4, 1000))))


class TestStftError:
    def test_identical_zero(self):
        clip = noise_clip(seed=21)
        assert stft_error(clip, clip) == 0.0

    def test_negated_zero(self):
        clip = noise_clip(seed=22)
        gen = FoaClip(-clip.channels)
        assert stft_error(clip, gen) == pytest.approx(0.0, abs=1e-12)

    def test_zero_gen_full_error(self):
        clip = noise_clip(seed=23)
        gen = FoaClip(np.zeros_like(clip.channels))
        assert stft_error(clip, gen) == pytest.approx(1.0, abs=1e-12)


class TestSiSdr:
    def test_scaled_copy_capped(self):
        clip = noise_clip(seed=31)
        gen = FoaClip(3.7 * clip.channels)
        assert si_sdr(clip, gen) == DB_CAP

    def test_scale_invariance(self):
        rng = np.random.default_rng(32)
        ref = noise_clip(seed=32)
        gen = FoaClip(ref.channels + 0.2 * rng.standard_normal(ref.channels.shape))
        a = si_sdr(ref, gen)
        for scale in (0.01, 2.0, -3.0):
            assert si_sdr(ref, FoaClip(scale * gen.channels)) == pytest.approx(a, abs=1e-9)

    def test_orthogonal_gen_floor(self):
        n = 1024
        t = np.arange(n)
        ref_sig = np.sin(2 * np.pi * 100 * t / n)
        gen_sig = np.cos(2 * np.pi * 100 * t / n)  # orthogonal, equal norm
        ref = FoaClip(np.tile(ref_sig, (4, 1)))
        gen = FoaClip(np.tile(gen_sig, (4, 1)))
        assert si_sdr(ref, gen) == -DB_CAP


class TestCorpusDistributionMetrics:
    def test_kl_identical_zero(self):
        corpus = [noise_clip(seed=s) for s in range(4)]
        assert kl_div(corpus, corpus) <= 1e-12

    def test_kl_nonnegative(self):
        a = [noise_clip(seed=s) for s in range(4)]
        b = [noise_clip(seed=s + 50, scale=0.5) for s in range(4)]
        assert kl_div(a, b) >= 0.0
        assert kl_div(b, a) >= 0.0

    def test_kl_disjoint_ranges_large(self):
        quiet = [noise_clip(seed=s, scale=1e-4) for s in range(6)]
        loud = [noise_clip(seed=s + 10, scale=10.0) for s in range(6)]
        assert kl_div(quiet, loud) > 1.0

    def test_fd_identical_zero(self):
        corpus = [noise_clip(seed=s) for s in range(5)]
        assert frechet_distance(corpus, corpus) <= 1e-8

    def test_fd_mean_shift_closed_form(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal(8)
        eye = np.eye(8)
        mu = rng.standard_normal(8)
        assert gaussian_frechet(mu, eye, mu + v, eye) == pytest.approx(
            float(np.sum(v**2)), abs=1e-10
        )

    def test_fd_trace_arithmetic(self):
        # diagonal covariances (1, 4) and (4, 1): Tr(1+4) + Tr(4+1) - 2 Tr(2, 2) = 2
        mu = np.zeros(2)
        s1 = np.diag([1.0, 4.0])
        s2 = np.diag([4.0, 1.0])
        assert gaussian_frechet(mu, s1, mu, s2) == pytest.approx(2.0, abs=1e-10)

    def test_fd_too_few_clips(self):
        with pytest.raises(UndefinedMetric):
            frechet_distance([noise_clip()], [noise_clip()])

    def test_embedding_deterministic(self):
        clip = noise_clip(seed=77)
        assert np.array_equal(clip_embedding(clip), clip_embedding(clip))


class TestEvaluateCorpus:
    def make_corpus(self, directory, clips):
        directory.mkdir(parents=True, exist_ok=True)
        for i, clip in enumerate(clips):
            write_foa_wav(directory / f"clip_{i:03d}.wav", clip)

    def test_self_comparison_fixed_point(self, tmp_path):
        clips = [noise_clip(seed=s, scale=0.2) for s in range(3)]
        self.make_corpus(tmp_path / "ref", clips)
        report = evaluate_corpus(tmp_path / "ref", tmp_path / "ref")
        agg = report.aggregates()
        assert agg["doa"] == 0.0
        assert agg["snr"] == DB_CAP
        assert agg["edt"] == 0.0 or agg["edt"] is None
        assert agg["stft"] == 0.0
        assert agg["si_sdr"] == DB_CAP
        assert agg["kl"] <= 1e-12
        assert agg["fd"] <= 1e-8

    def test_empty_gen_dir(self, tmp_path):
        clips = [noise_clip(seed=s) for s in range(2)]
        self.make_corpus(tmp_path / "ref", clips)
        (tmp_path / "gen").mkdir()
        report = evaluate_corpus(tmp_path / "ref", tmp_path / "gen")
        assert report.unmatched_ref == ["clip_000.wav", "clip_001.wav"]
        assert report.clips == []
        assert report.aggregates()["doa"] is None

    def test_noisy_corpus_snr_20db(self, tmp_path):
        rng = np.random.default_rng(123)
        refs, gens = [], []
        for s in range(3):
            ref = noise_clip(seed=s, scale=0.2)
            noise = rng.standard_normal(ref.channels.shape)
            noise *= math.sqrt(float(np.sum(ref.channels**2) / np.sum(noise**2)) / 100.0)
            refs.append(ref)
            gens.append(FoaClip(ref.channels + noise))
        self.make_corpus(tmp_path / "ref", refs)
        self.make_corpus(tmp_path / "gen", gens)
        report = evaluate_corpus(tmp_path / "ref", tmp_path / "gen")
        assert report.aggregates()["snr"] == pytest.approx(20.0, abs=0.5)

    def test_unmatched_listed_and_excluded(self, tmp_path):
        clips = [noise_clip(seed=s) for s in range(2)]
        self.make_corpus(tmp_path / "ref", clips)
        self.make_corpus(tmp_path / "gen", clips)
        write_foa_wav(tmp_path / "gen" / "extra.wav", noise_clip(seed=9))
        report = evaluate_corpus(tmp_path / "ref", tmp_path / "gen")
        assert report.unmatched_gen == ["extra.wav"]
        assert len(report.clips) == 2

    def test_permutation_invariance(self):
        a = [noise_clip(seed=s) for s in range(4)]
        b = [noise_clip(seed=s + 7, scale=0.4) for s in range(4)]
        assert kl_div(a, b) == pytest.approx(kl_div(a[::-1], b[::-1]), abs=1e-12)
        assert frechet_distance(a, b) == pytest.approx(
            frechet_distance(a[::-1], b[::-1]), abs=1e-10
        )

    def test_markdown_column_order(self, tmp_path):
        clips = [noise_clip(seed=s, scale=0.2) for s in range(2)]
        self.make_corpus(tmp_path / "ref", clips)
        report = evaluate_corpus(tmp_path / "ref", tmp_path / "ref")
        table = report.to_markdown()
        header = table.splitlines()[0]
        assert header.index("DOA") < header.index("SNR") < header.index("EDT")
        assert header.index("FD") < header.index("STFT") < header.index("SI-SDR")
        assert header.index("SI-SDR") < header.index("KL")
