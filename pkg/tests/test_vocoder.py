import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sanitone import toy
from sanitone.errors import FrameMismatch, InvalidAnalysis, TooShort
from sanitone.features import log_spectral_distortion
from sanitone.signal_io import Waveform
from sanitone.vocoder import (AnalysisResult, F0Track, VocoderConfig, analyze, dumps_analysis,
                              estimate_aperiodicity, estimate_f0, estimate_spectral_envelope,
                              load_analysis, dump_analysis, loads_analysis, minimum_phase,
                              synthesize)

CFG = VocoderConfig()
FS = 16000


def _interior(track, margin=10):
    return track.values_hz[margin:-margin]


def test_config_validation():
    with pytest.raises(ValueError):
        VocoderConfig(fft_size=1000)
    with pytest.raises(ValueError):
        VocoderConfig(f0_floor_hz=500, f0_ceil_hz=400)


def test_sine_f0():
    f0 = estimate_f0(toy.tone(220.0))
    v = _interior(f0)
    good = (v > 0) & (np.abs(v - 220) <= 0.02 * 220)
    assert good.mean() >= 0.9


def test_silence_unvoiced():
    assert not estimate_f0(Waveform(np.zeros(FS), FS)).voiced.any()


def test_white_noise_mostly_unvoiced():
    f0 = estimate_f0(toy.white_noise(seed=3))
    assert (~f0.voiced).mean() >= 0.8


def test_voiced_values_within_range(vowel_130):
    v = estimate_f0(vowel_130).values_hz
    v = v[v > 0]
    assert v.min() >= CFG.f0_floor_hz and v.max() <= CFG.f0_ceil_hz


def test_too_short():
    with pytest.raises(TooShort):
        estimate_f0(Waveform(np.zeros(100), FS))


def test_frame_mismatch():
    w = toy.tone(200.0, 0.5)
    bad = F0Track(np.zeros(7))
    with pytest.raises(FrameMismatch):
        estimate_spectral_envelope(w, bad)
    with pytest.raises(FrameMismatch):
        estimate_aperiodicity(w, bad)


def test_resonance_peak_location():
    # 300 Hz bandwidth: the harmonic sampling of narrower peaks biases the
    # smoothed maximum a few bins upward at 150 Hz spacing
    w = toy.vowel(150.0, [(1000, 300)], duration_s=1.0)
    a = analyze(w)
    target = round(1000 * CFG.fft_size / FS)
    peaks = np.argmax(a.spectral_envelope[a.f0.voiced][10:-10], axis=1)
    assert np.all(np.abs(peaks - target) <= 2)


def test_silence_envelope_is_floor():
    a = analyze(Waveform(np.zeros(FS), FS))
    assert np.all(a.spectral_envelope == CFG.envelope_floor)
    assert np.all(a.aperiodicity == 1.0)
    assert not a.f0.voiced.any()


def test_stationary_smoother_than_chirp():
    t = np.arange(FS) / FS
    steady = toy.vowel(140.0, [(800, 100), (2200, 150)])
    chirp = Waveform(0.3 * np.sin(2 * np.pi * (150 * t + 1500 * t ** 2)), FS)

    def jitter(w):
        sp = analyze(w).spectral_envelope[10:-10]
        return np.median(log_spectral_distortion(sp[1:], sp[:-1]))

    assert jitter(steady) < jitter(chirp)


def test_aperiodicity_sine_and_noise():
    a = analyze(toy.tone(220.0))
    assert a.aperiodicity[a.f0.voiced].mean() <= 0.3
    n = analyze(toy.white_noise(seed=5))
    assert n.aperiodicity.mean() >= 0.7


def test_unvoiced_frames_have_unit_aperiodicity():
    w = toy.vowel(200.0, [(700, 90)])
    f0 = F0Track(np.zeros(CFG.n_frames(len(w), FS)))
    assert np.all(estimate_aperiodicity(w, f0) == 1.0)


def test_frame_count():
    a = analyze(toy.tone(300.0, 1.0))
    assert a.n_frames == 201
    assert a.spectral_envelope.shape == a.aperiodicity.shape == (201, CFG.fft_size // 2 + 1)


def test_vowel_median_f0(vowel_130):
    f0 = estimate_f0(vowel_130).values_hz
    assert abs(np.median(f0[f0 > 0]) - 130) <= 0.02 * 130


def test_synthesis_length(vowel_130):
    a = analyze(vowel_130)
    y = synthesize(a)
    hop = CFG.hop(FS)
    assert abs(len(y) - a.n_frames * hop) <= hop
    assert y.sample_rate_hz == FS


def test_unvoiced_synthesis_is_noise():
    n = 201
    a = AnalysisResult(F0Track(np.zeros(n)), np.full((n, 513), 1e-4), np.ones((n, 513)))
    y = synthesize(a, seed=2)
    assert np.std(y.samples) > 0
    assert (~estimate_f0(y).voiced).mean() >= 0.8


def test_round_trip_vowel(vowel_130):
    a = analyze(vowel_130)
    y = synthesize(a)
    b = analyze(Waveform(y.samples[:len(vowel_130)], FS))
    both = a.f0.voiced & b.f0.voiced
    rel = np.abs(b.f0.values_hz[both] / a.f0.values_hz[both] - 1)
    assert np.mean(rel <= 0.03) >= 0.9
    assert np.median(log_spectral_distortion(a.spectral_envelope[both],
                                             b.spectral_envelope[both])) <= 3.0


def test_envelope_power_linearity(vowel_130):
    a = analyze(vowel_130)
    y1 = synthesize(a, seed=4).samples
    y2 = synthesize(a.replace(spectral_envelope=2 * a.spectral_envelope), seed=4).samples
    ratio = np.sqrt(np.mean(y2 ** 2) / np.mean(y1 ** 2))
    assert abs(ratio / np.sqrt(2) - 1) <= 0.05


def test_invalid_analysis_rejected():
    n = 10
    good = AnalysisResult(F0Track(np.zeros(n)), np.ones((n, 513)), np.ones((n, 513)))
    with pytest.raises(InvalidAnalysis):
        synthesize(good.replace(spectral_envelope=np.zeros((n, 513))))
    with pytest.raises(InvalidAnalysis):
        synthesize(good.replace(aperiodicity=np.full((n, 513), 1.5)))
    with pytest.raises(InvalidAnalysis):
        synthesize(good.replace(aperiodicity=np.ones((n + 1, 513))))


def test_minimum_phase_keeps_magnitude(rng):
    nfft = 1024
    logmag = np.cumsum(rng.standard_normal(nfft // 2 + 1)) * 0.05
    spec = minimum_phase(logmag, nfft)
    assert np.allclose(np.log(np.abs(spec)), logmag, atol=1e-9)
    # causal: the impulse response is concentrated at the start
    h = np.fft.irfft(spec, nfft)
    assert np.sum(h[:nfft // 2] ** 2) > 0.99 * np.sum(h ** 2)


def test_dump_round_trip(tmp_path, vowel_130):
    a = analyze(vowel_130)
    data = dumps_analysis(a)
    b, end = loads_analysis(data)
    assert end == len(data)
    assert np.array_equal(a.f0.values_hz, b.f0.values_hz)
    assert np.array_equal(a.spectral_envelope, b.spectral_envelope)
    assert np.array_equal(a.aperiodicity, b.aperiodicity)
    dump_analysis(tmp_path / "a.bin", a)
    c = load_analysis(tmp_path / "a.bin")
    assert dumps_analysis(c) == data


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(2, 40))
def test_synthesis_never_non_finite(seed, n):
    rng = np.random.default_rng(seed)
    f0 = np.where(rng.random(n) < 0.6, rng.uniform(71, 800, n), 0.0)
    sp = np.exp(rng.uniform(-25, 3, (n, 513)))
    ap = rng.random((n, 513))
    y = synthesize(AnalysisResult(F0Track(f0), sp, ap), seed=seed)
    assert np.all(np.isfinite(y.samples))


@pytest.mark.parametrize("f0", [80.0, 140.0, 230.0, 400.0])
def test_tone_round_trip_pitch(f0):
    w = toy.vowel(f0, [(600, 100), (1500, 120)], duration_s=0.8)
    a = analyze(w)
    b = analyze(Waveform(synthesize(a).samples[:len(w)], FS))
    v = b.f0.values_hz[10:-10]
    v = v[v > 0]
    assert np.mean(np.abs(v / f0 - 1) <= 0.03) >= 0.9
