import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sanitone import toy
from sanitone.errors import DimensionMismatch, InsufficientVoicedFrames, NonPositiveEnvelope
from sanitone.features import (STD_FLOOR, F0Stats, FeatureStats, McepSequence, compute_f0_stats,
                               convert_log_f0, denormalize, log_spectral_distortion,
                               mcep_to_sp, normalize, sp_to_mcep, warp_frequency)
from sanitone.vocoder import F0Track

NFFT = 1024
BINS = NFFT // 2 + 1


def _formant_envelopes(rng, n):
    freqs = np.arange(BINS) * 16000 / NFFT
    out = []
    for _ in range(n):
        formants = [(rng.uniform(250, 900), rng.uniform(60, 150)),
                    (rng.uniform(1000, 2400), rng.uniform(80, 200)),
                    (rng.uniform(2500, 3800), rng.uniform(120, 250))]
        out.append(1e-3 * toy.resonance_response(formants, freqs, 16000))
    return np.array(out)


def test_flat_envelope():
    m = sp_to_mcep(np.full((3, BINS), 4.0))
    assert np.allclose(m.coeffs[:, 0], np.log(4.0), atol=1e-6)
    assert np.all(np.abs(m.coeffs[:, 1:]) <= 1e-6)


def test_unwarped_full_order_is_dft_cepstrum(rng):
    logsp = np.cumsum(rng.standard_normal((2, BINS)), axis=1) * 0.1
    m = sp_to_mcep(np.exp(logsp), order=NFFT // 2, alpha=0.0)
    oracle = np.fft.irfft(logsp, NFFT, axis=1)[:, :NFFT // 2 + 1]
    assert np.allclose(m.coeffs, oracle, atol=1e-10)


def test_round_trip_formants(rng):
    sp = _formant_envelopes(rng, 30)
    back = mcep_to_sp(sp_to_mcep(sp), NFFT)
    assert np.median(log_spectral_distortion(sp, back)) <= 1.5


def test_decoding_trivial_cases():
    assert np.all(mcep_to_sp(McepSequence(np.zeros((2, 25))), NFFT) == 1.0)
    c = np.zeros((1, 25))
    c[0, 0] = np.log(4.0)
    assert np.allclose(mcep_to_sp(McepSequence(c), NFFT), 4.0)


def test_recoding_is_idempotent(rng):
    m = sp_to_mcep(_formant_envelopes(rng, 5))
    again = sp_to_mcep(mcep_to_sp(m, NFFT))
    assert np.max(np.abs(again.coeffs - m.coeffs)) <= 1e-6


def test_non_positive_envelope():
    sp = np.ones((2, BINS))
    sp[1, 7] = 0.0
    with pytest.raises(NonPositiveEnvelope):
        sp_to_mcep(sp)


def test_width_checked():
    with pytest.raises(DimensionMismatch):
        McepSequence(np.zeros((3, 10)), order=24)


def test_warp_is_monotone_and_fixes_ends():
    w = np.linspace(0, np.pi, 200)
    v = warp_frequency(w, 0.42)
    assert np.all(np.diff(v) > 0)
    assert np.isclose(v[0], 0) and np.isclose(v[-1], np.pi)


def test_f0_stats_constant():
    s = compute_f0_stats([F0Track(np.full(50, 200.0))])
    assert s.mean_log_f0 == pytest.approx(np.log(200.0))
    assert s.std_log_f0 == STD_FLOOR


def test_f0_stats_two_values():
    s = compute_f0_stats([F0Track(np.array([100.0, 400.0] * 10 + [0.0] * 5))])
    assert s.mean_log_f0 == pytest.approx((np.log(100) + np.log(400)) / 2)
    assert s.voiced_frame_count == 20


def test_f0_stats_two_pass_oracle(rng):
    tracks = [F0Track(np.where(rng.random(80) < 0.7, rng.uniform(80, 300, 80), 0.0))
              for _ in range(4)]
    logs = np.log(np.concatenate([t.values_hz[t.values_hz > 0] for t in tracks]))
    mean = sum(logs) / len(logs)
    std = np.sqrt(sum((v - mean) ** 2 for v in logs) / len(logs))
    s = compute_f0_stats(tracks)
    assert abs(s.mean_log_f0 - mean) <= 1e-12 and abs(s.std_log_f0 - std) <= 1e-12


def test_f0_stats_needs_voicing():
    with pytest.raises(InsufficientVoicedFrames):
        compute_f0_stats([F0Track(np.array([0.0, 120.0, 0.0]))])


def test_f0_stats_order_invariant(rng):
    v = np.where(rng.random(100) < 0.6, rng.uniform(80, 300, 100), 0.0)
    a = compute_f0_stats([F0Track(v)])
    b = compute_f0_stats([F0Track(rng.permutation(v))])
    assert a.mean_log_f0 == pytest.approx(b.mean_log_f0, abs=1e-12)
    assert a.std_log_f0 == pytest.approx(b.std_log_f0, abs=1e-12)


def test_convert_log_f0_closed_form():
    src = F0Stats(np.log(100.0), 1.0, 10)
    tgt = F0Stats(np.log(200.0), 1.0, 10)
    out = convert_log_f0(F0Track(np.array([100.0, 0.0])), src, tgt)
    assert out.values_hz[0] == pytest.approx(200.0)
    assert out.values_hz[1] == 0.0


def test_convert_log_f0_identity():
    s = F0Stats(4.9, 0.2, 30)
    v = np.array([0.0, 123.456, 99.9, 0.0])
    assert np.array_equal(convert_log_f0(F0Track(v), s, s).values_hz, v)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 50), elements=st.one_of(st.just(0.0), st.floats(71, 800))),
       st.floats(4, 6), st.floats(0.05, 0.5), st.floats(4, 6), st.floats(0.05, 0.5))
def test_convert_log_f0_inverse_and_mask(v, m1, s1, m2, s2):
    src, tgt = F0Stats(m1, s1, 10), F0Stats(m2, s2, 10)
    there = convert_log_f0(F0Track(v), src, tgt)
    back = convert_log_f0(there, tgt, src)
    assert np.array_equal(there.voiced, v > 0)
    assert np.allclose(back.values_hz, v, rtol=1e-9, atol=0)


def test_normalize_identity_stats(rng):
    m = McepSequence(rng.standard_normal((5, 25)))
    s = FeatureStats(np.zeros(25), np.ones(25))
    assert np.array_equal(normalize(m, s).coeffs, m.coeffs)


def test_single_frame_std_floor(rng):
    m = McepSequence(rng.standard_normal((1, 25)))
    s = FeatureStats.fit([m])
    assert np.all(s.std == STD_FLOOR)
    assert np.all(np.isfinite(normalize(m, s).coeffs))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_normalize_round_trip(seed):
    rng = np.random.default_rng(seed)
    data = [McepSequence(rng.standard_normal((rng.integers(2, 20), 25)) * rng.uniform(0.1, 5, 25))
            for _ in range(3)]
    s = FeatureStats.fit(data)
    for m in data:
        assert np.max(np.abs(denormalize(normalize(m, s), s).coeffs - m.coeffs)) <= 1e-9


def test_normalize_width_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        normalize(McepSequence(rng.standard_normal((3, 25))), FeatureStats(np.zeros(10), np.ones(10)))


def test_stats_serialization():
    f = F0Stats(4.8, 0.21, 300)
    assert F0Stats.from_dict(f.to_dict()) == f
    s = FeatureStats(np.arange(3.0), np.ones(3))
    assert FeatureStats.from_dict(s.to_dict()) == s
