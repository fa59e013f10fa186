import io
import wave

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sanitone.errors import EmptySignal, FormatError, UnsupportedChannels
from sanitone.signal_io import Waveform, quantize, read_wav, resample, write_wav


def _raw_wav(path, data: bytes, channels=1, width=2, rate=16000):
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(width)
        fh.setframerate(rate)
        fh.writeframes(data)


def _dominant_hz(x, fs):
    spec = np.abs(np.fft.rfft(x * np.hanning(len(x))))
    return np.argmax(spec) * fs / len(x), fs / len(x)


def test_read_mono_header(tmp_path):
    p = tmp_path / "a.wav"
    _raw_wav(p, np.zeros(16000, "<i2").tobytes())
    w = read_wav(p)
    assert len(w) == 16000 and w.sample_rate_hz == 16000


def test_most_negative_code_is_minus_one(tmp_path):
    p = tmp_path / "a.wav"
    _raw_wav(p, np.array([-32768, 0, 32767], "<i2").tobytes())
    assert read_wav(p).samples[0] == -1.0


def test_stereo_rejected(tmp_path):
    p = tmp_path / "s.wav"
    _raw_wav(p, np.zeros(200, "<i2").tobytes(), channels=2)
    with pytest.raises(UnsupportedChannels):
        read_wav(p)


def test_non_pcm16_rejected(tmp_path):
    p = tmp_path / "b.wav"
    _raw_wav(p, bytes(100), width=1)
    with pytest.raises(FormatError):
        read_wav(p)
    q = tmp_path / "junk.wav"
    q.write_bytes(b"not a riff file at all")
    with pytest.raises(FormatError):
        read_wav(q)


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        read_wav(tmp_path / "nope.wav")


def test_tone_round_trip(tmp_path):
    t = np.arange(16000) / 16000
    w = Waveform(0.8 * np.sin(2 * np.pi * 440 * t), 16000)
    write_wav(tmp_path / "t.wav", w)
    back = read_wav(tmp_path / "t.wav")
    assert np.max(np.abs(back.samples - w.samples)) <= 1 / 32768


def test_clipping():
    assert quantize(np.array([1.5, -1.5, 1.0]))[0] == 32767
    assert quantize(np.array([-1.5]))[0] == -32768


def test_empty_write(tmp_path):
    with pytest.raises(EmptySignal):
        write_wav(tmp_path / "e.wav", Waveform(np.zeros(0), 16000))


def test_waveform_invariants():
    with pytest.raises(ValueError):
        Waveform(np.array([0.0, np.nan]), 16000)
    with pytest.raises(ValueError):
        Waveform(np.zeros(3), 0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(1, 300), elements=st.floats(-1, 1)))
def test_write_read_within_quantization(x):
    buf = io.BytesIO()
    write_wav(buf, Waveform(x, 8000))
    buf.seek(0)
    back = read_wav(buf).samples
    assert np.max(np.abs(back - x)) <= 1 / 32768


def test_resample_identity_and_idempotence():
    w = Waveform(np.random.default_rng(0).standard_normal(1000), 16000)
    assert resample(w, 16000) is w
    once = resample(Waveform(w.samples, 48000), 16000)
    assert resample(once, 16000) == once


def test_resample_length():
    w = Waveform(np.zeros(48000), 48000)
    assert len(resample(w, 16000)) == 16000


def test_resampled_tone_keeps_frequency():
    t = np.arange(48000) / 48000
    y = resample(Waveform(np.sin(2 * np.pi * 440 * t), 48000), 16000)
    f, binw = _dominant_hz(y.samples, 16000)
    assert abs(f - 440) <= binw


def test_tone_above_target_nyquist_is_suppressed():
    # a 10 kHz tone cannot exist at 16 kHz; it must be removed, not aliased to 6 kHz
    t = np.arange(48000) / 48000
    x = np.sin(2 * np.pi * 10000 * t)
    y = resample(Waveform(x, 48000), 16000).samples[200:-200]
    ratio_db = 10 * np.log10(np.mean(y ** 2) / np.mean(x ** 2))
    assert ratio_db <= -60


def test_in_band_energy_retained():
    t = np.arange(48000) / 48000
    x = np.sin(2 * np.pi * 3000 * t)
    y = resample(Waveform(x, 48000), 16000).samples[200:-200]
    assert np.mean(y ** 2) / np.mean(x ** 2) >= 0.99


@pytest.mark.parametrize("seed", range(20))
def test_random_tone_frequency_preserved(seed):
    rng = np.random.default_rng(seed)
    f0 = rng.uniform(50, 6500)
    src = int(rng.choice([22050, 44100, 48000]))
    t = np.arange(src) / src
    y = resample(Waveform(np.sin(2 * np.pi * f0 * t), src), 16000)
    f, binw = _dominant_hz(y.samples, 16000)
    assert abs(f - f0) <= binw
    assert abs(len(y) / 16000 - 1.0) <= 1 / 16000
