"""Synthetic speech-like signals with known ground truth.

Everything here is generated from closed-form ingredients (band-limited pulse
trains, two-pole resonators, a linear dB/kHz tilt) so tests and demos can
check analysis results against the parameters that built the signal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .signal_io import Waveform


def resonator(freq_hz: float, bandwidth_hz: float, fs: int):
    """Two-pole resonator with unit gain at DC."""
    r = np.exp(-np.pi * bandwidth_hz / fs)
    theta = 2 * np.pi * freq_hz / fs
    a = np.array([1.0, -2 * r * np.cos(theta), r * r])
    return np.array([a.sum()]), a


def resonance_response(formants, freqs_hz, fs: int) -> np.ndarray:
    """Power response of a resonator cascade at ``freqs_hz``."""
    h = np.ones(len(freqs_hz), dtype=complex)
    for f, bw in formants:
        b, a = resonator(f, bw, fs)
        h *= sps.freqz(b, a, worN=np.asarray(freqs_hz, dtype=float), fs=fs)[1]
    return np.abs(h) ** 2


def pulse_train(f0_hz, n_samples: int, fs: int, phase0: float = 0.0) -> np.ndarray:
    """Band-limited pulse train: every harmonic below Nyquist at equal amplitude.

    ``f0_hz`` may be a scalar or a per-sample contour.
    """
    f0 = np.broadcast_to(np.asarray(f0_hz, dtype=np.float64), (n_samples,))
    phase = phase0 + 2 * np.pi * np.cumsum(f0) / fs
    out = np.zeros(n_samples)
    k = 1
    while k * f0.min() < 0.5 * fs:
        alive = k * f0 < 0.5 * fs
        out += np.where(alive, np.cos(k * phase), 0.0)
        k += 1
    return out


def vowel(f0_hz, formants, duration_s: float = 1.0, fs: int = 16000,
          amplitude: float = 0.3, phase0: float = 0.0) -> Waveform:
    """Pulse train through a cascade of resonances, peak-normalized."""
    n = int(round(duration_s * fs))
    x = pulse_train(f0_hz, n, fs, phase0)
    for f, bw in formants:
        b, a = resonator(f, bw, fs)
        x = sps.lfilter(b, a, x)
    return Waveform(amplitude * x / np.max(np.abs(x)), fs)


def tone(freq_hz: float, duration_s: float = 1.0, fs: int = 16000,
         amplitude: float = 0.5) -> Waveform:
    t = np.arange(int(round(duration_s * fs))) / fs
    return Waveform(amplitude * np.sin(2 * np.pi * freq_hz * t), fs)


def white_noise(duration_s: float = 1.0, fs: int = 16000, amplitude: float = 0.1,
                seed: int = 0) -> Waveform:
    rng = np.random.default_rng(seed)
    return Waveform(amplitude * rng.standard_normal(int(round(duration_s * fs))), fs)


def apply_tilt(w: Waveform, db_per_khz: float) -> Waveform:
    """Zero-phase spectral tilt: gain of ``db_per_khz * f / 1000`` dB at f Hz."""
    n = len(w)
    spec = np.fft.rfft(w.samples)
    freqs = np.fft.rfftfreq(n, 1.0 / w.sample_rate_hz)
    gain = 10.0 ** (db_per_khz * freqs / 1000.0 / 20.0)
    return Waveform(np.fft.irfft(spec * gain, n), w.sample_rate_hz)


# ---------------------------------------------------------------------------
# two-style toy corpus
# ---------------------------------------------------------------------------

_VOWELS = (
    ((730, 90), (1090, 110), (2440, 170)),
    ((270, 60), (2290, 100), (3010, 160)),
    ((530, 80), (1840, 100), (2480, 150)),
    ((300, 60), (870, 90), (2240, 150)),
    ((570, 80), (840, 90), (2410, 160)),
)


@dataclass(frozen=True)
class ToySpeaker:
    name: str
    base_f0_hz: float
    formant_scale: float


def toy_speakers(n: int = 4, seed: int = 0):
    rng = np.random.default_rng(seed)
    scales = np.linspace(0.85, 1.2, n)
    return [ToySpeaker(f"spk{i}", float(rng.uniform(105, 135)), float(s))
            for i, s in enumerate(scales)]


def toy_utterance(speaker: ToySpeaker, emotional: bool, seed: int,
                  fs: int = 16000, f0_raise: float = 1.4,
                  tilt_db_per_khz: float = 3.0) -> Waveform:
    """A short voiced phrase: a few vowels with gliding formants, a declining
    intonation contour and a faint noise floor.

    The emotional style raises F0 by ``f0_raise`` and applies a spectral tilt
    of ``tilt_db_per_khz``.
    """
    rng = np.random.default_rng(seed)
    duration = rng.uniform(0.9, 1.3)
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    f0 = speaker.base_f0_hz * rng.uniform(0.93, 1.07)
    contour = f0 * (1.0 + 0.12 * np.sin(2 * np.pi * rng.uniform(1.0, 2.5) * t + rng.uniform(0, 6.3)))
    contour *= np.linspace(1.05, 0.9, n)
    if emotional:
        contour *= f0_raise
    x = pulse_train(contour, n, fs, rng.uniform(0, 2 * np.pi))

    # piecewise vowel sequence, filtered block-wise with state carried over
    n_vowels = int(rng.integers(3, 5))
    order = rng.integers(0, len(_VOWELS), n_vowels)
    bounds = np.linspace(0, n, n_vowels + 1).astype(int)
    y = np.empty(n)
    zi = None
    for v, lo, hi in zip(order, bounds[:-1], bounds[1:]):
        formants = [(f * speaker.formant_scale * rng.uniform(0.97, 1.03), bw)
                    for f, bw in _VOWELS[v]]
        seg = x[lo:hi]
        sos = np.vstack([np.concatenate([b, [0.0, 0.0], a])
                         for b, a in (resonator(f, bw, fs) for f, bw in formants)])
        if zi is None:
            zi = np.zeros((len(formants), 2))
        seg, zi = sps.sosfilt(sos, seg, zi=zi)
        y[lo:hi] = seg
    envelope = np.minimum(1.0, np.minimum(t, t[-1] - t) / 0.04)
    y = y * envelope
    y = 0.25 * y / np.max(np.abs(y))
    y += 1e-3 * rng.standard_normal(n)
    w = Waveform(y, fs)
    if emotional:
        w = apply_tilt(w, tilt_db_per_khz)
        w = Waveform(0.25 * w.samples / np.max(np.abs(w.samples)), fs)
    return w
