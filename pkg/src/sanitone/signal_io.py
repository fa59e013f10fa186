"""PCM16 mono WAV input/output and band-limited resampling."""
from __future__ import annotations

import wave
from dataclasses import dataclass
from functools import lru_cache
from math import gcd

import numpy as np
from scipy import signal as sps

from .errors import EmptySignal, FormatError, UnsupportedChannels

PIPELINE_RATE = 16000
_PCM_SCALE = 32768.0

# resampler design: stopband begins at the lower Nyquist, transition band is
# the top 10% below it, attenuation comfortably past the 60 dB requirement
_STOPBAND_DB = 80.0
_TRANSITION = 0.1


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        x = np.ascontiguousarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return (self.sample_rate_hz == other.sample_rate_hz
                and np.array_equal(self.samples, other.samples))


def read_wav(path) -> Waveform:
    """Read a mono PCM16 RIFF/WAVE file (path or binary file object),
    scaling samples into [-1, 1)."""
    try:
        with wave.open(path if hasattr(path, "read") else str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if width != 2:
        raise FormatError(f"{path}: {8 * width}-bit samples, expected PCM16")
    if channels != 1:
        raise UnsupportedChannels(f"{path}: {channels} channels, expected mono")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _PCM_SCALE
    return Waveform(data, rate)


def quantize(samples: np.ndarray) -> np.ndarray:
    """Hard-clip to [-1, 1] and round to int16 codes."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    return np.clip(np.round(x * _PCM_SCALE), -32768, 32767).astype("<i2")


def write_wav(path, w: Waveform) -> None:
    if len(w) == 0:
        raise EmptySignal("refusing to write an empty waveform")
    with wave.open(path if hasattr(path, "write") else str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate_hz)
        fh.writeframes(quantize(w.samples).tobytes())


@lru_cache(maxsize=16)
def _lowpass(up: int, down: int, src_hz: int, dst_hz: int) -> np.ndarray:
    fs = float(src_hz * up)
    nyq = 0.5 * min(src_hz, dst_hz)
    width = _TRANSITION * nyq
    numtaps, beta = sps.kaiserord(_STOPBAND_DB, width / (0.5 * fs))
    numtaps |= 1  # odd length keeps the group delay an integer
    taps = sps.firwin(numtaps, nyq - 0.5 * width, window=("kaiser", beta), fs=fs)
    return taps * up


def resample(w: Waveform, target_hz: int) -> Waveform:
    """Kaiser-windowed sinc resampling through a polyphase filter bank.

    Returns ``w`` itself when the rates already agree.
    """
    target_hz = int(target_hz)
    if target_hz <= 0:
        raise ValueError("target_hz must be positive")
    if target_hz == w.sample_rate_hz:
        return w
    g = gcd(target_hz, w.sample_rate_hz)
    up, down = target_hz // g, w.sample_rate_hz // g
    taps = _lowpass(up, down, w.sample_rate_hz, target_hz)
    y = sps.resample_poly(w.samples, up, down, window=taps)
    return Waveform(y, target_hz)
