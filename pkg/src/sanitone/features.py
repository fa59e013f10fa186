"""Mel-cepstral coding of spectral envelopes and log-F0 statistics.

The cepstrum is defined on a frequency axis warped by the first-order
all-pass map, so that with ``order`` coefficients c_0..c_M::

    log SP(w) = c_0 + 2 * sum_m c_m cos(m * warp(w))

Coding is a weighted least-squares fit of that series to the log envelope
sampled at the FFT bins, with weights that turn the sum over bins into a
quadrature on the warped axis. With ``alpha = 0`` and full order this is
exactly the inverse-DFT cepstrum; re-coding a decoded envelope is exact up to
rounding because the decoded log envelope already lies in the fitted span.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, InsufficientVoicedFrames, NonPositiveEnvelope
from .vocoder import F0Track

STD_FLOOR = 1e-6
DEFAULT_ORDER = 24
DEFAULT_ALPHA = 0.42


@dataclass(frozen=True, eq=False)
class McepSequence:
    coeffs: np.ndarray
    order: int = DEFAULT_ORDER
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        c = np.ascontiguousarray(self.coeffs, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != self.order + 1:
            raise DimensionMismatch(f"expected frames x {self.order + 1}, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("mel-cepstrum must be finite")
        object.__setattr__(self, "coeffs", c)

    def __len__(self):
        return self.coeffs.shape[0]

    def with_coeffs(self, coeffs) -> "McepSequence":
        return McepSequence(coeffs, self.order, self.alpha)


def warp_frequency(omega: np.ndarray, alpha: float) -> np.ndarray:
    """Phase response of the all-pass (z^-1 - alpha) / (1 - alpha z^-1), negated."""
    omega = np.asarray(omega, dtype=np.float64)
    return omega + 2.0 * np.arctan2(alpha * np.sin(omega), 1.0 - alpha * np.cos(omega))


@lru_cache(maxsize=32)
def _basis(fft_size: int, order: int, alpha: float):
    bins = fft_size // 2 + 1
    omega = 2 * np.pi * np.arange(bins) / fft_size
    m = np.arange(order + 1)
    scale = np.where((m == 0) | (m == fft_size // 2), 1.0, 2.0)
    basis = scale * np.cos(np.outer(warp_frequency(omega, alpha), m))
    # quadrature weights on the warped axis: trapezoid times d(warp)/d(omega)
    weights = (1 - alpha ** 2) / (1 - 2 * alpha * np.cos(omega) + alpha ** 2)
    weights[[0, -1]] *= 0.5
    sw = np.sqrt(weights)[:, None]
    projector = np.linalg.pinv(basis * sw) * sw.T
    basis.setflags(write=False)
    projector.setflags(write=False)
    return basis, projector


def sp_to_mcep(sp: np.ndarray, order: int = DEFAULT_ORDER,
               alpha: float = DEFAULT_ALPHA) -> McepSequence:
    sp = np.atleast_2d(np.asarray(sp, dtype=np.float64))
    if not np.all(sp > 0):
        raise NonPositiveEnvelope("spectral envelope must be strictly positive")
    fft_size = 2 * (sp.shape[1] - 1)
    if order > fft_size // 2:
        raise ValueError("order cannot exceed fft_size / 2")
    _, projector = _basis(fft_size, int(order), float(alpha))
    return McepSequence(np.log(sp) @ projector.T, int(order), float(alpha))


def mcep_to_sp(m: McepSequence, fft_size: int) -> np.ndarray:
    basis, _ = _basis(int(fft_size), m.order, m.alpha)
    return np.exp(m.coeffs @ basis.T)


def log_spectral_distortion(sp_a: np.ndarray, sp_b: np.ndarray) -> np.ndarray:
    """Per-frame RMS difference in dB between two power envelopes."""
    diff = 10.0 * np.log10(np.asarray(sp_a) / np.asarray(sp_b))
    return np.sqrt(np.mean(diff ** 2, axis=-1))


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class F0Stats:
    mean_log_f0: float
    std_log_f0: float
    voiced_frame_count: int

    def to_dict(self):
        return {"mean_log_f0": self.mean_log_f0, "std_log_f0": self.std_log_f0,
                "voiced_frame_count": self.voiced_frame_count}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["mean_log_f0"]), float(d["std_log_f0"]), int(d["voiced_frame_count"]))


def compute_f0_stats(tracks) -> F0Stats:
    """Mean and (population) standard deviation of ln F0 over voiced frames."""
    voiced = [t.values_hz[t.values_hz > 0] for t in tracks]
    logs = np.log(np.concatenate(voiced)) if voiced else np.empty(0)
    if logs.size < 2:
        raise InsufficientVoicedFrames(f"need at least 2 voiced frames, got {logs.size}")
    return F0Stats(float(np.mean(logs)), max(float(np.std(logs)), STD_FLOOR), int(logs.size))


def convert_log_f0(track: F0Track, src: F0Stats, tgt: F0Stats) -> F0Track:
    """Map voiced F0 values through the log-Gaussian transform src -> tgt."""
    values = track.values_hz.copy()
    if src == tgt:
        return F0Track(values, track.frame_period_ms)
    v = values > 0
    values[v] = np.exp((np.log(values[v]) - src.mean_log_f0) * tgt.std_log_f0 / src.std_log_f0
                       + tgt.mean_log_f0)
    return F0Track(values, track.frame_period_ms)


@dataclass(frozen=True, eq=False)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR)
        if mean.shape != std.shape or mean.ndim != 1:
            raise DimensionMismatch("mean and std must be vectors of equal length")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def fit(cls, sequences) -> "FeatureStats":
        frames = np.concatenate([s.coeffs if isinstance(s, McepSequence) else np.asarray(s)
                                 for s in sequences], axis=0)
        return cls(frames.mean(axis=0), frames.std(axis=0))

    def __eq__(self, other):
        if not isinstance(other, FeatureStats):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.std, other.std)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


def _check_width(m: McepSequence, s: FeatureStats):
    if m.coeffs.shape[1] != s.dim:
        raise DimensionMismatch(f"features have {m.coeffs.shape[1]} dims, stats have {s.dim}")


def normalize(m: McepSequence, s: FeatureStats) -> McepSequence:
    _check_width(m, s)
    return m.with_coeffs((m.coeffs - s.mean) / s.std)


def denormalize(m: McepSequence, s: FeatureStats) -> McepSequence:
    _check_width(m, s)
    return m.with_coeffs(m.coeffs * s.std + s.mean)
