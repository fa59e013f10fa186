"""Source-filter analysis and synthesis of speech.

A waveform is decomposed at a fixed frame rate into

* an F0 track (0 marks unvoiced frames),
* a smooth power spectral envelope, scaled as a power spectral density per
  sample so white noise of variance s2 analyses to a flat envelope of s2,
* a per-bin aperiodicity in [0, 1] giving the noise share of that power,

and rebuilt by overlap-adding minimum-phase responses excited by pitch pulses
and white noise.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps

from .errors import FrameMismatch, InvalidAnalysis, TooShort
from .signal_io import Waveform

# F0 search
_F0_BAND_HZ = (50.0, 1500.0)
_F0_WINDOW_PERIODS = 2.0      # NCCF window in periods of the floor F0
_VOICING_THRESHOLD = 0.6
_OCTAVE_RATIO = 0.9           # shortest lag within this share of the best peak wins
_LAG_WEIGHT = 0.02
_JUMP_WEIGHT = 2.0
_N_CANDIDATES = 5

# envelope
_UNVOICED_F0_HZ = 500.0
_COMPENSATION_Q1 = -0.15

# aperiodicity bands (Hz); the last edge is extended to Nyquist
_AP_EDGES = (0.0, 500.0, 1000.0, 2000.0, 3000.0, 4000.0, 5500.0, 8000.0)


@dataclass(frozen=True)
class VocoderConfig:
    frame_period_ms: float = 5.0
    fft_size: int = 1024
    f0_floor_hz: float = 71.0
    f0_ceil_hz: float = 800.0
    envelope_floor: float = 1e-12

    def __post_init__(self):
        if self.frame_period_ms <= 0:
            raise ValueError("frame_period_ms must be positive")
        n = int(self.fft_size)
        if n < 512 or n & (n - 1):
            raise ValueError("fft_size must be a power of two >= 512")
        if not 0 < self.f0_floor_hz < self.f0_ceil_hz:
            raise ValueError("need 0 < f0_floor_hz < f0_ceil_hz")
        if self.envelope_floor <= 0:
            raise ValueError("envelope_floor must be positive")

    def hop(self, sample_rate_hz: int) -> float:
        return sample_rate_hz * self.frame_period_ms / 1000.0

    def n_frames(self, n_samples: int, sample_rate_hz: int) -> int:
        return int(n_samples / self.hop(sample_rate_hz)) + 1


@dataclass(frozen=True, eq=False)
class F0Track:
    values_hz: np.ndarray
    frame_period_ms: float = 5.0

    def __post_init__(self):
        v = np.ascontiguousarray(self.values_hz, dtype=np.float64)
        if v.ndim != 1 or np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("F0 values must be a finite nonnegative vector")
        object.__setattr__(self, "values_hz", v)

    def __len__(self):
        return self.values_hz.shape[0]

    @property
    def voiced(self) -> np.ndarray:
        return self.values_hz > 0


@dataclass(frozen=True, eq=False)
class AnalysisResult:
    f0: F0Track
    spectral_envelope: np.ndarray
    aperiodicity: np.ndarray
    sample_rate_hz: int = 16000
    fft_size: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "spectral_envelope",
                           np.ascontiguousarray(self.spectral_envelope, dtype=np.float64))
        object.__setattr__(self, "aperiodicity",
                           np.ascontiguousarray(self.aperiodicity, dtype=np.float64))

    @property
    def n_frames(self) -> int:
        return len(self.f0)

    @property
    def frame_period_ms(self) -> float:
        return self.f0.frame_period_ms

    def validate(self) -> "AnalysisResult":
        """Raise InvalidAnalysis unless every structural invariant holds."""
        bins = self.fft_size // 2 + 1
        sp, ap = self.spectral_envelope, self.aperiodicity
        if sp.shape != (self.n_frames, bins) or ap.shape != (self.n_frames, bins):
            raise InvalidAnalysis(
                f"expected {self.n_frames}x{bins} matrices, got SP {sp.shape} and AP {ap.shape}")
        if not (np.all(np.isfinite(sp)) and np.all(sp > 0)):
            raise InvalidAnalysis("spectral envelope must be finite and strictly positive")
        if not (np.all(np.isfinite(ap)) and np.all((ap >= 0) & (ap <= 1))):
            raise InvalidAnalysis("aperiodicity must lie in [0, 1]")
        if self.sample_rate_hz <= 0:
            raise InvalidAnalysis("sample rate must be positive")
        return self

    def replace(self, **changes) -> "AnalysisResult":
        fields = dict(f0=self.f0, spectral_envelope=self.spectral_envelope,
                      aperiodicity=self.aperiodicity, sample_rate_hz=self.sample_rate_hz,
                      fft_size=self.fft_size)
        fields.update(changes)
        return AnalysisResult(**fields)


def _frame_centers(n_frames: int, hop: float) -> np.ndarray:
    return np.round(np.arange(n_frames) * hop).astype(np.int64)


def _check_input(w: Waveform, cfg: VocoderConfig) -> int:
    hop = cfg.hop(w.sample_rate_hz)
    if len(w) < 2 * hop:
        raise TooShort(f"{len(w)} samples is shorter than two frames")
    return cfg.n_frames(len(w), w.sample_rate_hz)


def _check_frames(w: Waveform, f0: F0Track, cfg: VocoderConfig) -> None:
    expected = cfg.n_frames(len(w), w.sample_rate_hz)
    if len(f0) != expected:
        raise FrameMismatch(f"F0 track has {len(f0)} frames, waveform implies {expected}")


# ---------------------------------------------------------------------------
# F0
# ---------------------------------------------------------------------------

def _nccf(x: np.ndarray, centers: np.ndarray, window: int, max_lag: int) -> np.ndarray:
    """Normalized cross-correlation for lags 0..max_lag, one row per frame."""
    seg_len = window + max_lag
    half = window // 2
    pad = np.concatenate([np.zeros(half), x, np.zeros(seg_len)])
    segs = sliding_window_view(pad, seg_len)[centers]
    nfft = 1 << int(np.ceil(np.log2(seg_len)))
    head = np.fft.rfft(segs[:, :window], nfft)
    full = np.fft.rfft(segs, nfft)
    r = np.fft.irfft(np.conj(head) * full, nfft)[:, :max_lag + 1]
    sq = np.concatenate([np.zeros((len(centers), 1)), np.cumsum(segs ** 2, axis=1)], axis=1)
    lags = np.arange(max_lag + 1)
    e_lag = sq[:, lags + window] - sq[:, lags]
    e0 = e_lag[:, :1]
    denom = np.sqrt(e0 * e_lag)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 1e-20, r / np.maximum(denom, 1e-300), 0.0)
    return np.clip(out, -1.0, 1.0)


def _peaks(row: np.ndarray, lo: int, hi: int):
    """Local maxima of ``row`` on [lo, hi], refined by parabolic interpolation."""
    seg = row[lo - 1:hi + 2]
    idx = np.flatnonzero((seg[1:-1] > seg[:-2]) & (seg[1:-1] >= seg[2:])) + 1
    out = []
    for i in idx:
        a, b, c = seg[i - 1], seg[i], seg[i + 1]
        den = a - 2 * b + c
        delta = 0.5 * (a - c) / den if den < 0 else 0.0
        delta = float(np.clip(delta, -0.5, 0.5))
        value = b - 0.25 * (a - c) * delta
        out.append((lo - 1 + i + delta, min(value, 1.0)))
    return out


def estimate_f0(w: Waveform, cfg: VocoderConfig = VocoderConfig()) -> F0Track:
    """Pitch tracking by normalized autocorrelation with continuity tracking.

    Candidate lags are the NCCF peaks of the band-limited signal; a Viterbi
    pass over each voiced run trades peak height against log-F0 jumps.
    """
    n_frames = _check_input(w, cfg)
    fs = w.sample_rate_hz
    hop = cfg.hop(fs)
    hi_cut = min(_F0_BAND_HZ[1], 0.45 * fs)
    sos = sps.butter(4, [_F0_BAND_HZ[0], hi_cut], btype="bandpass", fs=fs, output="sos")
    x = sps.sosfiltfilt(sos, w.samples)

    lag_min = max(2, int(np.floor(fs / cfg.f0_ceil_hz)))
    lag_max = int(np.ceil(fs / cfg.f0_floor_hz))
    window = int(round(_F0_WINDOW_PERIODS * fs / cfg.f0_floor_hz))
    centers = _frame_centers(n_frames, hop)
    r = _nccf(x, centers, window, lag_max + 1)

    candidates = []
    for i in range(n_frames):
        peaks = _peaks(r[i], lag_min, lag_max)
        peaks = [(lag, v) for lag, v in peaks if fs / cfg.f0_ceil_hz <= lag <= fs / cfg.f0_floor_hz]
        if not peaks:
            candidates.append([])
            continue
        best = max(v for _, v in peaks)
        if best < _VOICING_THRESHOLD:
            candidates.append([])
            continue
        # favour the shortest lag that is nearly as periodic as the best one
        first = min(lag for lag, v in peaks if v >= _OCTAVE_RATIO * best)
        scored = []
        for lag, v in peaks:
            if v < _VOICING_THRESHOLD:
                continue
            cost = (1.0 - v) + _LAG_WEIGHT * lag / lag_max
            if lag != first:
                cost += 0.05
            scored.append((cost, lag))
        scored.sort()
        candidates.append(scored[:_N_CANDIDATES])

    voiced = np.array([bool(c) for c in candidates])
    # isolated single voiced or unvoiced frames are treated as flicker
    v = voiced.copy()
    for i in range(1, n_frames - 1):
        if voiced[i] != voiced[i - 1] and voiced[i] != voiced[i + 1]:
            v[i] = voiced[i - 1]
    f0 = np.zeros(n_frames)
    i = 0
    while i < n_frames:
        if not v[i]:
            i += 1
            continue
        j = i
        while j < n_frames and v[j]:
            j += 1
        f0[i:j] = _track(candidates[i:j], r[i:j], fs, lag_min, lag_max)
        i = j
    f0[f0 > 0] = np.clip(f0[f0 > 0], cfg.f0_floor_hz, cfg.f0_ceil_hz)
    return F0Track(f0, cfg.frame_period_ms)


def _track(cands, r, fs, lag_min, lag_max) -> np.ndarray:
    """Viterbi over per-frame lag candidates for one voiced run."""
    filled = []
    for k, c in enumerate(cands):
        if not c:
            # frame voiced by smoothing only: offer its strongest raw peak
            peaks = _peaks(r[k], lag_min, lag_max) or [(0.5 * (lag_min + lag_max), 0.0)]
            lag, val = max(peaks, key=lambda p: p[1])
            c = [(1.0 - val + 0.5, lag)]
        filled.append(c)
    cost = np.array([c for c, _ in filled[0]])
    back = []
    for prev, cur in zip(filled[:-1], filled[1:]):
        prev_lag = np.array([lag for _, lag in prev])
        cur_lag = np.array([lag for _, lag in cur])
        local = np.array([c for c, _ in cur])
        jump = np.abs(np.log(cur_lag[:, None] / prev_lag[None, :]))
        total = cost[None, :] + _JUMP_WEIGHT * jump
        arg = np.argmin(total, axis=1)
        back.append(arg)
        cost = total[np.arange(len(cur)), arg] + local
    path = [int(np.argmin(cost))]
    for arg in reversed(back):
        path.append(int(arg[path[-1]]))
    path.reverse()
    return np.array([fs / filled[k][p][1] for k, p in enumerate(path)])


# ---------------------------------------------------------------------------
# spectral envelope
# ---------------------------------------------------------------------------

def _hann(n: int) -> np.ndarray:
    # symmetric, nonzero endpoints excluded
    return 0.5 - 0.5 * np.cos(2 * np.pi * (np.arange(n) + 1) / (n + 1))


def _segment(x: np.ndarray, center: int, length: int) -> np.ndarray:
    start = center - length // 2
    lo, hi = max(start, 0), min(start + length, len(x))
    out = np.zeros(length)
    if hi > lo:
        out[lo - start:hi - start] = x[lo:hi]
    return out


def _linear_smoothing(power: np.ndarray, width_bins: float) -> np.ndarray:
    """Moving average of width ``width_bins`` over a one-sided spectrum,
    treating the spectrum as even around DC and Nyquist."""
    n = len(power)
    ext = int(np.ceil(width_bins)) + 2
    mirrored = np.concatenate([power[ext:0:-1], power, power[-2:-ext - 2:-1]])
    # cumulative integral of the piecewise-constant spectrum, bin k spanning [k-1/2, k+1/2)
    cum = np.concatenate([[0.0], np.cumsum(mirrored)])
    grid = np.arange(len(cum)) - 0.5 - ext
    k = np.arange(n, dtype=np.float64)
    hi = np.interp(k + 0.5 * width_bins, grid, cum)
    lo = np.interp(k - 0.5 * width_bins, grid, cum)
    return (hi - lo) / width_bins


def _lifters(f0: float, nfft: int, fs: int) -> np.ndarray:
    q = np.arange(nfft // 2 + 1) / fs
    smoothing = np.sinc(f0 * q)
    compensation = (1.0 - 2 * _COMPENSATION_Q1) + 2 * _COMPENSATION_Q1 * np.cos(2 * np.pi * q * f0)
    one_sided = smoothing * compensation
    return np.concatenate([one_sided, one_sided[-2:0:-1]])


def estimate_spectral_envelope(w: Waveform, f0: F0Track,
                               cfg: VocoderConfig = VocoderConfig()) -> np.ndarray:
    """Pitch-adaptive power envelope: a Hann window three periods long,
    F0-wide linear smoothing, then cepstral liftering."""
    _check_frames(w, f0, cfg)
    fs, nfft = w.sample_rate_hz, cfg.fft_size
    centers = _frame_centers(len(f0), cfg.hop(fs))
    out = np.empty((len(f0), nfft // 2 + 1))
    for i, (c, f) in enumerate(zip(centers, f0.values_hz)):
        f = f if f > 0 else _UNVOICED_F0_HZ
        n = min(int(round(3.0 * fs / f)) | 1, nfft - 1)
        win = _hann(n)
        seg = _segment(w.samples, int(c), n) * win
        if not np.any(seg):
            out[i] = cfg.envelope_floor
            continue
        power = np.abs(np.fft.rfft(seg, nfft)) ** 2 / np.sum(win ** 2)
        power = _linear_smoothing(power, f * nfft / fs)
        cep = np.fft.irfft(np.log(power + cfg.envelope_floor), nfft)
        env = np.exp(np.fft.rfft(cep * _lifters(f, nfft, fs)).real)
        out[i] = np.maximum(env, cfg.envelope_floor)
    return out


# ---------------------------------------------------------------------------
# aperiodicity
# ---------------------------------------------------------------------------

def _band_index(nfft: int, fs: int):
    freqs = np.arange(nfft // 2 + 1) * fs / nfft
    edges = np.array([e for e in _AP_EDGES if e < fs / 2] + [fs / 2])
    centers = 0.5 * (edges[:-1] + edges[1:])
    band = np.clip(np.searchsorted(edges, freqs, side="right") - 1, 0, len(centers) - 1)
    return freqs, band, centers


def estimate_aperiodicity(w: Waveform, f0: F0Track,
                          cfg: VocoderConfig = VocoderConfig()) -> np.ndarray:
    """Per-band noise share from the correlation between the signal and its
    copy shifted by one period; interpolated to FFT bins.

    For a periodic part P and noise N in a band, 1 - corr approaches N/(P+N).
    """
    _check_frames(w, f0, cfg)
    fs, nfft = w.sample_rate_hz, cfg.fft_size
    bins = nfft // 2 + 1
    freqs, band, band_centers = _band_index(nfft, fs)
    n_bands = len(band_centers)
    centers = _frame_centers(len(f0), cfg.hop(fs))
    out = np.ones((len(f0), bins))
    for i, (c, f) in enumerate(zip(centers, f0.values_hz)):
        if f <= 0:
            continue
        period = fs / f
        n = int(round(3.0 * period)) | 1
        buf_len = 1 << int(np.ceil(np.log2(1.5 * (n + period) + 64)))
        # tapered ends keep the circular fractional shift free of wrap-around ringing
        buf = _segment(w.samples, int(c), buf_len) * sps.windows.tukey(buf_len, 0.25)
        spec = np.fft.rfft(buf)
        omega = 2 * np.pi * np.arange(buf_len // 2 + 1) / buf_len
        ahead = np.fft.irfft(spec * np.exp(1j * omega * 0.5 * period), buf_len)
        behind = np.fft.irfft(spec * np.exp(-1j * omega * 0.5 * period), buf_len)
        start = buf_len // 2 - n // 2
        win = _hann(n)
        a = np.fft.rfft(ahead[start:start + n] * win, nfft)
        b = np.fft.rfft(behind[start:start + n] * win, nfft)
        cross = np.bincount(band, (a * np.conj(b)).real, minlength=n_bands)
        ea = np.bincount(band, np.abs(a) ** 2, minlength=n_bands)
        eb = np.bincount(band, np.abs(b) ** 2, minlength=n_bands)
        den = np.sqrt(ea * eb)
        total = den.sum()
        if total <= 0:
            continue
        ratio = np.where(den > 1e-14 * total, cross / np.maximum(den, 1e-300), 1.0)
        ap_band = np.clip(1.0 - ratio, 0.0, 1.0)
        out[i] = np.interp(freqs, band_centers, ap_band)
    return out


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------

def analyze(w: Waveform, cfg: VocoderConfig = VocoderConfig()) -> AnalysisResult:
    f0 = estimate_f0(w, cfg)
    sp = estimate_spectral_envelope(w, f0, cfg)
    ap = estimate_aperiodicity(w, f0, cfg)
    return AnalysisResult(f0, sp, ap, w.sample_rate_hz, cfg.fft_size)


def minimum_phase(log_magnitude: np.ndarray, nfft: int) -> np.ndarray:
    """One-sided spectrum of the minimum-phase filter with the given log magnitude."""
    cep = np.fft.irfft(log_magnitude, nfft, axis=-1)
    fold = np.zeros(nfft)
    fold[0] = 1.0
    fold[1:nfft // 2] = 2.0
    fold[nfft // 2] = 1.0
    return np.exp(np.fft.rfft(cep * fold, nfft, axis=-1))


def _remove_dc(pulse: np.ndarray, start: int, period: int) -> np.ndarray:
    # Hann windows one period long sum to a constant when spaced a period
    # apart, so a periodic train of these corrections is pure DC
    hann = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(period) / period)
    out = pulse.copy()
    out[start:start + period] -= pulse.sum() * hann / hann.sum()
    return out


def synthesize(a: AnalysisResult, seed: int = 0) -> Waveform:
    """Pulse-plus-noise overlap-add synthesis.

    Voiced frames emit pulses at F0 weighted by sqrt(T0 * SP * (1 - AP)) and a
    period-long white-noise burst shaped by sqrt(SP * AP); unvoiced stretches
    emit noise bursts only, at a fixed 500 Hz cadence.
    """
    a.validate()
    fs, nfft = a.sample_rate_hz, a.fft_size
    hop = fs * a.frame_period_ms / 1000.0
    n_frames = a.n_frames
    out_len = int(round(n_frames * hop))
    f0 = a.f0.values_hz
    frame_of_sample = np.minimum(np.round(np.arange(out_len) / hop).astype(np.int64), n_frames - 1)
    f0_s = f0[frame_of_sample]
    rate = np.where(f0_s > 0, f0_s, _UNVOICED_F0_HZ) / fs
    phase = np.concatenate([[0.0], np.cumsum(rate)])
    crossings = np.flatnonzero(np.floor(phase[1:]) > np.floor(phase[:-1]))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(out_len + nfft)
    # pulses are shifted by their sub-sample offset inside a buffer twice the
    # FFT size with half an FFT of pre-roll, so the interpolation ringing is
    # overlap-added in place instead of wrapping around
    long_fft, pre = 2 * nfft, nfft // 2
    omega = 2 * np.pi * np.arange(long_fft // 2 + 1) / long_fft
    out = np.zeros(out_len + long_fft + pre)
    log_sp = 0.5 * np.log(a.spectral_envelope)
    ap = a.aperiodicity
    tiny = 1e-30
    buf = np.zeros(long_fft)

    for n in crossings:
        # pulse time lies in (n, n+1] in sample units
        k = np.floor(phase[n + 1])
        t = n + (k - phase[n]) / (phase[n + 1] - phase[n])
        pos = int(np.floor(t))
        frac = t - pos
        i = int(min(round(t / hop), n_frames - 1))
        voiced = f0[i] > 0
        period = fs / (f0[i] if voiced else _UNVOICED_F0_HZ)
        seg_len = max(int(round(period)), 1)
        burst = np.zeros(nfft)
        burst[:seg_len] = noise[pos:pos + seg_len]
        spec = minimum_phase(log_sp[i] + 0.5 * np.log(ap[i] + tiny), nfft) * np.fft.rfft(burst)
        buf[:] = 0.0
        buf[pre:pre + nfft] = np.fft.irfft(spec, nfft)
        if voiced:
            periodic = minimum_phase(log_sp[i] + 0.5 * np.log(1.0 - ap[i] + tiny), nfft)
            shifted = np.zeros(long_fft)
            shifted[pre:pre + nfft] = np.fft.irfft(periodic, nfft)
            shifted = np.fft.irfft(np.fft.rfft(shifted) * np.exp(-1j * omega * frac),
                                   long_fft)
            buf += np.sqrt(period) * _remove_dc(shifted, pre, seg_len)
        # buf index pre corresponds to output sample pos
        out[pos:pos + long_fft] += buf
    out = out[pre:]
    return Waveform(out[:out_len], fs)


# ---------------------------------------------------------------------------
# binary dump
# ---------------------------------------------------------------------------

_DUMP_MAGIC = b"SANA"
_DUMP_HEADER = struct.Struct("<4sIQQIId")


def dumps_analysis(a: AnalysisResult) -> bytes:
    """Flat little-endian dump: header, then F0, SP, AP as float64 row-major."""
    a.validate()
    bins = a.fft_size // 2 + 1
    head = _DUMP_HEADER.pack(_DUMP_MAGIC, 1, a.n_frames, bins, a.sample_rate_hz,
                             a.fft_size, a.frame_period_ms)
    body = b"".join(np.ascontiguousarray(m, dtype="<f8").tobytes()
                    for m in (a.f0.values_hz, a.spectral_envelope, a.aperiodicity))
    return head + body


def loads_analysis(data: bytes, offset: int = 0):
    """Inverse of :func:`dumps_analysis`; returns ``(result, end_offset)``."""
    magic, version, frames, bins, fs, nfft, period = _DUMP_HEADER.unpack_from(data, offset)
    if magic != _DUMP_MAGIC or version != 1 or bins != nfft // 2 + 1:
        raise InvalidAnalysis("not an analysis dump")
    pos = offset + _DUMP_HEADER.size
    arrays = []
    for count in (frames, frames * bins, frames * bins):
        arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64))
        pos += 8 * count
    f0, sp, ap = arrays
    result = AnalysisResult(F0Track(f0, period), sp.reshape(frames, bins),
                            ap.reshape(frames, bins), fs, nfft)
    return result.validate(), pos


def dump_analysis(path, a: AnalysisResult) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_analysis(a))


def load_analysis(path) -> AnalysisResult:
    with open(path, "rb") as fh:
        return loads_analysis(fh.read())[0]
