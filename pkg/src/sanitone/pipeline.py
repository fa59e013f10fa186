"""Corpus handling and the end-to-end sanitization chain.

Sanitization runs in three timed stages:

preprocess
    resample to 16 kHz, vocoder analysis, mel-cepstral coding
convert
    normalized mel-cepstra through the generator, F0 through the
    log-Gaussian transform; aperiodicity and voicing are untouched
generate
    vocoder synthesis, cropped or padded to the input duration
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import os
import re
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from .cyclegan import FrozenFilter
from .errors import FilterConfigMismatch, InfeasibleSplit, MalformedName, SanitoneError
from .features import (DEFAULT_ALPHA, DEFAULT_ORDER, McepSequence, convert_log_f0,
                       mcep_to_sp, normalize, sp_to_mcep)
from .signal_io import PIPELINE_RATE, Waveform, read_wav, resample
from .vocoder import AnalysisResult, VocoderConfig, analyze, dumps_analysis, loads_analysis, synthesize


class EmotionLabel(IntEnum):
    NEUTRAL = 0
    CALM = 1
    HAPPY = 2
    SAD = 3
    ANGRY = 4
    FEARFUL = 5
    DISGUST = 6
    SURPRISED = 7

    @classmethod
    def parse(cls, text) -> "EmotionLabel":
        if isinstance(text, cls):
            return text
        s = str(text).strip()
        if s.isdigit():
            return cls(int(s))
        return cls[s.upper()]


@dataclass(frozen=True)
class CorpusEntry:
    path: str
    actor_id: int
    emotion: EmotionLabel
    statement_id: int = 1
    repetition: int = 1
    intensity: int = 1
    role: str = ""      # "train" | "test" | ""
    domain: str = ""    # "X" (emotional) | "Y" (neutral) | ""


@dataclass(frozen=True)
class Corpus:
    entries: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def select(self, role=None, domain=None) -> "Corpus":
        return Corpus(e for e in self.entries
                      if (role is None or e.role == role) and (domain is None or e.domain == domain))


_RAVDESS = re.compile(r"^(\d{2})-(\d{2})-(\d{2})-(\d{2})-(\d{2})-(\d{2})-(\d{2})\.wav$", re.I)


def parse_ravdess_filename(name) -> CorpusEntry:
    """modality-channel-emotion-intensity-statement-repetition-actor.wav"""
    m = _RAVDESS.match(os.path.basename(str(name)))
    if not m:
        raise MalformedName(f"not a RAVDESS file name: {name!r}")
    _, _, emotion, intensity, statement, repetition, actor = (int(g) for g in m.groups())
    if not 1 <= emotion <= 8:
        raise MalformedName(f"emotion code {emotion:02d} out of range in {name!r}")
    if not 1 <= actor <= 24:
        raise MalformedName(f"actor {actor:02d} out of range in {name!r}")
    return CorpusEntry(str(name), actor, EmotionLabel(emotion - 1), statement, repetition, intensity)


def scan_ravdess(directory, emotional=(EmotionLabel.HAPPY, EmotionLabel.ANGRY)) -> Corpus:
    """Collect RAVDESS files below ``directory``; neutral goes to Y, the
    ``emotional`` labels to X, everything else is dropped."""
    emotional = {EmotionLabel.parse(e) for e in emotional}
    entries = []
    for path in sorted(Path(directory).rglob("*.wav")):
        try:
            e = parse_ravdess_filename(path)
        except MalformedName:
            continue
        e = replace(e, path=str(path))
        if e.emotion == EmotionLabel.NEUTRAL:
            entries.append(replace(e, domain="Y"))
        elif e.emotion in emotional:
            entries.append(replace(e, domain="X"))
    return Corpus(entries)


def _statement_partition(entries, n_train, n_test, rng):
    by_statement = {}
    for i, e in enumerate(entries):
        by_statement.setdefault(e.statement_id, []).append(i)
    statements = sorted(by_statement)
    if len(statements) > 16:
        raise InfeasibleSplit("disjoint-text splitting supports at most 16 statements")
    options = []
    for r in range(1, len(statements)):
        for subset in itertools.combinations(statements, r):
            n_in = sum(len(by_statement[s]) for s in subset)
            if n_in >= n_train and len(entries) - n_in >= n_test:
                options.append(subset)
    if not options:
        raise InfeasibleSplit(f"no statement partition gives {n_train} train / {n_test} test entries")
    chosen = set(options[int(rng.integers(len(options)))])
    train_pool = [i for s in statements if s in chosen for i in by_statement[s]]
    test_pool = [i for s in statements if s not in chosen for i in by_statement[s]]
    return train_pool, test_pool


def split_corpus(c: Corpus, train=0.8, test=None, seed: int = 0,
                 disjoint_text: bool = False) -> Corpus:
    """Tag entries as train/test.

    ``train`` is either a fraction of the corpus or, together with ``test``,
    an explicit count. Entries not drawn into either split get an empty role.
    With ``disjoint_text`` no statement id appears on both sides.
    """
    entries = list(c.entries)
    n = len(entries)
    if test is None:
        if not 0 < train < 1:
            raise InfeasibleSplit("train fraction must lie strictly between 0 and 1")
        n_train = int(round(train * n))
        n_test = n - n_train
    else:
        n_train, n_test = int(train), int(test)
    if n_train < 0 or n_test < 0 or n_train + n_test > n:
        raise InfeasibleSplit(f"cannot take {n_train} + {n_test} entries from {n}")
    rng = np.random.default_rng(seed)
    if disjoint_text:
        train_pool, test_pool = _statement_partition(entries, n_train, n_test, rng)
    else:
        order = rng.permutation(n)
        train_pool, test_pool = list(order[:n_train]), list(order[n_train:])
    train_idx = set(rng.permutation(train_pool)[:n_train].tolist())
    test_idx = set(rng.permutation(test_pool)[:n_test].tolist())
    roles = ["train" if i in train_idx else "test" if i in test_idx else "" for i in range(n)]
    return Corpus(replace(e, role=r) for e, r in zip(entries, roles))


MANIFEST_COLUMNS = ("path", "actor", "emotion", "statement", "repetition", "intensity", "role", "domain")


def write_manifest(c: Corpus, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for e in c:
            w.writerow([e.path, e.actor_id, e.emotion.name.lower(), e.statement_id,
                        e.repetition, e.intensity, e.role, e.domain])


def read_manifest(path) -> Corpus:
    """Read a manifest; relative paths are resolved against its directory."""
    base = Path(path).parent
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise MalformedName(f"{path}: manifest lacks columns {sorted(missing)}")
        for row in reader:
            p = Path(row["path"])
            entries.append(CorpusEntry(
                str(p if p.is_absolute() else base / p), int(row["actor"]),
                EmotionLabel.parse(row["emotion"]), int(row["statement"]), int(row["repetition"]),
                int(row["intensity"]), row["role"].strip(), row["domain"].strip()))
    return Corpus(entries)


# ---------------------------------------------------------------------------
# feature extraction
# ---------------------------------------------------------------------------

def max_threads() -> int:
    try:
        n = int(os.environ.get("SANITONE_THREADS", "1"))
    except ValueError:
        n = 1
    return max(n, 1)


@dataclass
class FeatureCache:
    analyses: dict = field(default_factory=dict)   # path -> AnalysisResult
    mceps: dict = field(default_factory=dict)      # path -> McepSequence
    errors: dict = field(default_factory=dict)     # path -> message

    def __len__(self):
        return len(self.analyses)


def _cache_key(path, cfg, order, alpha) -> str:
    st = os.stat(path)
    ident = f"{os.path.abspath(path)}|{st.st_size}|{st.st_mtime_ns}|{cfg}|{order}|{alpha}"
    return hashlib.sha1(ident.encode()).hexdigest()


def _dumps_entry(a: AnalysisResult, m: McepSequence) -> bytes:
    head = struct.pack("<IId", m.coeffs.shape[0], m.order, m.alpha)
    return dumps_analysis(a) + head + m.coeffs.astype("<f8").tobytes()


def _loads_entry(data: bytes):
    a, pos = loads_analysis(data)
    frames, order, alpha = struct.unpack_from("<IId", data, pos)
    pos += struct.calcsize("<IId")
    coeffs = np.frombuffer(data, "<f8", frames * (order + 1), pos).reshape(frames, order + 1)
    return a, McepSequence(coeffs.astype(np.float64), order, alpha)


def analyze_file(path, cfg: VocoderConfig = VocoderConfig(), order=DEFAULT_ORDER,
                 alpha=DEFAULT_ALPHA):
    w = resample(read_wav(path), PIPELINE_RATE)
    a = analyze(w, cfg)
    return a, sp_to_mcep(a.spectral_envelope, order, alpha)


def extract_features(corpus, cfg: VocoderConfig = VocoderConfig(), order: int = DEFAULT_ORDER,
                     alpha: float = DEFAULT_ALPHA, cache_dir=None, threads=None) -> FeatureCache:
    """Analyse every entry, reusing on-disk results when the file is unchanged.

    Failures are recorded in ``errors`` and do not stop the batch.
    """
    paths = [e.path if isinstance(e, CorpusEntry) else str(e) for e in corpus]
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)

    def work(path):
        try:
            blob = None
            if cache_dir is not None:
                blob = os.path.join(cache_dir, _cache_key(path, cfg, order, alpha) + ".feat")
                if os.path.exists(blob):
                    with open(blob, "rb") as fh:
                        return _loads_entry(fh.read())
            a, m = analyze_file(path, cfg, order, alpha)
            if blob is not None:
                tmp = blob + ".tmp"
                with open(tmp, "wb") as fh:
                    fh.write(_dumps_entry(a, m))
                os.replace(tmp, blob)
            return a, m
        except (SanitoneError, OSError, ValueError) as exc:
            return exc

    threads = threads or max_threads()
    if threads > 1 and len(paths) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, paths))
    else:
        results = [work(p) for p in paths]
    out = FeatureCache()
    for path, r in zip(paths, results):
        if isinstance(r, Exception):
            out.errors[path] = f"{type(r).__name__}: {r}"
        else:
            out.analyses[path], out.mceps[path] = r
    return out


# ---------------------------------------------------------------------------
# sanitization
# ---------------------------------------------------------------------------

def check_filter(f: FrozenFilter, cfg: VocoderConfig | None = None) -> None:
    if cfg is not None and cfg != f.vocoder:
        raise FilterConfigMismatch(f"filter was built for {f.vocoder}, caller asked for {cfg}")
    dim = f.mcep_order + 1
    if f.feature_stats.dim != dim or f.arch.feature_dim != dim:
        raise FilterConfigMismatch(
            f"mel-cepstral order {f.mcep_order} disagrees with feature width "
            f"{f.feature_stats.dim}/{f.arch.feature_dim}")
    if f.mcep_order > f.vocoder.fft_size // 2:
        raise FilterConfigMismatch("mel-cepstral order exceeds half the FFT size")


def preprocess(w: Waveform, f: FrozenFilter):
    """Resample and analyse; returns ``(analysis, mcep)``."""
    w16 = resample(w, PIPELINE_RATE)
    a = analyze(w16, f.vocoder)
    return a, sp_to_mcep(a.spectral_envelope, f.mcep_order, f.mcep_alpha)


def convert(a: AnalysisResult, m: McepSequence, f: FrozenFilter) -> AnalysisResult:
    """Apply the filter to an analysis.

    The generator's change to the denormalized mel-cepstrum is applied to the
    analysed envelope as a multiplicative correction, so envelope detail
    beyond the cepstral order is kept and an unchanged cepstrum leaves the
    envelope exactly as it was. With ``energy_passthrough`` the change to
    c0 is discarded.
    """
    z = normalize(m, f.feature_stats).coeffs
    delta = (f.convert(z).astype(np.float64) - z) * f.feature_stats.std
    if f.energy_passthrough:
        delta[:, 0] = 0.0
    gain = mcep_to_sp(m.with_coeffs(delta), a.fft_size)
    f0 = convert_log_f0(a.f0, f.f0_source, f.f0_target)
    return a.replace(f0=f0, spectral_envelope=a.spectral_envelope * gain)


def generate(a: AnalysisResult, n_samples: int, seed: int = 0) -> Waveform:
    y = synthesize(a, seed).samples
    if len(y) >= n_samples:
        y = y[:n_samples]
    else:
        y = np.pad(y, (0, n_samples - len(y)))
    return Waveform(y, a.sample_rate_hz)


def output_length(w: Waveform) -> int:
    return int(round(len(w) * PIPELINE_RATE / w.sample_rate_hz))


def sanitize(w: Waveform, f: FrozenFilter, cfg: VocoderConfig | None = None,
             seed: int = 0) -> Waveform:
    """Strip the emotional style from ``w``; output is 16 kHz, same duration."""
    check_filter(f, cfg)
    a, m = preprocess(w, f)
    return generate(convert(a, m, f), output_length(w), seed)


def round_trip(w: Waveform, cfg: VocoderConfig = VocoderConfig(), seed: int = 0) -> Waveform:
    """Analysis and resynthesis with nothing in between, framed like sanitize."""
    a = analyze(resample(w, PIPELINE_RATE), cfg)
    return generate(a, output_length(w), seed)
