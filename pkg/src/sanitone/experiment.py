"""The two-style toy experiment: train a filter on synthetic corpora and
measure how much style and speaker information survives sanitization."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import cyclegan as cg
from . import evaluation as ev
from . import toy
from .features import FeatureStats, compute_f0_stats, normalize, sp_to_mcep
from .pipeline import EmotionLabel, sanitize
from .vocoder import analyze

EMOTIONAL = int(EmotionLabel.ANGRY)
NEUTRAL = int(EmotionLabel.NEUTRAL)
N_SPECTRAL = 2 * 25  # mel-cepstral mean and std columns of utterance_features


@dataclass
class ToyCorpus:
    speakers: list
    train_x: list      # (speaker index, Waveform)
    train_y: list
    clf_x: list
    clf_y: list
    test_x: list


def make_toy_corpus(seed: int = 0, n_train: int = 40, n_test: int = 20,
                    n_speakers: int = 4) -> ToyCorpus:
    """Disjoint utterance sets for filter training, classifier training and testing."""
    speakers = toy.toy_speakers(n_speakers, seed)

    def draw(emotional, block, n):
        return [(i % n_speakers,
                 toy.toy_utterance(speakers[i % n_speakers], emotional, seed * 100000 + block + i))
                for i in range(n)]

    return ToyCorpus(speakers, draw(True, 0, n_train), draw(False, 1000, n_train),
                     draw(True, 2000, n_train), draw(False, 3000, n_train),
                     draw(True, 4000, n_test))


@dataclass
class ToyResult:
    seed: int
    raw_accuracy: float
    sanitized_accuracy: float
    f0_only_accuracy: float
    spectral_raw_accuracy: float
    spectral_sanitized_accuracy: float
    speaker_eer: float
    f0_gap_closed: float
    filter: cg.FrozenFilter
    history: cg.TrainHistory
    seconds: float


def training_features(corpus: ToyCorpus):
    """Analyses, normalized mel-cepstra and the pooled statistics of the training halves."""
    a_x = [analyze(w) for _, w in corpus.train_x]
    a_y = [analyze(w) for _, w in corpus.train_y]
    m_x = [sp_to_mcep(a.spectral_envelope) for a in a_x]
    m_y = [sp_to_mcep(a.spectral_envelope) for a in a_y]
    stats = FeatureStats.fit(m_x + m_y)
    return a_x, a_y, [normalize(m, stats) for m in m_x], [normalize(m, stats) for m in m_y], stats


def _features(analyses):
    return np.array([ev.utterance_features(a) for a in analyses])


def _median_log_f0(analyses):
    return float(np.median(np.concatenate([np.log(a.f0.values_hz[a.f0.voiced]) for a in analyses])))


def run_toy_experiment(seed: int = 0, iterations: int = 2000, arch: cg.Arch = cg.Arch(),
                       corpus: ToyCorpus | None = None) -> ToyResult:
    """Accuracy figures are the share of emotional test utterances that a
    style classifier labels emotional."""
    t0 = time.perf_counter()
    corpus = corpus or make_toy_corpus(seed)

    def analyse(items):
        return [analyze(w) for _, w in items]

    a_x, a_y, z_x, z_y, stats = training_features(corpus)
    cfg = cg.TrainConfig(iterations=iterations, identity_cutoff_iter=iterations // 3, seed=seed)
    model, history = cg.train(z_x, z_y, cfg, arch)
    f0_x = compute_f0_stats([a.f0 for a in a_x])
    f0_y = compute_f0_stats([a.f0 for a in a_y])
    filt = cg.freeze(model, f0_x, f0_y, stats)
    # same F0 mapping, generator forced to the identity
    f0_only = cg.FrozenFilter(cg.set_identity(model.gen_xy.copy()), arch, f0_x, f0_y, stats)

    c_x, c_y = analyse(corpus.clf_x), analyse(corpus.clf_y)
    feats = np.vstack([_features(c_x), _features(c_y)])
    labels = [EMOTIONAL] * len(c_x) + [NEUTRAL] * len(c_y)
    clf = ev.train_emotion_classifier(feats, labels)
    clf_spec = ev.train_emotion_classifier(feats[:, :N_SPECTRAL], labels)

    a_raw = analyse(corpus.test_x)
    a_san = [analyze(sanitize(w, filt)) for _, w in corpus.test_x]
    a_f0 = [analyze(sanitize(w, f0_only)) for _, w in corpus.test_x]
    f_raw, f_san, f_f0 = _features(a_raw), _features(a_san), _features(a_f0)
    truth = [EMOTIONAL] * len(a_raw)

    spk = [s for s, _ in corpus.test_x]
    e_raw = [ev.speaker_embedding(a) for a in a_raw]
    e_san = [ev.speaker_embedding(a) for a in a_san]
    genuine = [ev.speaker_score(e_raw[i], e_san[i]) for i in range(len(spk))]
    impostor = [ev.speaker_score(e_raw[i], e_san[j]) for i in range(len(spk))
                for j in range(len(spk)) if spk[i] != spk[j]]

    raw_f0 = _median_log_f0(a_raw)
    gap = raw_f0 - f0_y.mean_log_f0
    closed = (raw_f0 - _median_log_f0(a_san)) / gap if gap else 1.0

    return ToyResult(
        seed=seed,
        raw_accuracy=ev.accuracy(clf, f_raw, truth),
        sanitized_accuracy=ev.accuracy(clf, f_san, truth),
        f0_only_accuracy=ev.accuracy(clf, f_f0, truth),
        spectral_raw_accuracy=ev.accuracy(clf_spec, f_raw[:, :N_SPECTRAL], truth),
        spectral_sanitized_accuracy=ev.accuracy(clf_spec, f_san[:, :N_SPECTRAL], truth),
        speaker_eer=ev.equal_error_rate(ev.ScoreSet(genuine, impostor)),
        f0_gap_closed=float(closed),
        filter=filt, history=history, seconds=time.perf_counter() - t0)
