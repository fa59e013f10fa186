"""Privacy and utility metrics for sanitized speech."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import log_softmax

from . import nn
from .errors import (AlignmentError, DegenerateTrainingSet, EmptyReference, EmptyScores,
                     EmptySignal, TooFewVoicedFrames)
from .features import DEFAULT_ALPHA, DEFAULT_ORDER, compute_f0_stats, sp_to_mcep
from .signal_io import Waveform
from .vocoder import AnalysisResult, F0Track, VocoderConfig, estimate_f0

# ---------------------------------------------------------------------------
# word error rate
# ---------------------------------------------------------------------------


def edit_counts(reference, hypothesis):
    """Minimum unit-cost alignment; returns (substitutions, deletions, insertions)."""
    ref, hyp = list(reference), list(hypothesis)
    n, m = len(ref), len(hyp)
    # each cell holds (cost, subs, dels, ins); ties resolved by fixed preference order
    prev = [(j, 0, 0, j) for j in range(m + 1)]
    for i in range(1, n + 1):
        cur = [(i, 0, i, 0)]
        for j in range(1, m + 1):
            c, s, d, k = prev[j - 1]
            sub = (c + 1, s + 1, d, k) if ref[i - 1] != hyp[j - 1] else (c, s, d, k)
            c, s, d, k = prev[j]
            dele = (c + 1, s, d + 1, k)
            c, s, d, k = cur[j - 1]
            ins = (c + 1, s, d, k + 1)
            cur.append(min(sub, dele, ins, key=lambda t: t[0]))
        prev = cur
    _, s, d, k = prev[m]
    return s, d, k


def tokenize(text: str):
    return text.casefold().split()


def word_error_rate(reference, hypothesis) -> float:
    """(S + D + I) / N. Strings are case-folded and split on whitespace."""
    if isinstance(reference, str):
        reference = tokenize(reference)
    if isinstance(hypothesis, str):
        hypothesis = tokenize(hypothesis)
    if len(reference) == 0:
        raise EmptyReference("reference transcript has no tokens")
    return sum(edit_counts(reference, hypothesis)) / len(reference)


def corpus_word_error_rate(pairs) -> float:
    """Pooled WER: total edits over total reference words."""
    edits = words = 0
    for ref, hyp in pairs:
        ref, hyp = tokenize(ref), tokenize(hyp)
        edits += sum(edit_counts(ref, hyp))
        words += len(ref)
    if words == 0:
        raise EmptyReference("no reference tokens")
    return edits / words


# ---------------------------------------------------------------------------
# equal error rate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "genuine", np.asarray(self.genuine, dtype=np.float64).ravel())
        object.__setattr__(self, "impostor", np.asarray(self.impostor, dtype=np.float64).ravel())


def error_rates(s: ScoreSet):
    """FAR and FRR for "accept when score >= t" at every distinct score,
    thresholds in decreasing order, bracketed by +inf and -inf."""
    g, i = np.sort(s.genuine), np.sort(s.impostor)
    t = np.concatenate([[np.inf], np.unique(np.concatenate([g, i]))[::-1], [-np.inf]])
    far = (i.size - np.searchsorted(i, t, side="left")) / i.size
    frr = np.searchsorted(g, t, side="left") / g.size
    return t, far, frr


def equal_error_rate(s: ScoreSet) -> float:
    """Point where FAR and FRR cross, interpolated linearly between the two
    thresholds that bracket the crossing."""
    if s.genuine.size == 0 or s.impostor.size == 0:
        raise EmptyScores("need genuine and impostor scores")
    _, far, frr = error_rates(s)
    diff = frr - far          # starts at 1, ends at -1, non-increasing
    k = int(np.argmax(diff <= 0))
    if diff[k] == 0:
        return float(far[k])
    d0, d1 = diff[k - 1], diff[k]
    u = d0 / (d0 - d1)
    return float(far[k - 1] + u * (far[k] - far[k - 1]))


# ---------------------------------------------------------------------------
# utterance statistics, speaker stand-in
# ---------------------------------------------------------------------------

def utterance_features(a: AnalysisResult, order: int = DEFAULT_ORDER,
                       alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Fixed-length summary: mean and std of the mel-cepstrum over voiced
    frames (all frames if none are voiced), log-F0 mean and std, voiced share."""
    mc = sp_to_mcep(a.spectral_envelope, order, alpha).coeffs
    voiced = a.f0.voiced
    frames = mc[voiced] if voiced.sum() >= 2 else mc
    if voiced.sum() >= 2:
        lf = np.log(a.f0.values_hz[voiced])
        f0 = [lf.mean(), lf.std()]
    else:
        f0 = [0.0, 0.0]
    return np.concatenate([frames.mean(axis=0), frames.std(axis=0), f0, [voiced.mean()]])


MIN_VOICED_FRAMES = 10
_LOG_F0_REF = np.log(100.0)


def speaker_embedding(a: AnalysisResult, order: int = DEFAULT_ORDER,
                      alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Voiced-frame mean of c_1..c_M, liftered by coefficient index, plus
    centred log-F0 statistics.

    The lifter keeps the low-order tilt terms, which every voice shares, from
    dominating the cosine score.
    """
    voiced = a.f0.voiced
    if voiced.sum() < MIN_VOICED_FRAMES:
        raise TooFewVoicedFrames(f"{int(voiced.sum())} voiced frames, need {MIN_VOICED_FRAMES}")
    mc = sp_to_mcep(a.spectral_envelope[voiced], order, alpha).coeffs
    stats = compute_f0_stats([a.f0])
    lifter = np.arange(1, mc.shape[1])
    return np.concatenate([mc[:, 1:].mean(axis=0) * lifter,
                           [stats.mean_log_f0 - _LOG_F0_REF, stats.std_log_f0]])


def speaker_score(e1: np.ndarray, e2: np.ndarray) -> float:
    """Cosine similarity, clipped into [-1, 1]."""
    e1, e2 = np.asarray(e1, dtype=np.float64), np.asarray(e2, dtype=np.float64)
    den = np.linalg.norm(e1) * np.linalg.norm(e2)
    if den == 0:
        return 0.0
    return float(np.clip(e1 @ e2 / den, -1.0, 1.0))


# ---------------------------------------------------------------------------
# emotion classifier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassifierConfig:
    hidden: int = 16
    epochs: int = 600
    lr: float = 0.01
    weight_decay: float = 1e-3
    seed: int = 0


@dataclass
class EmotionClassifier:
    net: nn.Network
    classes: tuple          # label codes in output order
    mean: np.ndarray
    std: np.ndarray

    def probabilities(self, features) -> np.ndarray:
        z = (np.atleast_2d(features) - self.mean) / self.std
        return np.exp(log_softmax(self.net(z), axis=1))


def _mlp(n_in, n_out, hidden, seed):
    if hidden:
        layers = [("hidden", nn.Linear(n_in, hidden)), ("act", nn.Tanh()),
                  ("out", nn.Linear(hidden, n_out))]
    else:
        layers = [("out", nn.Linear(n_in, n_out))]
    return nn.Network(layers, seed=seed)


def train_emotion_classifier(features, labels, cfg: ClassifierConfig = ClassifierConfig()):
    """Softmax classifier over standardized utterance statistics, trained
    full-batch with Adam on cross-entropy plus an L2 penalty."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = [int(v) for v in labels]
    if x.shape[0] != len(labels):
        raise DegenerateTrainingSet("features and labels differ in length")
    classes, counts = np.unique(labels, return_counts=True)
    if np.sum(counts >= 2) < 2:
        raise DegenerateTrainingSet("need at least two classes with two examples each")
    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), 1e-8)
    z = (x - mean) / std
    index = {c: k for k, c in enumerate(classes.tolist())}
    target = np.zeros((len(labels), len(classes)))
    target[np.arange(len(labels)), [index[v] for v in labels]] = 1.0
    net = _mlp(x.shape[1], len(classes), cfg.hidden, cfg.seed)
    state = nn.AdamState.zeros_like(net.params)
    for _ in range(cfg.epochs):
        logits, cache = net.forward(z)
        p = np.exp(log_softmax(logits, axis=1))
        _, grads = net.backward(cache, (p - target) / len(labels))
        for k, g in grads.items():
            if k.endswith("weight"):
                g += cfg.weight_decay * net.params[k]
        nn.adam_step(net.params, grads, state, cfg.lr)
    return EmotionClassifier(net, tuple(classes.tolist()), mean, std)


def classify_emotion(clf: EmotionClassifier, features):
    """Return ``(labels, probabilities)`` for one or many feature rows."""
    p = clf.probabilities(features)
    labels = np.asarray(clf.classes)[np.argmax(p, axis=1)]
    return labels, p


def accuracy(clf: EmotionClassifier, features, labels) -> float:
    pred, _ = classify_emotion(clf, features)
    return float(np.mean(pred == np.asarray(labels)))


def confusion_matrix(truth, predicted, classes):
    index = {c: k for k, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(truth, predicted):
        cm[index[int(t)], index[int(p)]] += 1
    return cm


# ---------------------------------------------------------------------------
# spectrogram statistics
# ---------------------------------------------------------------------------

INTENSITY_REF = 1e-8


@dataclass(frozen=True, eq=False)
class SpectroStats:
    peak_amplitude: np.ndarray
    intensity_db: np.ndarray
    f0: F0Track


def spectrogram_stats(w: Waveform, cfg: VocoderConfig = VocoderConfig()) -> SpectroStats:
    """Per-frame peak |amplitude|, intensity in dB re 1e-8 (floored at 0 dB)
    and the F0 contour, on the vocoder frame grid."""
    if len(w) == 0:
        raise EmptySignal("no samples")
    fs = w.sample_rate_hz
    hop = cfg.hop(fs)
    n_frames = cfg.n_frames(len(w), fs)
    half = int(round(hop))
    centers = np.round(np.arange(n_frames) * hop).astype(int)
    padded = np.pad(w.samples, (half, half + 1))
    idx = centers[:, None] + np.arange(2 * half + 1)[None, :]
    frames = padded[idx]
    peak = np.abs(frames).max(axis=1)
    ms = np.mean(frames * frames, axis=1)
    intensity = 10 * np.log10(np.maximum(ms, INTENSITY_REF) / INTENSITY_REF)
    if len(w) >= 2 * hop:
        f0 = estimate_f0(w, cfg)
    else:
        f0 = F0Track(np.zeros(n_frames), cfg.frame_period_ms)
    return SpectroStats(peak, intensity, f0)


# ---------------------------------------------------------------------------
# corpus-level report
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    wer: float
    eer: float
    emotion_accuracy: float
    confusion: np.ndarray
    classes: tuple
    platform: str = "desk"
    extra: dict = field(default_factory=dict)

    def rows(self):
        rows = [("wer", self.platform, self.wer), ("eer", self.platform, self.eer),
                ("emotion_accuracy", self.platform, self.emotion_accuracy)]
        rows += [(k, self.platform, v) for k, v in sorted(self.extra.items())]
        return rows


def read_transcripts(directory, keys):
    """Map each key (an audio path or stem) to the text of ``<stem>.txt``.

    Raises AlignmentError naming the first missing file.
    """
    out = {}
    for key in keys:
        path = Path(directory) / (Path(key).stem + ".txt")
        if not path.exists():
            raise AlignmentError(f"missing transcript {path}")
        out[key] = path.read_text(encoding="utf-8")
    return out


def evaluate_corpus(raw, sanitized, reference_text, hypothesis_text, classifier,
                    platform: str = "desk") -> EvalReport:
    """Aggregate utility and privacy metrics.

    ``raw`` and ``sanitized`` are lists of ``(key, speaker, emotion, analysis)``
    aligned one-to-one. ``reference_text`` and ``hypothesis_text`` map keys to
    transcripts of the sanitized audio. Genuine speaker trials pair each raw
    utterance with its own sanitized version; impostor trials pair it with
    sanitized utterances of other speakers.
    """
    if len(raw) != len(sanitized):
        raise AlignmentError(f"{len(raw)} raw entries vs {len(sanitized)} sanitized")
    for r, s in zip(raw, sanitized):
        if r[0] != s[0]:
            raise AlignmentError(f"entry {r[0]} is paired with {s[0]}")
    for key, *_ in raw:
        if key not in reference_text:
            raise AlignmentError(f"no reference transcript for {key}")
        if key not in hypothesis_text:
            raise AlignmentError(f"no hypothesis transcript for {key}")
    wer = corpus_word_error_rate((reference_text[k], hypothesis_text[k]) for k, *_ in raw)

    emb_raw = [speaker_embedding(a) for *_, a in raw]
    emb_san = [speaker_embedding(a) for *_, a in sanitized]
    genuine, impostor = [], []
    for i, (_, spk_i, _, _) in enumerate(raw):
        for j, (_, spk_j, _, _) in enumerate(sanitized):
            if i == j:
                genuine.append(speaker_score(emb_raw[i], emb_san[j]))
            elif spk_i != spk_j:
                impostor.append(speaker_score(emb_raw[i], emb_san[j]))
    eer = equal_error_rate(ScoreSet(genuine, impostor)) if impostor else 0.0

    feats = np.array([utterance_features(a) for *_, a in sanitized])
    truth = [int(e) for _, _, e, _ in sanitized]
    pred, _ = classify_emotion(classifier, feats)
    classes = tuple(sorted(set(classifier.classes) | set(truth)))
    cm = confusion_matrix(truth, pred, classes)
    return EvalReport(wer, eer, float(np.trace(cm) / cm.sum()), cm, classes, platform)


REPORT_COLUMNS = ("metric", "platform", "value")


def write_report(reports, path) -> None:
    """One CSV for any number of platform-tagged reports."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            for metric, platform, value in r.rows():
                w.writerow([metric, platform, f"{value:.6g}"])


def write_confusion(report: EvalReport, path, names=None) -> None:
    names = names or {c: str(c) for c in report.classes}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["platform", "true"] + [names[c] for c in report.classes])
        for c, row in zip(report.classes, report.confusion):
            w.writerow([report.platform, names[c]] + row.tolist())
