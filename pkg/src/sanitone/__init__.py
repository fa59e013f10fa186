"""Emotion sanitization of speech: vocoder analysis, a cycle-consistent
mel-cepstral filter, and the metrics used to judge it."""

from .errors import SanitoneError
from .signal_io import Waveform, read_wav, resample, write_wav
from .vocoder import AnalysisResult, F0Track, VocoderConfig, analyze, synthesize
from .features import F0Stats, FeatureStats, McepSequence, mcep_to_sp, sp_to_mcep
from .cyclegan import Arch, FrozenFilter, TrainConfig, build_model, load_filter, save_filter, train
from .pipeline import sanitize

__all__ = [
    "SanitoneError", "Waveform", "read_wav", "write_wav", "resample",
    "AnalysisResult", "F0Track", "VocoderConfig", "analyze", "synthesize",
    "F0Stats", "FeatureStats", "McepSequence", "sp_to_mcep", "mcep_to_sp",
    "Arch", "FrozenFilter", "TrainConfig", "build_model", "train", "load_filter", "save_filter",
    "sanitize",
]
