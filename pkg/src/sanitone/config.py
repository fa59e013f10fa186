"""INI-style configuration: ``[section]`` headers and ``key = value`` lines.

Every key is optional. Paths are resolved against the directory holding the
configuration file.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .cyclegan import Arch, TrainConfig
from .errors import InvalidArch, ParseError, ValidationError
from .features import DEFAULT_ALPHA, DEFAULT_ORDER
from .pipeline import EmotionLabel
from .signal_io import PIPELINE_RATE
from .vocoder import VocoderConfig

PATH_KEYS = ("corpus", "cache", "filter", "checkpoint", "reports")


@dataclass(frozen=True)
class FeatureConfig:
    order: int = DEFAULT_ORDER
    alpha: float = DEFAULT_ALPHA
    energy_passthrough: bool = False


@dataclass(frozen=True)
class DataConfig:
    emotions: tuple = (EmotionLabel.ANGRY,)   # labels pooled into the X domain
    sample_rate_hz: int = PIPELINE_RATE


@dataclass(frozen=True)
class Config:
    vocoder: VocoderConfig = VocoderConfig()
    features: FeatureConfig = FeatureConfig()
    arch: Arch = Arch()
    train: TrainConfig = TrainConfig()
    data: DataConfig = DataConfig()
    paths: dict = field(default_factory=dict)

    def path(self, key: str) -> Path:
        if key not in self.paths:
            raise ValidationError(key, "path not configured")
        return self.paths[key]


def _int_tuple(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _converter(default):
    if isinstance(default, bool):
        return _bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, tuple):
        return _int_tuple
    return str


def _build(cls, section, values, extra=None):
    """Instantiate a dataclass from string values, converting by default type."""
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, text in values.items():
        if key not in known:
            raise ValidationError(key, f"unknown key in [{section}]")
        if extra and key in extra:
            conv = extra[key]
        else:
            conv = _converter(getattr(cls(), key))
        try:
            kwargs[key] = conv(text)
        except (ValueError, KeyError) as exc:
            raise ValidationError(key, f"bad value {text!r}") from exc
    try:
        return cls(**kwargs)
    except ValidationError:
        raise
    except (ValueError, InvalidArch) as exc:
        bad = next(iter(kwargs), section)
        for key in kwargs:
            if key in str(exc):
                bad = key
                break
        raise ValidationError(bad, str(exc)) from exc


def _emotions(text):
    return tuple(EmotionLabel.parse(v) for v in text.replace(",", " ").split())


def parse_config(text: str, base_dir=".") -> Config:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside any [section]", exc.lineno) from exc
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ParseError(str(exc).split(": ", 1)[-1], exc.lineno) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line", line) from exc

    sections = {"vocoder", "features", "arch", "train", "data", "paths"}
    for name in parser.sections():
        if name not in sections:
            raise ValidationError(name, "unknown section")

    def values(name):
        return dict(parser[name]) if parser.has_section(name) else {}

    vocoder = _build(VocoderConfig, "vocoder", values("vocoder"))
    feats = _build(FeatureConfig, "features", values("features"))
    arch_values = values("arch")
    arch_values.setdefault("feature_dim", str(feats.order + 1))
    arch = _build(Arch, "arch", arch_values)
    train = _build(TrainConfig, "train", values("train"))
    data = _build(DataConfig, "data", values("data"), {"emotions": _emotions})

    for key in ("lr_generator", "lr_discriminator"):
        if not getattr(train, key) > 0:
            raise ValidationError(key, "must be positive")
    if data.sample_rate_hz != PIPELINE_RATE:
        raise ValidationError("sample_rate_hz", f"the pipeline runs at {PIPELINE_RATE} Hz")
    if EmotionLabel.NEUTRAL in data.emotions or not data.emotions:
        raise ValidationError("emotions", "need at least one non-neutral label")
    if feats.order + 1 != arch.feature_dim:
        raise ValidationError("feature_dim", f"must equal order + 1 = {feats.order + 1}")
    if not 0 <= feats.alpha < 1:
        raise ValidationError("alpha", "must lie in [0, 1)")
    if feats.order < 1 or feats.order > vocoder.fft_size // 2:
        raise ValidationError("order", "must lie in [1, fft_size / 2]")
    if train.segment_frames % arch.time_multiple:
        raise ValidationError("segment_frames", f"must be a multiple of {arch.time_multiple}")
    if train.segment_frames < arch.receptive_field():
        raise ValidationError("segment_frames",
                              f"shorter than the receptive field {arch.receptive_field()}")

    paths = {}
    for key, text in values("paths").items():
        if key not in PATH_KEYS:
            raise ValidationError(key, "unknown key in [paths]")
        p = Path(os.path.expanduser(text))
        paths[key] = p if p.is_absolute() else (Path(base_dir) / p).resolve()
    return Config(vocoder, feats, arch, train, data, paths)


def load_config(path) -> Config:
    """Read and validate a configuration file; absent keys take defaults."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_config(text, Path(path).resolve().parent)
