"""Command-line front end.

Exit status is 0 on success, 1 on a usage error (synopsis on stderr) and 2
when the command itself fails.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import bench
from . import cyclegan as cg
from . import evaluation as ev
from .config import Config, load_config
from .errors import EmptyCorpus, SanitoneError
from .features import F0Stats, FeatureStats, compute_f0_stats, normalize
from .pipeline import EmotionLabel, extract_features, read_manifest, sanitize
from .signal_io import PIPELINE_RATE, read_wav, resample, write_wav
from .vocoder import VocoderConfig, analyze

SYNOPSIS = """\
usage: sanitone <command> [options]

commands:
  extract   --config C                          analyse the corpus into the feature cache
  train     --config C [--seed S] [--out F]     train and write a filter (and checkpoint)
  freeze    --checkpoint K --out F [--float32]  export a filter from a checkpoint
  sanitize  --filter F --in A --out B           sanitize one file
            --filter F --manifest M --out-dir D sanitize every manifest entry
  evaluate  --filter F --manifest M --references R --hyp TAG=DIR ... --out CSV
  bench     --filter F --in A [--runs N] [--mode baseline|filtered|both] --out CSV
  stats     --in A [--out CSV] | --filter F     per-frame statistics or filter summary
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser():
    p = _Parser(prog="sanitone", add_help=False)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("extract", add_help=False)
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("train", add_help=False)
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--checkpoint")

    s = sub.add_parser("freeze", add_help=False)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--float32", action="store_true")
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("sanitize", add_help=False)
    s.add_argument("--filter", required=True)
    s.add_argument("--in", dest="input")
    s.add_argument("--out")
    s.add_argument("--manifest")
    s.add_argument("--out-dir")
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("evaluate", add_help=False)
    s.add_argument("--filter", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--references", required=True)
    s.add_argument("--hyp", action="append", default=[], metavar="TAG=DIR")
    s.add_argument("--out", required=True)
    s.add_argument("--confusion")
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("bench", add_help=False)
    s.add_argument("--filter", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--runs", type=int, default=5)
    s.add_argument("--mode", choices=("baseline", "filtered", "both"), default="both")
    s.add_argument("--out", required=True)
    s.add_argument("--sink")
    s.add_argument("--upload-url")
    s.add_argument("--meter")
    s.add_argument("--energy-out")
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("stats", add_help=False)
    s.add_argument("--in", dest="input")
    s.add_argument("--filter")
    s.add_argument("--out")
    s.add_argument("--seed", type=int, default=0)
    return p


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _domains(cfg: Config, corpus):
    entries = list(corpus)
    if any(e.role == "train" for e in entries):
        entries = [e for e in entries if e.role == "train"]
    x = [e for e in entries if e.emotion in cfg.data.emotions]
    y = [e for e in entries if e.emotion == EmotionLabel.NEUTRAL]
    return x, y


def _extract(cfg: Config, entries):
    cache = cfg.paths.get("cache")
    feats = extract_features(entries, cfg.vocoder, cfg.features.order, cfg.features.alpha,
                             cache_dir=cache)
    for path, msg in feats.errors.items():
        print(f"skipped {path}: {msg}", file=sys.stderr)
    return feats


def cmd_extract(args):
    cfg = load_config(args.config)
    corpus = read_manifest(cfg.path("corpus"))
    feats = _extract(cfg, corpus)
    print(f"{len(feats)} analysed, {len(feats.errors)} failed")
    return 0


def _checkpoint_extra(f0_src: F0Stats, f0_tgt: F0Stats, stats: FeatureStats, cfg: Config):
    return {"f0_source": f0_src.to_dict(), "f0_target": f0_tgt.to_dict(),
            "feature_stats": stats.to_dict(), "vocoder": asdict(cfg.vocoder),
            "mcep": {"order": cfg.features.order, "alpha": cfg.features.alpha,
                     "energy_passthrough": cfg.features.energy_passthrough},
            "train": asdict(cfg.train)}


def _freeze_from_extra(model, extra):
    return cg.freeze(model, F0Stats.from_dict(extra["f0_source"]),
                     F0Stats.from_dict(extra["f0_target"]),
                     FeatureStats.from_dict(extra["feature_stats"]),
                     VocoderConfig(**extra["vocoder"]), int(extra["mcep"]["order"]),
                     float(extra["mcep"]["alpha"]), bool(extra["mcep"]["energy_passthrough"]))


def cmd_train(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    x, y = _domains(cfg, read_manifest(cfg.path("corpus")))
    feats = _extract(cfg, x + y)
    x = [e for e in x if e.path in feats.mceps]
    y = [e for e in y if e.path in feats.mceps]
    if not x or not y:
        raise EmptyCorpus("need analysed utterances in both domains")
    mx = [feats.mceps[e.path] for e in x]
    my = [feats.mceps[e.path] for e in y]
    stats = FeatureStats.fit(mx + my)
    f0_src = compute_f0_stats([feats.analyses[e.path].f0 for e in x])
    f0_tgt = compute_f0_stats([feats.analyses[e.path].f0 for e in y])
    model, history = cg.train([normalize(m, stats) for m in mx], [normalize(m, stats) for m in my],
                              cfg.train, cfg.arch)
    extra = _checkpoint_extra(f0_src, f0_tgt, stats, cfg)
    ckpt = args.checkpoint or cfg.paths.get("checkpoint")
    if ckpt:
        Path(ckpt).write_bytes(cg.dumps_model(model, extra))
    out = args.out or cfg.path("filter")
    cg.save_filter(_freeze_from_extra(model, extra), out)
    if history.padded:
        print(f"{len(history.padded)} utterances shorter than a segment were zero-padded",
              file=sys.stderr)
    last = history.losses[-1].total_g if history.losses else float("nan")
    print(f"trained {len(history)} iterations, final generator loss {last:.4f}; wrote {out}")
    return 0


def cmd_freeze(args):
    model, extra = cg.loads_model(Path(args.checkpoint).read_bytes())
    f = _freeze_from_extra(model, extra)
    if args.float32:
        f = f.astype(np.float32)
    cg.save_filter(f, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_sanitize(args):
    single = bool(args.input and args.out)
    if not single and not (args.manifest and args.out_dir):
        raise UsageError("sanitize needs --in/--out or --manifest/--out-dir")
    f = cg.load_filter(args.filter)
    if single:
        write_wav(args.out, sanitize(read_wav(args.input), f, seed=args.seed))
        return 0
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for e in read_manifest(args.manifest):
        write_wav(out_dir / Path(e.path).name, sanitize(read_wav(e.path), f, seed=args.seed))
    return 0


def cmd_evaluate(args):
    hyps = []
    for item in args.hyp:
        tag, sep, directory = item.partition("=")
        if not sep or not tag or not directory:
            raise UsageError(f"--hyp expects TAG=DIR, got {item!r}")
        hyps.append((tag, directory))
    if not hyps:
        raise UsageError("evaluate needs at least one --hyp TAG=DIR")
    f = cg.load_filter(args.filter)
    entries = list(read_manifest(args.manifest))
    train = [e for e in entries if e.role == "train"] or entries
    test = [e for e in entries if e.role == "test"] or entries

    def analyse(w):
        return analyze(resample(w, PIPELINE_RATE), f.vocoder)

    raw_train = [analyse(read_wav(e.path)) for e in train]
    clf = ev.train_emotion_classifier([ev.utterance_features(a) for a in raw_train],
                                      [int(e.emotion) for e in train])
    keys = [e.path for e in test]
    refs = ev.read_transcripts(args.references, keys)
    waves = [read_wav(e.path) for e in test]
    raw = [(e.path, e.actor_id, int(e.emotion), analyse(w)) for e, w in zip(test, waves)]
    filters = {"edge": f.astype(np.float32)}
    reports = []
    for tag, directory in hyps:
        hyp = ev.read_transcripts(directory, keys)
        if tag == "raw":
            san = raw
        else:
            filt = filters.get(tag, f)
            san = [(e.path, e.actor_id, int(e.emotion), analyse(sanitize(w, filt, seed=args.seed)))
                   for e, w in zip(test, waves)]
        reports.append(ev.evaluate_corpus(raw, san, refs, hyp, clf, platform=tag))
    ev.write_report(reports, args.out)
    if args.confusion:
        names = {int(c): EmotionLabel(c).name.lower() for c in range(8)}
        for r in reports:
            path = Path(args.confusion)
            if len(reports) > 1:
                path = path.with_name(f"{path.stem}_{r.platform}{path.suffix}")
            ev.write_confusion(r, path, names)
    for r in reports:
        print(f"{r.platform}: wer={r.wer:.4f} eer={r.eer:.4f} emotion_accuracy={r.emotion_accuracy:.4f}")
    return 0


def cmd_bench(args):
    f = cg.load_filter(args.filter)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    sink = bench.Sink(args.sink, args.upload_url)
    modes = ("baseline", "filtered") if args.mode == "both" else (args.mode,)
    reports = [bench.measure_overhead(args.input, f, m, args.runs, sink, args.seed) for m in modes]
    bench.write_report_csv(reports, args.out)
    if args.meter:
        times, watts = bench.read_meter_csv(args.meter)
        rows = [row for r in reports for row in bench.stage_energy(r, times, watts)]
        bench.write_energy_csv(rows, args.energy_out or Path(args.out).with_suffix(".energy.csv"))
    for r in reports:
        med = r.summary()["total"][0]
        print(f"{r.mode}: median total {1000 * med:.1f} ms over {len(r.runs)} runs")
    return 0


def cmd_stats(args):
    if args.filter:
        f = cg.load_filter(args.filter)
        summary = f.header()
        summary["parameters"] = f.generator.n_params()
        print(json.dumps(summary, indent=2, sort_keys=True))
        return 0
    if not args.input:
        raise UsageError("stats needs --in or --filter")
    s = ev.spectrogram_stats(read_wav(args.input))
    period = s.f0.frame_period_ms
    lines = ["time_ms,peak_amplitude,intensity_db,f0_hz"]
    lines += [f"{i * period:.1f},{p:.6f},{d:.3f},{v:.3f}"
              for i, (p, d, v) in enumerate(zip(s.peak_amplitude, s.intensity_db, s.f0.values_hz))]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"extract": cmd_extract, "train": cmd_train, "freeze": cmd_freeze,
            "sanitize": cmd_sanitize, "evaluate": cmd_evaluate, "bench": cmd_bench,
            "stats": cmd_stats}


def run_cli(argv) -> int:
    try:
        args = _parser().parse_args(list(argv))
        if args.command is None:
            raise UsageError("no command given")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sanitone: {exc}\n\n{SYNOPSIS}", file=sys.stderr)
        return 1
    except (SanitoneError, OSError, ValueError, KeyError) as exc:
        print(f"sanitone: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
