"""The whole workflow through the command-line front end on a tiny corpus laid
out like RAVDESS: manifest, config, train, sanitize, evaluate, bench.

    python demos/06_command_line.py [--out DIR]
"""
import argparse
import tempfile
from pathlib import Path

from sanitone import toy
from sanitone.cli import run_cli
from sanitone.pipeline import Corpus, parse_ravdess_filename, split_corpus, write_manifest
from sanitone.signal_io import write_wav

CONFIG = """\
# a small model and a short run; remove [arch] and [train] for the full defaults
[arch]
gen_channels = 16, 32
res_blocks = 2
disc_channels = 16, 32, 32
[train]
iterations = 150
identity_cutoff_iter = 50
[paths]
corpus = manifest.csv
cache = cache
filter = emotion.eflt
checkpoint = model.eckp
"""
TEXT = {1: "kids are talking by the door", 2: "dogs are sitting by the door"}


def run(*argv):
    print("$ sanitone", " ".join(str(a) for a in argv))
    code = run_cli([str(a) for a in argv])
    if code:
        raise SystemExit(code)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=tempfile.mkdtemp(prefix="sanitone-"))
    root = Path(ap.parse_args().out)
    (root / "audio").mkdir(parents=True, exist_ok=True)

    # Four actors, two sentences, angry (code 05) and neutral (01) takes.
    speakers = toy.toy_speakers(4, 0)
    entries = []
    for k in range(32):
        angry, actor, statement, rep = k % 2, k // 2 % 4 + 1, k // 8 % 2 + 1, k // 16 + 1
        path = root / "audio" / f"03-01-{5 if angry else 1:02d}-01-{statement:02d}-{rep:02d}-{actor:02d}.wav"
        write_wav(path, toy.toy_utterance(speakers[actor - 1], bool(angry), 1000 + k))
        entries.append(parse_ravdess_filename(path))
    write_manifest(split_corpus(Corpus(entries), 16, 16, seed=0), root / "manifest.csv")
    (root / "c.toml").write_text(CONFIG)

    # Transcripts stand in for an external speech recognizer's output.
    for d in ("refs", "hyp_raw", "hyp_cloud", "hyp_edge"):
        (root / d).mkdir(exist_ok=True)
        for e in entries:
            (root / d / (Path(e.path).stem + ".txt")).write_text(TEXT[e.statement_id])

    run("train", "--config", root / "c.toml", "--seed", 7)
    run("freeze", "--checkpoint", root / "model.eckp", "--float32", "--out", root / "edge.eflt")
    sample = sorted((root / "audio").iterdir())[1]
    run("sanitize", "--filter", root / "emotion.eflt", "--in", sample, "--out", root / "sanitized.wav")
    run("evaluate", "--filter", root / "emotion.eflt", "--manifest", root / "manifest.csv",
        "--references", root / "refs", "--hyp", f"raw={root / 'hyp_raw'}",
        "--hyp", f"cloud={root / 'hyp_cloud'}", "--hyp", f"edge={root / 'hyp_edge'}",
        "--out", root / "table.csv")
    run("bench", "--filter", root / "emotion.eflt", "--in", sample, "--runs", 3,
        "--out", root / "overhead.csv", "--sink", root / "uploads")
    print((root / "table.csv").read_text())
    print(f"everything is under {root}")


if __name__ == "__main__":
    main()
